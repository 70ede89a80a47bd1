"""Column pool, restricted master LP and the proximally regularized dual RMP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from .lp_core import LpProblem, solve_lp
from .pricing import DualPoint, PricingResult
from .uc_model import Schedule, UcInstance, linking_contribution, schedule_cost

ARTIFICIAL_FACTOR = 1e4


class ColumnIntegrityError(ValueError):
    pass


@dataclass
class Column:
    gen: int
    cost: float
    load: np.ndarray
    reserve: np.ndarray
    iteration: int
    schedule: Schedule

    @property
    def contribution(self) -> np.ndarray:
        return np.concatenate([self.load, self.reserve])


@dataclass
class ColumnPool:
    n_G: int
    columns: list = field(default_factory=list)  # per generator list of Column
    keys: list = field(default_factory=list)

    def __post_init__(self):
        if not self.columns:
            self.columns = [[] for _ in range(self.n_G)]
            self.keys = [set() for _ in range(self.n_G)]

    def __len__(self):
        return sum(len(c) for c in self.columns)

    def all(self):
        for s, cols in enumerate(self.columns):
            for col in cols:
                yield s, col


def make_column(instance: UcInstance, s: int, result: PricingResult, iteration: int = 0) -> Column:
    gen = instance.generators[s]
    return Column(s, schedule_cost(gen, result.schedule), np.asarray(result.load, dtype=float),
                  np.asarray(result.reserve, dtype=float), iteration, result.schedule)


def add_column(instance: UcInstance, pool: ColumnPool, col: Column) -> int:
    gen = instance.generators[col.gen]
    load, reserve = linking_contribution(gen, col.schedule)
    if not (np.allclose(load, col.load, atol=1e-9) and np.allclose(reserve, col.reserve, atol=1e-9)):
        raise ColumnIntegrityError("column contributions do not match its schedule")
    if abs(schedule_cost(gen, col.schedule) - col.cost) > 1e-9 * (1 + abs(col.cost)) or col.cost < 0:
        raise ColumnIntegrityError("column cost does not match its schedule")
    key = col.schedule.key()
    if key in pool.keys[col.gen]:
        return 0
    pool.keys[col.gen].add(key)
    pool.columns[col.gen].append(col)
    return 1


def add_columns(instance: UcInstance, pool: ColumnPool, results, iteration: int = 0) -> int:
    """Insert one column per pricing result (results indexed by generator)."""
    added = 0
    for s, res in enumerate(results):
        added += add_column(instance, pool, make_column(instance, s, res, iteration))
    return added


@dataclass
class MasterSolution:
    status: str
    weights: list  # per generator array of column weights
    duals: DualPoint
    objective: float
    artificial: np.ndarray | None = None
    kkt: float = 0.0

    @property
    def sigma(self) -> np.ndarray:
        return self.duals.sigma


def _pool_matrices(instance: UcInstance, pool: ColumnPool):
    cols = list(pool.all())
    if any(len(c) == 0 for c in pool.columns):
        raise ValueError("every generator needs at least one column")
    G = np.array([col.contribution for _, col in cols])  # (n_cols, 2T)
    cost = np.array([col.cost for _, col in cols])
    owner = np.array([s for s, _ in cols])
    return G, cost, owner


def artificial_cost(instance: UcInstance) -> float:
    return ARTIFICIAL_FACTOR * max(g.marginal_cost for g in instance.generators) * instance.capacity


def solve_rmp(instance: UcInstance, pool: ColumnPool) -> MasterSolution:
    """LP restricted master with one penalized artificial per linking row."""
    G, cost, owner = _pool_matrices(instance, pool)
    n_cols, m = G.shape
    nG = instance.n_G
    big_m = artificial_cost(instance)
    c = np.concatenate([cost, np.full(m, big_m)])
    link = sp.hstack([sp.csr_matrix(G.T), sp.identity(m)])
    conv = sp.hstack([sp.csr_matrix((np.ones(n_cols), (owner, np.arange(n_cols))), shape=(nG, n_cols)),
                      sp.csr_matrix((nG, m))])
    A = sp.vstack([link, conv]).tocsr()
    senses = np.array([">"] * m + ["="] * nG)
    rhs = np.concatenate([instance.linking_rhs(), np.ones(nG)])
    sol = solve_lp(LpProblem(c, A, senses, rhs, np.zeros(n_cols + m), np.full(n_cols + m, np.inf)))
    if not sol.optimal:
        raise RuntimeError(f"RMP solve failed: {sol.status}")
    weights = [sol.x[:n_cols][owner == s] for s in range(nG)]
    y = np.maximum(sol.duals[:m], 0.0)
    return MasterSolution("optimal", weights, DualPoint.from_vector(y, sol.duals[m:].copy()), sol.objective,
                          artificial=sol.x[n_cols:])


def regularized_objective(instance, y: np.ndarray, sigma: np.ndarray, center: np.ndarray, mu: float) -> float:
    return float(instance.linking_rhs() @ y + sigma.sum() - 0.5 * mu * np.sum((y - center) ** 2))


def solve_regularized_rmp(instance: UcInstance, pool: ColumnPool, center, mu: float,
                          tol: float = 1e-6) -> MasterSolution:
    """Maximize a^T y + sum sigma - mu/2 |y - center|^2 over y >= 0 and the
    column cuts sigma_s <= c_si - y^T A_s x_si.

    Solved as a convex QP by an interior-point method; the column weights are
    the multipliers of the cuts.  No artificial columns are needed since the
    proximal term keeps the problem bounded.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    center = np.asarray(center.vector if isinstance(center, DualPoint) else center, dtype=float)
    if np.any(center < 0) or not np.all(np.isfinite(center)):
        raise ValueError("regularization centre must be finite and nonnegative")
    G, cost, owner = _pool_matrices(instance, pool)
    n_cols, m = G.shape
    nG = instance.n_G
    a = instance.linking_rhs()
    # solve for the step u with y = center + ds * u and objective / obj_scale;
    # ds shrinks with large mu so the proximal term stays O(1)
    y_scale = max(float(np.max(center, initial=0.0)), max(g.marginal_cost for g in instance.generators), 1.0)
    obj_scale = max(float(np.max(a, initial=0.0)), 1.0) * y_scale
    ds = min(y_scale, math.sqrt(obj_scale / mu))
    mu_s = mu * ds ** 2 / obj_scale
    P = sp.diags(np.concatenate([np.full(m, mu_s), np.zeros(nG)])).tocsc()
    q = np.concatenate([-a * ds / obj_scale, -np.ones(nG)])
    cut = sp.hstack([sp.csr_matrix(G * (ds / obj_scale)),
                     sp.csr_matrix((np.ones(n_cols), (np.arange(n_cols), owner)), shape=(n_cols, nG))])
    # y >= 0 rows, scaled by ds / y_scale to keep their right-hand side O(1)
    nonneg = sp.hstack([-(ds / y_scale) * sp.identity(m), sp.csr_matrix((m, nG))])
    A = sp.vstack([cut, nonneg]).tocsc()
    b = np.concatenate([(cost - G @ center) / obj_scale, center / y_scale])
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-11
    settings.tol_gap_rel = 1e-11
    settings.tol_feas = 1e-11
    settings.tol_ktratio = 1e-9
    settings.max_iter = 400
    solver = clarabel.DefaultSolver(P, q, A, b, [clarabel.NonnegativeConeT(n_cols + m)], settings)
    res = solver.solve()
    status = str(res.status)
    if not ("Solved" in status):
        return MasterSolution("failed:" + status, [], DualPoint.from_vector(center), math.nan)
    x = np.asarray(res.x)
    z = np.asarray(res.z)
    y = np.maximum(center + ds * x[:m], 0.0)
    weights_all = np.maximum(z[:n_cols], 0.0)
    # sigma_s is the tightest cut of generator s at y
    reduced = cost - G @ y
    sigma = np.array([reduced[owner == s].min() for s in range(nG)])
    weights = [weights_all[owner == s] for s in range(nG)]
    # scaled KKT residuals: stationarity, cone complementarity, weight simplices
    stat = float(np.max(np.abs(P @ x + q + A.T @ z)))
    comp = float(np.max(np.abs(np.asarray(res.s) * z)))
    kkt_w = float(max(abs(w.sum() - 1.0) for w in weights))
    kkt = max(stat, comp, kkt_w)
    status = "optimal" if kkt <= tol else "inaccurate"
    obj = regularized_objective(instance, y, sigma, center, mu)
    return MasterSolution(status, weights, DualPoint.from_vector(y, sigma), obj, kkt=kkt)
