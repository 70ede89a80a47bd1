"""LP/MILP kernel: HiGHS-backed LP solves, a best-first branch and bound, and
the extensive-form unit-commitment model."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .uc_model import Schedule, UcInstance, UcSolution, evaluate_cost

FEAS_TOL = 1e-7
OPT_TOL = 1e-7

_STATUS = {0: "optimal", 1: "iteration-limit", 2: "infeasible", 3: "unbounded", 4: "numerical"}


@dataclass
class LpProblem:
    """min c x  s.t.  A x (sense) rhs,  lb <= x <= ub.  Senses are '<', '>' or '='."""

    c: np.ndarray
    A: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.senses = np.asarray(self.senses, dtype="<U1")
        self.rhs = np.asarray(self.rhs, dtype=float)
        n = len(self.c)
        self.lb = np.full(n, 0.0) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        m = self.A.shape[0]
        if self.A.shape[1] != n or len(self.senses) != m or len(self.rhs) != m:
            raise ValueError("inconsistent LP dimensions")
        if len(self.lb) != n or len(self.ub) != n:
            raise ValueError("bound vectors have wrong length")
        if not set(self.senses.tolist()) <= {"<", ">", "="}:
            raise ValueError("row senses must be '<', '>' or '='")
        for arr in (self.c, self.A.data, self.rhs):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data contains NaN/Inf")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ValueError("NaN bound")

    @property
    def shape(self):
        return self.A.shape

    def with_bounds(self, lb, ub) -> "LpProblem":
        return LpProblem(self.c, self.A, self.senses, self.rhs, lb, ub)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class MilpResult:
    status: str  # optimal | infeasible | time-limit | node-limit | unbounded
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    bound_history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        if self.x is None or not math.isfinite(self.bound):
            return math.inf
        return (self.objective - self.bound) / max(abs(self.objective), 1e-12)


def solve_lp(problem: LpProblem, time_limit: float | None = None) -> LpSolution:
    """Solve an LP; row duals follow the convention c - A^T y = reduced costs
    (so duals of '>' rows are >= 0 and of '<' rows <= 0 at optimality)."""
    A, s = problem.A, problem.senses
    le, ge, eq = s == "<", s == ">", s == "="
    ub_rows = np.flatnonzero(le | ge)
    sign = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags(sign) @ A[ub_rows] if len(ub_rows) else None
    b_ub = sign * problem.rhs[ub_rows] if len(ub_rows) else None
    eq_rows = np.flatnonzero(eq)
    A_eq = A[eq_rows] if len(eq_rows) else None
    b_eq = problem.rhs[eq_rows] if len(eq_rows) else None
    bounds = np.column_stack([problem.lb, problem.ub])
    options = {"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": OPT_TOL}
    if time_limit is not None:
        options["time_limit"] = max(float(time_limit), 1e-3)
    # dual simplex first; badly scaled masters (big-M artificials) can leave it
    # without a verdict, and interior point plus crossover then usually succeeds
    for method in ("highs-ds", "highs-ipm"):
        res = linprog(problem.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                      method=method, options=options)
        status = _STATUS.get(res.status, "numerical")
        if status != "numerical":
            break
    if status != "optimal":
        return LpSolution(status)
    y = np.zeros(A.shape[0])
    if len(ub_rows):
        y[ub_rows] = sign * res.ineqlin.marginals
    if len(eq_rows):
        y[eq_rows] = res.eqlin.marginals
    d = problem.c - A.T @ y
    return LpSolution("optimal", np.asarray(res.x), y, d, float(res.fun))


def kkt_residuals(problem: LpProblem, sol: LpSolution) -> dict:
    """Primal, dual and complementarity residuals of an optimal LP solution."""
    x, y, d = sol.x, sol.duals, sol.reduced_costs
    Ax = problem.A @ x
    s = problem.senses
    scale = 1.0 + np.abs(problem.rhs)
    viol = np.where(s == "<", Ax - problem.rhs, np.where(s == ">", problem.rhs - Ax, np.abs(Ax - problem.rhs)))
    primal = max(float(np.max(np.maximum(viol, 0) / scale, initial=0.0)),
                 float(np.max(np.maximum(problem.lb - x, 0), initial=0.0)),
                 float(np.max(np.maximum(x - problem.ub, 0), initial=0.0)))
    # sign of row duals, sign of reduced costs at bounds
    dual = float(np.max(np.concatenate([np.maximum(-y[s == ">"], 0), np.maximum(y[s == "<"], 0), [0.0]])))
    at_lb = np.isclose(x, problem.lb, atol=1e-7, rtol=0)
    at_ub = np.isclose(x, problem.ub, atol=1e-7, rtol=0)
    dscale = 1.0 + np.abs(problem.c)
    d_bad = np.where(at_lb & at_ub, 0.0, np.where(at_lb, np.maximum(-d, 0), np.where(at_ub, np.maximum(d, 0), np.abs(d))))
    dual = max(dual, float(np.max(d_bad / dscale, initial=0.0)))
    slack = np.where(s == "=", 0.0, problem.rhs - Ax)
    comp = float(np.max(np.abs(y * slack) / (1.0 + np.abs(sol.objective)), initial=0.0))
    fin_lb = np.where(np.isfinite(problem.lb), problem.lb, 0.0)
    fin_ub = np.where(np.isfinite(problem.ub), problem.ub, 0.0)
    dual_obj = float(problem.rhs @ y + np.sum(np.where(d > 0, d * fin_lb, d * fin_ub)))
    gap = abs(sol.objective - dual_obj) / (1.0 + abs(sol.objective))
    return {"primal": primal, "dual": dual, "complementarity": comp, "duality_gap": gap}


def solve_milp(problem: LpProblem, integer_vars, time_limit: float = 60.0, gap_tol: float = 1e-6,
               method: str = "highs", node_limit: int | None = None) -> MilpResult:
    """Solve a MILP by HiGHS branch and cut or, with ``method="bnb"``, by the
    built-in best-first branch and bound with most-fractional branching."""
    integer_vars = np.asarray(sorted(set(int(i) for i in integer_vars)), dtype=int)
    if len(integer_vars) and not (np.all(np.isfinite(problem.lb[integer_vars])) and np.all(np.isfinite(problem.ub[integer_vars]))):
        raise ValueError("integer variables need finite bounds")
    if method == "bnb":
        return _branch_and_bound(problem, integer_vars, time_limit, gap_tol, node_limit)
    if method != "highs":
        raise ValueError(f"unknown MILP method {method!r}")
    integrality = np.zeros(len(problem.c))
    integrality[integer_vars] = 1
    lo = np.where(problem.senses == "<", -np.inf, problem.rhs)
    hi = np.where(problem.senses == ">", np.inf, problem.rhs)
    cons = [LinearConstraint(problem.A, lo, hi)] if problem.A.shape[0] else []
    options = {"time_limit": max(float(time_limit), 1e-3), "mip_rel_gap": gap_tol, "disp": False}
    if node_limit is not None:
        options["node_limit"] = int(node_limit)
    res = milp(problem.c, constraints=cons, integrality=integrality,
               bounds=Bounds(problem.lb, problem.ub), options=options)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    bound = getattr(res, "mip_dual_bound", None)
    bound = math.nan if bound is None else float(bound)
    if res.x is None:
        status = "infeasible" if res.status == 2 else ("unbounded" if res.status == 3 else "time-limit")
        return MilpResult(status, None, math.inf, bound if math.isfinite(bound) else -math.inf, nodes)
    x = np.asarray(res.x)
    x[integer_vars] = np.round(x[integer_vars])
    obj = float(problem.c @ x)
    if not math.isfinite(bound):
        bound = obj
    status = "optimal" if res.status == 0 else "time-limit"
    return MilpResult(status, x, obj, min(bound, obj), nodes)


def _branch_and_bound(problem, integer_vars, time_limit, gap_tol, node_limit) -> MilpResult:
    start = time.perf_counter()
    root = solve_lp(problem)
    if root.status == "infeasible":
        return MilpResult("infeasible", None, math.inf, math.inf, 0)
    if root.status != "optimal":
        return MilpResult(root.status, None, math.inf, -math.inf, 0)
    incumbent, inc_obj = None, math.inf
    counter = 0
    heap = [(root.objective, counter, problem.lb.copy(), problem.ub.copy(), root)]
    nodes = 0
    history = []
    bound = root.objective

    def gap_closed():
        return incumbent is not None and inc_obj - bound <= gap_tol * max(abs(inc_obj), 1e-12)

    status = "optimal"
    while heap:
        bound = min(heap[0][0], inc_obj)
        history.append(bound)
        if gap_closed():
            break
        if time.perf_counter() - start > time_limit:
            status = "time-limit"
            break
        if node_limit is not None and nodes >= node_limit:
            status = "node-limit"
            break
        obj, _, lb, ub, sol = heapq.heappop(heap)
        if obj >= inc_obj - 1e-12 * max(1.0, abs(inc_obj)):
            continue
        xi = sol.x[integer_vars]
        frac = np.abs(xi - np.round(xi))
        j = int(np.argmax(frac))
        if frac[j] <= 1e-6:
            incumbent, inc_obj = sol.x.copy(), obj
            incumbent[integer_vars] = np.round(incumbent[integer_vars])
            continue
        var = integer_vars[j]
        for lo_new, hi_new in ((lb[var], math.floor(sol.x[var])), (math.ceil(sol.x[var]), ub[var])):
            if lo_new > hi_new:
                continue
            clb, cub = lb.copy(), ub.copy()
            clb[var], cub[var] = lo_new, hi_new
            child = solve_lp(problem.with_bounds(clb, cub))
            nodes += 1
            if child.status == "optimal" and child.objective < inc_obj:
                counter += 1
                heapq.heappush(heap, (max(child.objective, obj), counter, clb, cub, child))
    else:
        bound = inc_obj
        history.append(bound)
    if incumbent is None:
        if status == "optimal":
            return MilpResult("infeasible", None, math.inf, math.inf, nodes, history)
        return MilpResult(status, None, math.inf, bound, nodes, history)
    return MilpResult(status, incumbent, inc_obj, min(bound, inc_obj), nodes, history)


# --- extensive-form UC -----------------------------------------------------


@dataclass
class UcModel:
    """The full UC program as an LpProblem plus variable index helpers.

    Variables are laid out generator-major: for generator g and period t the
    on, startup, shutdown and power columns are ``idx(k, g, t)`` with k in
    0..3.  Rows 0..n_T-1 are load balance and n_T..2n_T-1 reserve.
    """

    problem: LpProblem
    n_G: int
    n_T: int

    def idx(self, k: int, g: int, t: int) -> int:
        return (g * 4 + k) * self.n_T + t

    @property
    def binary_vars(self) -> np.ndarray:
        return np.array([self.idx(k, g, t) for g in range(self.n_G) for k in range(3) for t in range(self.n_T)])

    def solution(self, instance: UcInstance, x: np.ndarray) -> UcSolution:
        scheds = []
        for g, gen in enumerate(instance.generators):
            cols = [x[self.idx(k, g, 0): self.idx(k, g, 0) + self.n_T] for k in range(4)]
            on = np.round(cols[0])
            power = np.clip(cols[3], gen.p_min * on, gen.p_max * on)
            scheds.append(Schedule.from_commitment(on, power, gen.initial_on))
        sol = UcSolution(scheds, 0.0)
        sol.total_cost = evaluate_cost(instance, sol)
        return sol


def build_uc_model(instance: UcInstance) -> UcModel:
    """Assemble the full UC formulation: one row per constraint instance."""
    nG, nT = instance.n_G, instance.n_T
    model = UcModel(None, nG, nT)
    idx = model.idx
    n = 4 * nG * nT
    c = np.zeros(n)
    lb = np.zeros(n)
    ub = np.ones(n)
    rows, cols, vals, senses, rhs = [], [], [], [], []
    r = 0

    def add(entries, sense, b):
        nonlocal r
        for j, v in entries:
            rows.append(r)
            cols.append(j)
            vals.append(v)
        senses.append(sense)
        rhs.append(b)
        r += 1

    for t in range(nT):
        add([(idx(3, g, t), 1.0) for g in range(nG)], ">", instance.demand[t])
    for t in range(nT):
        add([(idx(0, g, t), gen.p_max) for g, gen in enumerate(instance.generators)]
            + [(idx(3, g, t), -1.0) for g in range(nG)], ">", instance.reserve[t])
    for g, gen in enumerate(instance.generators):
        for t in range(nT):
            c[idx(0, g, t)] = gen.no_load_cost
            c[idx(1, g, t)] = gen.startup_cost
            c[idx(3, g, t)] = gen.marginal_cost
            ub[idx(3, g, t)] = np.inf
        for t in range(nT):
            a, up, dn, p = idx(0, g, t), idx(1, g, t), idx(2, g, t), idx(3, g, t)
            add([(p, 1.0), (a, -gen.p_min)], ">", 0.0)
            add([(p, 1.0), (a, -gen.p_max)], "<", 0.0)
            if t >= 1:
                ap, pp = idx(0, g, t - 1), idx(3, g, t - 1)
                add([(p, 1.0), (pp, -1.0), (ap, -gen.ramp_up), (up, -gen.startup_ramp)], "<", 0.0)
                add([(pp, 1.0), (p, -1.0), (a, -gen.ramp_down), (dn, -gen.shutdown_ramp)], "<", 0.0)
            add([(idx(1, g, i), 1.0) for i in range(max(t - gen.min_up + 1, 0), t + 1)] + [(a, -1.0)], "<", 0.0)
            add([(idx(2, g, i), 1.0) for i in range(max(t - gen.min_down + 1, 0), t + 1)] + [(a, 1.0)], "<", 1.0)
            if t == 0:
                add([(a, 1.0), (up, -1.0), (dn, 1.0)], "=", 1.0 if gen.initial_on else 0.0)
            else:
                add([(a, 1.0), (idx(0, g, t - 1), -1.0), (up, -1.0), (dn, 1.0)], "=", 0.0)
            add([(up, 1.0), (dn, 1.0)], "<", 1.0)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    model.problem = LpProblem(c, A, np.array(senses), np.array(rhs), lb, ub)
    return model


@dataclass
class ExtensiveResult:
    milp: MilpResult
    solution: UcSolution | None
    seconds: float

    @property
    def status(self):
        return self.milp.status

    @property
    def objective(self):
        return self.milp.objective

    @property
    def bound(self):
        return self.milp.bound


def solve_extensive_uc(instance: UcInstance, gap_tol: float = 1e-6, time_limit: float = 300.0,
                       method: str = "highs") -> ExtensiveResult:
    start = time.perf_counter()
    model = build_uc_model(instance)
    res = solve_milp(model.problem, model.binary_vars, time_limit=time_limit, gap_tol=gap_tol, method=method)
    sol = model.solution(instance, res.x) if res.x is not None else None
    if sol is not None:
        res.objective = sol.total_cost
    return ExtensiveResult(res, sol, time.perf_counter() - start)


def dump_lp(problem: LpProblem, path) -> None:
    """Write a fixed-format text dump of an LP for triage."""
    with open(path, "w") as fh:
        m, n = problem.shape
        fh.write(f"LP {m} {n}\n")
        for j in range(n):
            fh.write(f"C {j} {problem.c[j]!r} {problem.lb[j]!r} {problem.ub[j]!r}\n")
        A = problem.A.tocsr()
        for i in range(m):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            terms = " ".join(f"{A.indices[k]}:{A.data[k]!r}" for k in range(lo, hi))
            fh.write(f"R {i} {problem.senses[i]} {problem.rhs[i]!r} {terms}\n")
