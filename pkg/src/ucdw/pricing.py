"""Exact single-generator pricing problems.

The pricing objective of a generator is linear in (on, startup, power) once
the linking duals are folded into the costs.  ``solve_pricing`` decomposes a
schedule into maximal on-intervals: intervals interact only through the
min-down gaps between them, so a shortest path over intervals is exact
provided each interval's dispatch cost is exact.  The dispatch of an
interval is a ramp-constrained LP in one variable per period; its value
function is convex piecewise linear and is propagated period by period.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .uc_model import GeneratorSpec, Schedule, UcInstance, linking_contribution


@dataclass
class DualPoint:
    y_load: np.ndarray
    y_reserve: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.y_load = np.asarray(self.y_load, dtype=float)
        self.y_reserve = np.asarray(self.y_reserve, dtype=float)
        if self.y_load.shape != self.y_reserve.shape:
            raise ValueError("load and reserve duals must have the same length")
        if not (np.all(np.isfinite(self.y_load)) and np.all(np.isfinite(self.y_reserve))):
            raise ValueError("dual values must be finite")

    @classmethod
    def zeros(cls, n_T: int) -> "DualPoint":
        return cls(np.zeros(n_T), np.zeros(n_T))

    @classmethod
    def from_vector(cls, y, sigma=None) -> "DualPoint":
        y = np.asarray(y, dtype=float)
        n = len(y) // 2
        return cls(y[:n].copy(), y[n:].copy(), sigma)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.y_load, self.y_reserve])

    @property
    def n_T(self) -> int:
        return len(self.y_load)

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.vector >= -tol))


@dataclass
class PricingResult:
    schedule: Schedule
    reduced_objective: float
    load: np.ndarray
    reserve: np.ndarray

    @property
    def linking_contribution(self) -> np.ndarray:
        return np.concatenate([self.load, self.reserve])


@dataclass
class Coefficients:
    power: np.ndarray
    on: np.ndarray
    startup: float


def reduced_cost_coefficients(gen: GeneratorSpec, y: DualPoint) -> Coefficients:
    return Coefficients(
        power=gen.marginal_cost - y.y_load + y.y_reserve,
        on=gen.no_load_cost - y.y_reserve * gen.p_max,
        startup=float(gen.startup_cost),
    )


def reduced_objective(coef: Coefficients, sched: Schedule) -> float:
    return float(coef.power @ sched.power + coef.on @ sched.on + coef.startup * sched.startup.sum())


def _result(gen, coef, sched) -> PricingResult:
    load, reserve = linking_contribution(gen, sched)
    return PricingResult(sched, reduced_objective(coef, sched), load, reserve)


# --- convex piecewise-linear value functions -------------------------------


class _Pwl:
    """Convex piecewise-linear function on [xs[0], xs[-1]] given by breakpoints."""

    __slots__ = ("xs", "vs")

    def __init__(self, xs, vs):
        self.xs = xs
        self.vs = vs

    def argmin(self) -> int:
        vs = self.vs
        best = 0
        for i in range(1, len(vs)):
            if vs[i] < vs[best]:
                best = i
        return best

    def add_linear(self, c: float) -> None:
        self.vs = [v + c * x for x, v in zip(self.xs, self.vs)]

    def value_at(self, x: float) -> float:
        xs, vs = self.xs, self.vs
        if x <= xs[0]:
            return vs[0]
        for i in range(1, len(xs)):
            if x <= xs[i]:
                w = xs[i] - xs[i - 1]
                if w <= 0:
                    return vs[i]
                lam = (x - xs[i - 1]) / w
                return vs[i - 1] + lam * (vs[i] - vs[i - 1])
        return vs[-1]

    def clipped(self, lo: float, hi: float):
        lo = max(lo, self.xs[0])
        hi = min(hi, self.xs[-1])
        if lo > hi + 1e-9:
            return None
        if hi < lo:
            hi = lo
        xs = [lo] + [x for x in self.xs if lo < x < hi] + ([hi] if hi > lo else [])
        return _Pwl(xs, [self.value_at(x) for x in xs])

    def ramp_relaxed(self, ramp_up: float, ramp_down: float) -> "_Pwl":
        """g(p) = min f(q) over q in [p - ramp_up, p + ramp_down]."""
        k = self.argmin()
        xs = [x - ramp_down for x in self.xs[: k + 1]]
        vs = list(self.vs[: k + 1])
        if ramp_up + ramp_down > 0:
            xs += [x + ramp_up for x in self.xs[k:]]
            vs += self.vs[k:]
        else:
            xs += [x + ramp_up for x in self.xs[k + 1:]]
            vs += self.vs[k + 1:]
        return _Pwl(xs, vs)


def _interval_table(gen: GeneratorSpec, cpow: np.ndarray, n_T: int):
    """Optimal dispatch cost of every on-interval [a, b] (0-based, inclusive).

    Returns cost[a][b] (None if infeasible) and the leftmost minimizers of the
    intermediate value functions for reconstruction.
    """
    cost = [[None] * n_T for _ in range(n_T)]
    trace = [[None] * n_T for _ in range(n_T)]
    cp = [float(c) for c in cpow]
    pmin, pmax = gen.p_min, gen.p_max
    for a in range(n_T):
        # the first period carries no ramp rows; later startups are limited by the startup ramp
        top = pmax if a == 0 else min(pmax, gen.startup_ramp)
        f = _Pwl([pmin, top] if top > pmin else [pmin], None)
        f.vs = [cp[a] * x for x in f.xs]
        for b in range(a, n_T):
            if b > a:
                f = f.ramp_relaxed(gen.ramp_up, gen.ramp_down).clipped(pmin, pmax)
                if f is None:
                    break
                f.add_linear(cp[b])
            k = f.argmin()
            trace[a][b] = (f.xs[k], f.xs[0], f.xs[-1])
            if b < n_T - 1:
                end = f.clipped(pmin, min(pmax, gen.shutdown_ramp))
                if end is None:
                    continue
                j = end.argmin()
                cost[a][b] = (end.vs[j], end.xs[j])
            else:
                cost[a][b] = (f.vs[k], f.xs[k])
    return cost, trace


def _reconstruct(gen, trace, a, b, p_end) -> list[float]:
    p = [0.0] * (b - a + 1)
    p[-1] = p_end
    for t in range(b, a, -1):
        x_star, lo, hi = trace[a][t - 1]
        lo_r = max(lo, p[t - a] - gen.ramp_up)
        hi_r = min(hi, p[t - a] + gen.ramp_down)
        p[t - 1 - a] = min(max(x_star, lo_r), hi_r)
    return p


def solve_pricing(gen: GeneratorSpec, y: DualPoint, n_T: int) -> PricingResult:
    coef = reduced_cost_coefficients(gen, y)
    disp, trace = _interval_table(gen, coef.power, n_T)
    con = np.concatenate([[0.0], np.cumsum(coef.on)])
    t_u, t_d = gen.min_up, gen.min_down
    # best[b]: (cost, on-periods, (a, b, p_end), predecessor end) of schedules whose last on-interval ends at b
    best = [None] * n_T
    prefix = [None] * n_T  # prefix[b] = argmin over best[0..b]
    for a in range(n_T):
        startup = not (a == 0 and gen.initial_on)
        # predecessor options
        options = []
        if a == 0 or not gen.initial_on or a >= t_d:
            options.append((0.0, 0, None))
        last_end = a - 1 - t_d
        if last_end >= 0 and prefix[last_end] is not None:
            j = prefix[last_end]
            options.append((best[j][0], best[j][1], j))
        base = min(options, key=lambda o: (o[0], o[1])) if options else None
        for b in range(a, n_T if base else a):
            if disp[a][b] is None:
                continue
            if startup and b - a + 1 < t_u and b != n_T - 1:
                continue
            val, p_end = disp[a][b]
            c = base[0] + val + (con[b + 1] - con[a]) + (coef.startup if startup else 0.0)
            n_on = base[1] + b - a + 1
            if best[b] is None or (c, n_on) < (best[b][0], best[b][1]):
                best[b] = (c, n_on, (a, b, p_end), base[2])
        # best[a] is final once every interval starting at or before a has been seen
        cand = prefix[a - 1] if a >= 1 else None
        if best[a] is not None and (cand is None or (best[a][0], best[a][1]) < (best[cand][0], best[cand][1])):
            cand = a
        prefix[a] = cand
    # choose the overall best, comparing with the all-off schedule
    choice, choice_key = None, (0.0, 0)
    for b in range(n_T):
        if best[b] is not None and (best[b][0], best[b][1]) < choice_key:
            choice, choice_key = b, (best[b][0], best[b][1])
    on = np.zeros(n_T)
    power = np.zeros(n_T)
    b = choice
    while b is not None:
        _, _, (a, bb, p_end), prev = best[b]
        on[a : bb + 1] = 1.0
        power[a : bb + 1] = _reconstruct(gen, trace, a, bb, p_end)
        b = prev
    sched = Schedule.from_commitment(on, power, gen.initial_on)
    return _result(gen, coef, sched)


def commitment_feasible(gen: GeneratorSpec, on) -> bool:
    """Switching and min-up/down logic for a 0/1 on-pattern."""
    n_T = len(on)
    sched = Schedule.from_commitment(on, np.zeros(n_T), gen.initial_on)
    up, dn = sched.startup, sched.shutdown
    for t in range(n_T):
        if up[max(t - gen.min_up + 1, 0) : t + 1].sum() > on[t]:
            return False
        if dn[max(t - gen.min_down + 1, 0) : t + 1].sum() > 1 - on[t]:
            return False
    return True


def dispatch_lp(gen: GeneratorSpec, on, cpow):
    """LP over power for a fixed on-pattern: bounds and ramp rows only."""
    from .lp_core import LpProblem, solve_lp

    n_T = len(on)
    sched = Schedule.from_commitment(on, np.zeros(n_T), gen.initial_on)
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for t in range(1, n_T):
        rows += [r, r]
        cols += [t, t - 1]
        vals += [1.0, -1.0]
        rhs.append(gen.ramp_up * sched.on[t - 1] + gen.startup_ramp * sched.startup[t])
        r += 1
        rows += [r, r]
        cols += [t - 1, t]
        vals += [1.0, -1.0]
        rhs.append(gen.ramp_down * sched.on[t] + gen.shutdown_ramp * sched.shutdown[t])
        r += 1
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n_T))
    prob = LpProblem(cpow, A, np.array(["<"] * r), np.array(rhs), gen.p_min * sched.on, gen.p_max * sched.on)
    return solve_lp(prob)


MAX_BRUTE_FORCE_T = 8


def brute_force_pricing(gen: GeneratorSpec, y: DualPoint, n_T: int) -> PricingResult:
    """Enumerate every on-pattern and solve its dispatch LP."""
    if n_T > MAX_BRUTE_FORCE_T:
        raise ValueError(f"brute force pricing is limited to n_T <= {MAX_BRUTE_FORCE_T}")
    coef = reduced_cost_coefficients(gen, y)
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=n_T):
        on = np.array(bits)
        if not commitment_feasible(gen, on):
            continue
        sol = dispatch_lp(gen, on, coef.power)
        if not sol.optimal:
            continue
        sched = Schedule.from_commitment(on, sol.x, gen.initial_on)
        val = reduced_objective(coef, sched)
        key = (val, on.sum())
        if best is None or key < best[0]:
            best = (key, sched)
    return _result(gen, coef, best[1])


def feasible_patterns(gen: GeneratorSpec, n_T: int) -> list:
    return [np.array(b) for b in itertools.product((0.0, 1.0), repeat=n_T) if commitment_feasible(gen, np.array(b))]


@dataclass
class PricingSweep:
    results: list
    total: float

    @property
    def supply(self) -> np.ndarray:
        """Sum of linking contributions over generators (load rows then reserve rows)."""
        return np.sum([r.linking_contribution for r in self.results], axis=0)


def solve_all_pricing(instance: UcInstance, y: DualPoint) -> PricingSweep:
    results = [solve_pricing(g, y, instance.n_T) for g in instance.generators]
    total = 0.0
    for r in results:
        total += r.reduced_objective
    return PricingSweep(results, total)
