"""Primal heuristics: commit-up local search and restricted master IP."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lp_core import LpProblem, solve_lp, solve_milp
from .pricing import commitment_feasible
from .uc_model import FEAS_TOL, Schedule, UcInstance, UcSolution, check_system_feasibility, evaluate_cost

SELECTION_NODE_CAP = 10_000
CANDIDATES_PER_GEN = 3


@dataclass
class DispatchResult:
    feasible: bool
    power: np.ndarray | None  # (n_G, n_T)
    cost: float
    shortfall: np.ndarray | None = None  # load + reserve slack per period


def economic_dispatch(instance: UcInstance, on: np.ndarray, allow_shortfall: bool = False) -> DispatchResult:
    """Cheapest power outputs for fixed commitments.

    With ``allow_shortfall`` penalized slack is added on the load and reserve
    rows so that the LP is always feasible and the slack shows where capacity
    is missing.
    """
    on = np.asarray(on, dtype=float)
    nG, nT = instance.n_G, instance.n_T
    gens = instance.generators
    n_p = nG * nT
    n = n_p + (2 * nT if allow_shortfall else 0)
    c = np.zeros(n)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    penalty = 1e3 * max(g.marginal_cost + g.no_load_cost / g.p_min for g in gens)
    for g, gen in enumerate(gens):
        sched = Schedule.from_commitment(on[g], np.zeros(nT), gen.initial_on)
        base = g * nT
        c[base : base + nT] = gen.marginal_cost
        lb[base : base + nT] = gen.p_min * sched.on
        ub[base : base + nT] = gen.p_max * sched.on
        for t in range(1, nT):
            rows += [r, r]
            cols += [base + t, base + t - 1]
            vals += [1.0, -1.0]
            rhs.append(gen.ramp_up * sched.on[t - 1] + gen.startup_ramp * sched.startup[t])
            r += 1
            rows += [r, r]
            cols += [base + t - 1, base + t]
            vals += [1.0, -1.0]
            rhs.append(gen.ramp_down * sched.on[t] + gen.shutdown_ramp * sched.shutdown[t])
            r += 1
    n_ramp = r
    senses = ["<"] * n_ramp
    committed = np.array([gen.p_max for gen in gens]) @ on
    for t in range(nT):
        for g in range(nG):
            rows.append(r)
            cols.append(g * nT + t)
            vals.append(1.0)
        if allow_shortfall:
            rows.append(r)
            cols.append(n_p + t)
            vals.append(1.0)
        rhs.append(instance.demand[t])
        senses.append(">")
        r += 1
    for t in range(nT):
        for g in range(nG):
            rows.append(r)
            cols.append(g * nT + t)
            vals.append(-1.0)
        if allow_shortfall:
            rows.append(r)
            cols.append(n_p + nT + t)
            vals.append(1.0)
        rhs.append(instance.reserve[t] - committed[t])
        senses.append(">")
        r += 1
    if allow_shortfall:
        c[n_p:] = penalty
    A = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    sol = solve_lp(LpProblem(c, A, np.array(senses), np.array(rhs), lb, ub))
    if not sol.optimal:
        return DispatchResult(False, None, np.inf)
    power = np.clip(sol.x[:n_p].reshape(nG, nT), lb[:n_p].reshape(nG, nT), ub[:n_p].reshape(nG, nT))
    if allow_shortfall:
        short = sol.x[n_p : n_p + nT] + sol.x[n_p + nT :]
        return DispatchResult(bool(np.all(short <= FEAS_TOL)), power, float(c[:n_p] @ sol.x[:n_p]), short)
    return DispatchResult(True, power, float(c[:n_p] @ sol.x[:n_p]))


def solution_from_commitment(instance: UcInstance, on: np.ndarray, power: np.ndarray) -> UcSolution:
    scheds = [Schedule.from_commitment(on[g], power[g], gen.initial_on) for g, gen in enumerate(instance.generators)]
    sol = UcSolution(scheds, 0.0)
    sol.total_cost = evaluate_cost(instance, sol)
    return sol


def _redispatch(instance, on) -> UcSolution | None:
    ed = economic_dispatch(instance, on)
    if not ed.feasible:
        return None
    sol = solution_from_commitment(instance, on, ed.power)
    if check_system_feasibility(instance, sol):
        return None
    return sol


def cheapness_key(gen) -> float:
    return gen.no_load_cost / gen.p_max + gen.marginal_cost


def _fill_short_gaps(gen, on: np.ndarray) -> np.ndarray:
    """Turn on off-gaps that are shorter than the minimum downtime."""
    on = on.copy()
    n_T = len(on)
    t = 0
    prev_on = gen.initial_on
    while t < n_T:
        if on[t] == 0:
            start = t
            while t < n_T and on[t] == 0:
                t += 1
            # a gap followed by a restart must be at least min_down long
            if prev_on and t < n_T and t - start < gen.min_down:
                on[start:t] = 1.0
            prev_on = False
        else:
            prev_on = True
            t += 1
    return on


def _commit_block(gen, on: np.ndarray, t: int) -> np.ndarray | None:
    n_T = len(on)
    lo = hi = t
    need = min(gen.min_up, n_T)
    right = True
    while hi - lo + 1 < need:
        if (right and hi < n_T - 1) or lo == 0:
            hi += 1
        else:
            lo -= 1
        right = not right
    new = on.copy()
    new[lo : hi + 1] = 1.0
    new = _fill_short_gaps(gen, new)
    if not commitment_feasible(gen, new):
        return None
    return new


def local_search_commit(instance: UcInstance, schedules, max_rounds: int | None = None) -> UcSolution | None:
    """Repair pricing schedules by committing cheap extra units where load or
    reserve is short, then re-dispatch."""
    on = np.array([np.round(s.on) for s in schedules], dtype=float)
    order = sorted(range(instance.n_G), key=lambda g: (cheapness_key(instance.generators[g]), g))
    max_rounds = max_rounds or instance.n_G * instance.n_T
    for _ in range(max_rounds):
        ed = economic_dispatch(instance, on, allow_shortfall=True)
        if ed.feasible:
            return _redispatch(instance, on)
        periods = np.flatnonzero(ed.shortfall > FEAS_TOL)
        t = int(periods[np.argmax(ed.shortfall[periods])]) if len(periods) else 0
        for g in order:
            if on[g, t] == 1:
                continue
            new = _commit_block(instance.generators[g], on[g], t)
            if new is not None:
                on[g] = new
                break
        else:
            return None
    return None


@dataclass
class CandidateSet:
    n_G: int
    size: int = CANDIDATES_PER_GEN
    schedules: list = field(default_factory=list)

    def __post_init__(self):
        if not self.schedules:
            self.schedules = [deque(maxlen=self.size) for _ in range(self.n_G)]

    def push(self, schedules) -> None:
        for s, sched in enumerate(schedules):
            self.schedules[s].append(sched)

    def populated(self) -> bool:
        return all(len(q) for q in self.schedules)


def column_combination(instance: UcInstance, candidates: CandidateSet,
                       node_cap: int = SELECTION_NODE_CAP, time_limit: float = 30.0) -> UcSolution | None:
    """Pick one stored schedule per generator by a small selection MILP, then
    re-dispatch the chosen commitments."""
    if not candidates.populated():
        raise ValueError("candidate set is empty for some generator")
    options = []
    for s, q in enumerate(candidates.schedules):
        seen = {}
        for sched in q:
            seen.setdefault(sched.key(), sched)
        options.append(list(seen.values()))
    owner = np.array([s for s, opts in enumerate(options) for _ in opts])
    flat = [sched for opts in options for sched in opts]
    gens = instance.generators
    cost = np.array([gens[s].no_load_cost * x.on.sum() + gens[s].marginal_cost * x.power.sum()
                     + gens[s].startup_cost * x.startup.sum() for s, x in zip(owner, flat)])
    contrib = np.array([np.concatenate([x.power, gens[s].p_max * x.on - x.power]) for s, x in zip(owner, flat)])
    n = len(flat)
    nG = instance.n_G
    A = sp.vstack([sp.csr_matrix(contrib.T),
                   sp.csr_matrix((np.ones(n), (owner, np.arange(n))), shape=(nG, n))]).tocsr()
    senses = np.array([">"] * contrib.shape[1] + ["="] * nG)
    rhs = np.concatenate([instance.linking_rhs(), np.ones(nG)])
    prob = LpProblem(cost, A, senses, rhs, np.zeros(n), np.ones(n))
    res = solve_milp(prob, np.arange(n), time_limit=time_limit, gap_tol=1e-9, node_limit=node_cap)
    if res.x is None:
        return None
    pick = np.round(res.x).astype(bool)
    on = np.array([flat[i].on for i in np.flatnonzero(pick)])
    return _redispatch(instance, on)
