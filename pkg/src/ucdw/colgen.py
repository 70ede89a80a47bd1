"""Regularized column generation with lower-bound tracking and primal heuristics."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import heuristics
from .master import ColumnPool, add_columns, solve_regularized_rmp, solve_rmp
from .pricing import DualPoint, solve_all_pricing
from .uc_model import UcInstance, UcSolution, check_system_feasibility, evaluate_cost


@dataclass
class ColGenConfig:
    initial_mu: float = 1.0
    mu_decrease_factor: float = 2.0
    mu_increase_factor: float = 2.0
    gap_tolerance: float = 0.0025
    time_limit_seconds: float = 300.0
    max_iterations: int = 200
    heuristic_escalation_iteration: int = 30
    mu_range: float = 1e3  # mu stays within [mu0 / mu_range, mu0 * mu_range]
    converged_tolerance: float = 1e-7
    record_tolerances: tuple = (0.01, 0.005, 0.0025)

    def __post_init__(self):
        if self.mu_decrease_factor <= 1 or self.mu_increase_factor <= 1:
            raise ValueError("mu factors must exceed 1")
        if self.gap_tolerance <= 0 or self.initial_mu <= 0 or self.mu_range < 1 or self.converged_tolerance < 0:
            raise ValueError("gap tolerance and initial mu must be positive")


@dataclass
class IterationRecord:
    iter: int
    lb: float
    ub: float
    gap: float
    mu: float
    t_init: float
    t_rmp: float
    t_pricing: float
    t_heuristic: float
    y_hash: str
    columns_added: int = 0


@dataclass
class ColGenResult:
    best_lower_bound: float
    best_solution: UcSolution | None
    gap: float
    iterations: int
    status: str  # solved | converged | time-limit | iter-limit
    log: list = field(default_factory=list)
    crossings: dict = field(default_factory=dict)  # tolerance -> {"iter", "time"}
    best_dual: DualPoint | None = None
    first_lb: float = -math.inf
    first_ub: float = math.inf
    total_time: float = 0.0
    init_time: float = 0.0

    @property
    def upper_bound(self) -> float:
        return self.best_solution.total_cost if self.best_solution is not None else math.inf

    def phase_times(self) -> dict:
        out = {"t_init": self.init_time, "t_rmp": 0.0, "t_pricing": 0.0, "t_heuristic": 0.0}
        for rec in self.log:
            for k in ("t_rmp", "t_pricing", "t_heuristic"):
                out[k] += getattr(rec, k)
        return out

    def to_dict(self, timings: bool = True) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else float(x)

        log = []
        for rec in self.log:
            d = asdict(rec)
            for k in ("lb", "ub", "gap", "mu"):
                d[k] = num(d[k])
            if not timings:
                for k in ("t_init", "t_rmp", "t_pricing", "t_heuristic"):
                    d.pop(k)
            log.append(d)
        out = {
            "status": self.status,
            "iterations": self.iterations,
            "lower_bound": num(self.best_lower_bound),
            "upper_bound": num(self.upper_bound),
            "gap": num(self.gap),
            "first_lower_bound": num(self.first_lb),
            "first_upper_bound": num(self.first_ub),
            "crossings": {f"{k:g}": ({"iter": v["iter"], "time": v["time"]} if timings else {"iter": v["iter"]})
                          for k, v in sorted(self.crossings.items(), reverse=True)},
            "log": log,
        }
        if timings:
            out["total_time"] = self.total_time
            out["phase_times"] = self.phase_times()
        if self.best_solution is not None:
            out["solution"] = {
                "on": [s.on.astype(int).tolist() for s in self.best_solution.schedules],
                "power": [s.power.tolist() for s in self.best_solution.schedules],
            }
        return out


def compute_lower_bound(instance: UcInstance, y: DualPoint, sweep=None) -> float:
    """a^T y + sum_s r_s(y): a valid bound for any y >= 0."""
    if not y.is_nonnegative():
        raise ValueError("lower bound needs y >= 0")
    if sweep is None:
        sweep = solve_all_pricing(instance, y)
    return float(instance.demand @ y.y_load + instance.reserve @ y.y_reserve + sweep.total)


def _hash(y: DualPoint) -> str:
    return hashlib.sha1(np.round(y.vector, 9).tobytes()).hexdigest()[:16]


def _gap(lb, ub) -> float:
    if not (math.isfinite(lb) and math.isfinite(ub)) or ub <= 0:
        return math.inf if ub > 0 or not math.isfinite(ub) else (0.0 if lb >= ub else math.inf)
    return (ub - lb) / ub


def run_column_generation(instance: UcInstance, y0: DualPoint | None = None, config: ColGenConfig | None = None,
                          use_heuristics: bool = True, init_time: float = 0.0, log_stream=None) -> ColGenResult:
    config = config or ColGenConfig()
    start = time.perf_counter()
    n_T = instance.n_T
    y = DualPoint.zeros(n_T) if y0 is None else DualPoint(y0.y_load.copy(), y0.y_reserve.copy())
    if not y.is_nonnegative():
        raise ValueError("initial dual must be nonnegative")
    mean_mc = float(np.mean([g.marginal_cost for g in instance.generators]))
    mu = mu0 = config.initial_mu / mean_mc
    mu_lo, mu_hi = mu0 / config.mu_range, mu0 * config.mu_range
    center = y.vector.copy()
    pool = ColumnPool(instance.n_G)
    candidates = heuristics.CandidateSet(instance.n_G)
    result = ColGenResult(-math.inf, None, math.inf, 0, "time-limit", init_time=init_time)
    best_lb = -math.inf
    best_y = y
    ub_sol: UcSolution | None = None

    def elapsed():
        return time.perf_counter() - start + init_time

    def finish(status):
        result.status = status
        result.best_lower_bound = best_lb
        result.best_solution = ub_sol
        result.gap = _gap(best_lb, ub_sol.total_cost if ub_sol else math.inf)
        result.best_dual = best_y
        result.total_time = elapsed()
        return result

    def consider(sol):
        nonlocal ub_sol
        if sol is None or check_system_feasibility(instance, sol):
            return
        cost = evaluate_cost(instance, sol)
        sol.total_cost = cost
        if ub_sol is None or cost < ub_sol.total_cost - 1e-9:
            ub_sol = sol

    k = 0
    while True:
        if elapsed() >= config.time_limit_seconds:
            return finish("time-limit")
        if k >= config.max_iterations:
            return finish("iter-limit")
        k += 1
        t0 = time.perf_counter()
        sweep = solve_all_pricing(instance, y)
        lb = compute_lower_bound(instance, y, sweep)
        t_pricing = time.perf_counter() - t0
        if k > 1:
            if lb > best_lb:
                center = y.vector.copy()
                mu = max(mu / config.mu_decrease_factor, mu_lo)
            else:
                mu = min(mu * config.mu_increase_factor, mu_hi)
        if lb > best_lb:
            best_lb, best_y = lb, y
        added = add_columns(instance, pool, sweep.results, iteration=k)
        scheds = [r.schedule for r in sweep.results]
        candidates.push(scheds)

        t0 = time.perf_counter()
        if use_heuristics:
            consider(heuristics.local_search_commit(instance, scheds))
            within = ub_sol is not None and _gap(best_lb, ub_sol.total_cost) <= config.gap_tolerance
            if k >= config.heuristic_escalation_iteration and not within:
                consider(heuristics.column_combination(instance, candidates))
        t_heur = time.perf_counter() - t0

        ub = ub_sol.total_cost if ub_sol else math.inf
        gap = _gap(best_lb, ub)
        if k == 1:
            result.first_lb, result.first_ub = lb, ub
        for tol in config.record_tolerances:
            if gap <= tol and tol not in result.crossings:
                result.crossings[tol] = {"iter": k, "time": elapsed()}
        rec = IterationRecord(k, best_lb, ub, gap, mu, init_time if k == 1 else 0.0, 0.0, t_pricing, t_heur, _hash(y), added)
        result.log.append(rec)
        result.iterations = k
        if gap <= config.gap_tolerance:
            _emit(log_stream, rec)
            return finish("solved")
        if elapsed() >= config.time_limit_seconds:
            _emit(log_stream, rec)
            return finish("time-limit")

        t0 = time.perf_counter()
        master = solve_regularized_rmp(instance, pool, center, mu)
        converged = False
        if master.status.startswith("failed"):
            # fall back to the centre; the increased mu makes the next step shorter
            y_next = DualPoint.from_vector(center)
        else:
            y_next = DualPoint.from_vector(master.duals.vector)
            # the unregularized RMP value bounds the master value from above, so
            # the best bound has reached the master value once it meets it
            rmp = solve_rmp(instance, pool)
            converged = best_lb >= rmp.objective - config.converged_tolerance * max(1.0, abs(rmp.objective))
        rec.t_rmp = time.perf_counter() - t0
        _emit(log_stream, rec)
        if converged:
            return finish("converged")
        y = y_next


def _emit(stream, rec: IterationRecord):
    if stream is None:
        return
    d = {k: getattr(rec, k) for k in ("iter", "lb", "ub", "gap", "mu", "t_init", "t_rmp", "t_pricing", "t_heuristic")}
    for k in ("lb", "ub", "gap"):
        if not math.isfinite(d[k]):
            d[k] = None
    stream.write(json.dumps(d) + "\n")
