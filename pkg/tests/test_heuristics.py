import itertools

import numpy as np
import pytest

from conftest import make_gen, random_dual, tiny_instance
from ucdw.heuristics import (CandidateSet, cheapness_key, column_combination, economic_dispatch,
                             local_search_commit)
from ucdw.lp_core import solve_extensive_uc
from ucdw.pricing import DualPoint, commitment_feasible, solve_all_pricing
from ucdw.uc_model import (DemandProfile, Schedule, UcInstance, check_system_feasibility, evaluate_cost,
                           make_instances, schedule_cost)


def inst_of(gens, demand, reserve=None):
    demand = np.asarray(demand, dtype=float)
    reserve = np.zeros_like(demand) if reserve is None else np.asarray(reserve, dtype=float)
    return UcInstance(tuple(gens), DemandProfile(demand, reserve), len(demand))


def test_single_unit_follows_demand():
    g = make_gen(initial_on=True, initial_power=5.0, ramp_up=10.0, ramp_down=10.0)
    inst = inst_of([g], [4.0, 6.0, 9.0])
    ed = economic_dispatch(inst, np.ones((1, 3)))
    assert ed.feasible
    assert np.allclose(ed.power[0], [4.0, 6.0, 9.0])
    assert ed.cost == pytest.approx(10.0 * 19.0)


def test_merit_order_loading():
    cheap = make_gen(marginal_cost=5.0, initial_on=True, ramp_up=10.0, ramp_down=10.0)
    dear = make_gen(marginal_cost=20.0, initial_on=True, ramp_up=10.0, ramp_down=10.0)
    inst = inst_of([cheap, dear], [8.0, 15.0])
    ed = economic_dispatch(inst, np.ones((2, 2)))
    assert np.allclose(ed.power, [[6.0, 10.0], [2.0, 5.0]])


def test_ramp_limits_bind():
    g = make_gen(initial_on=True, initial_power=2.0, ramp_up=1.0)
    backup = make_gen(marginal_cost=50.0, initial_on=True)
    inst = inst_of([g, backup], [4.0, 12.0])
    ed = economic_dispatch(inst, np.ones((2, 2)))
    assert ed.power[0, 1] - ed.power[0, 0] <= 1.0 + 1e-9
    assert ed.power[:, 1].sum() >= 12.0 - 1e-7


def test_infeasible_commitment_and_shortfall():
    g = make_gen(initial_on=True, ramp_up=10.0)
    inst = inst_of([g], [12.0, 5.0], [0.0, 1.0])
    assert not economic_dispatch(inst, np.ones((1, 2))).feasible
    ed = economic_dispatch(inst, np.ones((1, 2)), allow_shortfall=True)
    assert not ed.feasible
    assert ed.shortfall[0] == pytest.approx(2.0, abs=1e-7)
    assert ed.shortfall[1] == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_dispatch_of_optimal_commitment_recovers_optimum(seed):
    inst = make_instances(5, 24, 3, 11, 2002)[seed]
    ex = solve_extensive_uc(inst)
    on = np.array([s.on for s in ex.solution.schedules])
    ed = economic_dispatch(inst, on)
    fixed = sum(schedule_cost(g, Schedule.from_commitment(o, np.zeros(24), g.initial_on))
                for g, o in zip(inst.generators, on))
    assert ed.cost + fixed == pytest.approx(ex.objective, rel=1e-7)


def test_cheapness_order():
    assert cheapness_key(make_gen(no_load_cost=10.0, marginal_cost=1.0)) < cheapness_key(make_gen(marginal_cost=3.0))


@pytest.mark.parametrize("seed", range(8))
def test_repair_from_all_off(seed):
    rng = np.random.default_rng(300 + seed)
    inst = tiny_instance(rng, n_G=4, n_T=6, load=0.5)
    scheds = [Schedule.all_off(6, g.initial_on) for g in inst.generators]
    sol = local_search_commit(inst, scheds)
    ex = solve_extensive_uc(inst)
    if ex.solution is None:
        assert sol is None
        return
    if sol is None:
        pytest.skip("repair found nothing on this draw")
    assert not check_system_feasibility(inst, sol)
    assert evaluate_cost(inst, sol) == pytest.approx(sol.total_cost)
    assert sol.total_cost >= ex.objective * (1 - 1e-9)
    for g, s in zip(inst.generators, sol.schedules):
        assert commitment_feasible(g, s.on)


def test_repair_keeps_feasible_commitment():
    inst = make_instances(5, 24, 1, 11, 2002)[0]
    ex = solve_extensive_uc(inst)
    sol = local_search_commit(inst, ex.solution.schedules)
    assert np.array_equal(np.array([s.on for s in sol.schedules]), np.array([s.on for s in ex.solution.schedules]))
    assert sol.total_cost == pytest.approx(ex.objective, rel=1e-7)


def test_repair_on_generated_day_is_near_optimal():
    inst = make_instances(5, 24, 1, 11, 2002)[0]
    ex = solve_extensive_uc(inst)
    sol = local_search_commit(inst, [Schedule.all_off(24, g.initial_on) for g in inst.generators])
    assert sol is not None
    assert sol.total_cost <= 1.2 * ex.objective


def _candidates(inst, rng, k=3):
    cand = CandidateSet(inst.n_G)
    for _ in range(k):
        cand.push([r.schedule for r in solve_all_pricing(inst, random_dual(rng, inst.n_T, 40.0)).results])
    return cand


@pytest.mark.parametrize("seed", range(6))
def test_combination_matches_enumeration(seed):
    rng = np.random.default_rng(400 + seed)
    inst = tiny_instance(rng, n_G=3, n_T=4, load=0.4)
    cand = _candidates(inst, rng)
    gens = inst.generators
    best = np.inf
    for combo in itertools.product(*[list(q) for q in cand.schedules]):
        supply = sum(s.power for s in combo)
        spare = sum(g.p_max * s.on - s.power for g, s in zip(gens, combo))
        if np.all(supply >= inst.demand - 1e-9) and np.all(spare >= inst.reserve - 1e-9):
            best = min(best, sum(schedule_cost(g, s) for g, s in zip(gens, combo)))
    sol = column_combination(inst, cand)
    if np.isfinite(best):
        assert sol is not None
        assert not check_system_feasibility(inst, sol)
        # re-dispatching the selected commitments can only lower the cost
        assert sol.total_cost <= best * (1 + 1e-7)
    elif sol is not None:
        assert not check_system_feasibility(inst, sol)


def test_combination_needs_candidates(rng):
    inst = tiny_instance(rng, n_G=2, n_T=4)
    cand = CandidateSet(2)
    cand.push([Schedule.all_off(4, inst.generators[0].initial_on)] * 1 + [])
    with pytest.raises(ValueError):
        column_combination(inst, cand)


def test_candidate_queue_keeps_latest():
    cand = CandidateSet(1, size=2)
    for v in range(4):
        cand.push([Schedule.from_commitment(np.full(3, v % 2), np.zeros(3), False)])
    assert len(cand.schedules[0]) == 2
    assert cand.populated()


def test_combination_all_off_cannot_cover_load():
    g = make_gen()
    inst = inst_of([g, g], [3.0, 3.0])
    cand = CandidateSet(2)
    y = DualPoint.zeros(2)
    cand.push([r.schedule for r in solve_all_pricing(inst, y).results])
    assert column_combination(inst, cand) is None
