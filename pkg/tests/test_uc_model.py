import json

import numpy as np
import pytest

from conftest import make_gen
from ucdw.uc_model import (DemandProfile, Schedule, UcInstance, UcSolution, check_system_feasibility,
                           evaluate_cost, fleet_fingerprint, generate_demand, generate_fleet, instance_from_dict,
                           instance_to_json, load_instance, make_instances, save_instance, validate_schedule)


def sched(on, power, initial_on=False):
    return Schedule.from_commitment(np.array(on, float), np.array(power, float), initial_on)


def test_generator_invariants():
    with pytest.raises(ValueError):
        make_gen(p_min=0.0)
    with pytest.raises(ValueError):
        make_gen(startup_ramp=1.0)
    with pytest.raises(ValueError):
        make_gen(initial_on=False, initial_power=3.0)
    with pytest.raises(ValueError):
        make_gen(min_up=0)


def test_all_off_is_feasible():
    g = make_gen(min_up=1, min_down=1)
    assert validate_schedule(g, Schedule.all_off(5, False), 5) == []


def test_min_up_violation_located():
    g = make_gen(min_up=2, min_down=1)
    v = validate_schedule(g, sched([0, 1, 0], [0, 5, 0]), 3)
    assert [(x.family, x.period) for x in v] == [("min_up", 3)]


def test_startup_ramp_violation():
    g = make_gen(min_up=1, min_down=1, startup_ramp=5.0, ramp_up=100.0)
    v = validate_schedule(g, sched([0, 1], [0, 10]), 2)
    assert [(x.family, x.period) for x in v] == [("ramp_up", 2)]


def test_min_down_uses_down_time():
    g = make_gen(min_up=1, min_down=3, initial_on=True)
    assert validate_schedule(g, sched([1, 0, 0, 1], [2, 0, 0, 2], True), 4)
    assert not validate_schedule(g, sched([1, 0, 0, 0, 1], [2, 0, 0, 0, 2], True), 5)


def test_length_mismatch():
    with pytest.raises(ValueError):
        validate_schedule(make_gen(), Schedule.all_off(3, False), 4)


def one_gen_instance(demand, reserve, **kw):
    g = make_gen(**kw)
    return UcInstance((g,), DemandProfile(np.array(demand, float), np.array(reserve, float)), len(demand))


def test_system_feasibility_examples():
    inst = one_gen_instance([0.0], [0.0], min_up=1, min_down=1)
    assert check_system_feasibility(inst, UcSolution([Schedule.all_off(1, False)], 0.0)) == []
    inst = one_gen_instance([10.0], [0.0], min_up=1, min_down=1, initial_on=True, p_max=10.0, p_min=2.0)
    v = check_system_feasibility(inst, UcSolution([sched([1], [5], True)], 0.0))
    assert [(x.family, x.residual) for x in v] == [("load_balance", 5.0)]
    inst = one_gen_instance([0.0], [3.0], min_up=1, min_down=1, initial_on=True, p_max=10.0, p_min=2.0)
    v = check_system_feasibility(inst, UcSolution([sched([1], [8], True)], 0.0))
    assert [(x.family, x.residual) for x in v] == [("reserve", 1.0)]


def test_cost_examples():
    g = make_gen(no_load_cost=1.0, marginal_cost=1.0, startup_cost=2.0, p_min=1.0, initial_on=True, min_up=1, min_down=1)
    inst = UcInstance((g,), DemandProfile(np.zeros(2), np.zeros(2)), 2)
    s = sched([1, 1], [1, 2], True)
    assert evaluate_cost(inst, UcSolution([s], 0)) == 5.0
    g2 = make_gen(no_load_cost=2.0, marginal_cost=2.0, startup_cost=4.0, p_min=1.0, initial_on=True, min_up=1, min_down=1)
    inst2 = UcInstance((g2,), inst.profile, 2)
    assert evaluate_cost(inst2, UcSolution([s], 0)) == 10.0
    assert evaluate_cost(inst, UcSolution([Schedule.all_off(2, True)], 0)) == 0.0


def test_cost_permutation_invariant(rng):
    inst = make_instances(4, 24, 1, 3, 4)[0]
    scheds = [Schedule.from_commitment(np.ones(24), np.full(24, g.p_min), True) for g in inst.generators]
    perm = rng.permutation(4)
    inst_p = UcInstance(tuple(inst.generators[i] for i in perm), inst.profile, 24)
    assert evaluate_cost(inst, UcSolution(scheds, 0)) == pytest.approx(
        evaluate_cost(inst_p, UcSolution([scheds[i] for i in perm], 0)), rel=1e-12)


def test_fleet_deterministic_and_valid():
    a, b = generate_fleet(5, 7), generate_fleet(5, 7)
    assert a == b
    for g in a:
        assert g.invariant_violations() == []
    big = generate_fleet(200, 1)
    assert len(set(big)) == 200
    with pytest.raises(ValueError):
        generate_fleet(0, 1)


def test_demand_scaling_and_capacity():
    fleet = generate_fleet(10, 3)
    profiles = generate_demand(fleet, 24, 365, 5)
    cap = sum(g.p_max for g in fleet)
    med = np.median([p.demand.max() for p in profiles])
    assert abs(med / cap - 0.5) <= 0.01
    for p in profiles:
        assert np.all(p.demand + p.reserve <= cap + 1e-9)
        assert np.allclose(p.reserve, 0.1 * p.demand)
    again = generate_demand(fleet, 24, 365, 5)
    assert all(np.array_equal(p.demand, q.demand) for p, q in zip(profiles, again))
    with pytest.raises(ValueError):
        generate_demand([], 24, 1, 0)
    with pytest.raises(ValueError):
        generate_demand(fleet, 25, 1, 0)


def test_multi_day_profiles():
    fleet = generate_fleet(5, 3)
    profiles = generate_demand(fleet, 48, 20, 1)
    assert all(len(p.demand) == 48 for p in profiles)


def test_json_round_trip(tmp_path):
    inst = make_instances(3, 24, 2, 1, 2)[1]
    text = instance_to_json(inst)
    assert text == instance_to_json(instance_from_dict(json.loads(text)))
    save_instance(inst, tmp_path / "a.json")
    back = load_instance(tmp_path / "a.json")
    assert back.generators == inst.generators
    assert np.array_equal(back.demand, inst.demand)
    assert list(json.loads(text)) == ["n_T", "generators", "demand", "reserve", "meta"]


def test_fingerprint_distinguishes_fleets():
    assert fleet_fingerprint(generate_fleet(5, 1)) == fleet_fingerprint(generate_fleet(5, 1))
    assert fleet_fingerprint(generate_fleet(5, 1)) != fleet_fingerprint(generate_fleet(5, 2))
