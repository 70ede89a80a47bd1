import numpy as np
import pytest

from conftest import make_gen, random_dual, tiny_instance
from oracles import dense_regularized_qp, hull_master_value, kelley
from ucdw.colgen import compute_lower_bound
from ucdw.heuristics import local_search_commit
from ucdw.master import (ColumnIntegrityError, ColumnPool, add_column, add_columns, make_column,
                         solve_regularized_rmp, solve_rmp)
from ucdw.pricing import DualPoint, solve_all_pricing, solve_pricing
from ucdw.uc_model import DemandProfile, Schedule, UcInstance, evaluate_cost


def seeded_pool(inst, rng, n_duals=8, scale=30.0):
    pool = ColumnPool(inst.n_G)
    add_columns(inst, pool, solve_all_pricing(inst, DualPoint.zeros(inst.n_T)).results)
    for _ in range(n_duals):
        add_columns(inst, pool, solve_all_pricing(inst, random_dual(rng, inst.n_T, scale)).results)
    return pool


def test_duplicate_column_is_ignored(rng):
    inst = tiny_instance(rng, n_G=2, n_T=4)
    pool = ColumnPool(2)
    y = random_dual(rng, 4, 20.0)
    res = solve_all_pricing(inst, y).results
    assert add_columns(inst, pool, res) == 2
    assert add_columns(inst, pool, res) == 0
    assert len(pool) == 2


def test_inconsistent_column_rejected(rng):
    inst = tiny_instance(rng, n_G=1, n_T=4)
    res = solve_pricing(inst.generators[0], random_dual(rng, 4, 20.0), 4)
    col = make_column(inst, 0, res)
    col.load = col.load + 1.0
    with pytest.raises(ColumnIntegrityError):
        add_column(inst, ColumnPool(1), col)
    col = make_column(inst, 0, res)
    col.cost += 5.0
    with pytest.raises(ColumnIntegrityError):
        add_column(inst, ColumnPool(1), col)


def test_rmp_needs_a_column_per_generator(rng):
    inst = tiny_instance(rng, n_G=2, n_T=4)
    with pytest.raises(ValueError):
        solve_rmp(inst, ColumnPool(2))


def test_rmp_artificials_cover_infeasible_pool():
    g = make_gen()
    inst = UcInstance((g,), DemandProfile(np.full(3, 5.0), np.zeros(3)), 3)
    pool = ColumnPool(1)
    add_columns(inst, pool, [solve_pricing(g, DualPoint.zeros(3), 3)])  # all off
    sol = solve_rmp(inst, pool)
    assert sol.artificial.sum() == pytest.approx(15.0)
    assert np.all(sol.duals.y_load > 0)


@pytest.mark.parametrize("seed", range(5))
def test_converged_rmp_equals_hull_master(seed):
    inst = tiny_instance(np.random.default_rng(seed), n_G=3, n_T=4, load=0.6)
    _, rmp = kelley(inst)
    assert rmp.artificial.sum() == pytest.approx(0.0, abs=1e-9)
    assert rmp.objective == pytest.approx(hull_master_value(inst), rel=1e-8)
    # Lagrangian bound at the optimal RMP duals recovers the master value
    assert compute_lower_bound(inst, rmp.duals) == pytest.approx(rmp.objective, rel=1e-7)


@pytest.mark.parametrize("seed", range(6))
def test_regularized_rmp_matches_dense_qp(seed):
    rng = np.random.default_rng(100 + seed)
    inst = tiny_instance(rng, n_G=2, n_T=3, load=0.6)
    pool = seeded_pool(inst, rng)
    center = random_dual(rng, 3, 15.0).vector
    mu = float(10.0 ** rng.uniform(-2, 1))
    sol = solve_regularized_rmp(inst, pool, center, mu)
    y_ref, _, obj_ref = dense_regularized_qp(inst, pool, center, mu)
    assert sol.status == "optimal"
    assert np.allclose(sol.duals.vector, y_ref, atol=1e-5 * (1 + np.abs(y_ref).max()))
    assert sol.objective == pytest.approx(obj_ref, rel=1e-6, abs=1e-6)
    for w in sol.weights:
        assert w.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(w >= 0)


def test_huge_mu_returns_centre(rng):
    inst = tiny_instance(rng, n_G=2, n_T=4)
    pool = seeded_pool(inst, rng)
    center = random_dual(rng, 4, 10.0).vector
    sol = solve_regularized_rmp(inst, pool, center, 1e9)
    assert sol.status == "optimal"
    assert np.allclose(sol.duals.vector, center, atol=1e-6)


def test_tiny_mu_recovers_rmp_value():
    inst = tiny_instance(np.random.default_rng(3), n_G=3, n_T=4, load=0.6)
    pool, rmp = kelley(inst)
    sol = solve_regularized_rmp(inst, pool, np.zeros(8), 1e-9)
    assert sol.objective == pytest.approx(rmp.objective, rel=1e-4)


def test_sigma_respects_every_cut(rng):
    inst = tiny_instance(rng, n_G=3, n_T=4)
    pool = seeded_pool(inst, rng)
    sol = solve_regularized_rmp(inst, pool, random_dual(rng, 4, 10.0), 0.5)
    y = sol.duals.vector
    for s, col in pool.all():
        assert sol.sigma[s] <= col.cost - col.contribution @ y + 1e-6


def test_solution_continuous_in_centre(rng):
    inst = tiny_instance(rng, n_G=2, n_T=4)
    pool = seeded_pool(inst, rng)
    center = random_dual(rng, 4, 10.0).vector + 1.0
    a = solve_regularized_rmp(inst, pool, center, 1.0).duals.vector
    b = solve_regularized_rmp(inst, pool, center + 1e-8, 1.0).duals.vector
    assert np.max(np.abs(a - b)) <= 1e-5


def test_regularized_rmp_input_checks(rng):
    inst = tiny_instance(rng, n_G=1, n_T=2)
    pool = seeded_pool(inst, rng, n_duals=1)
    with pytest.raises(ValueError):
        solve_regularized_rmp(inst, pool, np.zeros(4), 0.0)
    with pytest.raises(ValueError):
        solve_regularized_rmp(inst, pool, -np.ones(4), 1.0)


@pytest.mark.parametrize("seed", range(4))
def test_weak_duality_chain(seed):
    rng = np.random.default_rng(200 + seed)
    inst = tiny_instance(rng, n_G=3, n_T=4, load=0.5)
    pool = seeded_pool(inst, rng)
    rmp = solve_rmp(inst, pool)
    master = hull_master_value(inst)
    y = random_dual(rng, 4, 30.0)
    lb = compute_lower_bound(inst, y)
    assert lb <= master + 1e-7 * abs(master)
    assert master <= rmp.objective + 1e-7 * abs(master)
    feas = local_search_commit(inst, [Schedule.from_commitment(np.ones(4), np.zeros(4), g.initial_on)
                                      for g in inst.generators])
    if feas is not None:
        assert master <= evaluate_cost(inst, feas) + 1e-7 * abs(master)
