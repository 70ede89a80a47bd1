import numpy as np
import pytest

from ucdw.baselines import (DualDataset, DualRecord, build_dataset, coldstart_dual, forest_bytes, load_forest,
                            lpr_dual, nearest_neighbour_dual, rf_predict, save_forest, train_random_forest)
from ucdw.colgen import compute_lower_bound
from ucdw.lp_core import build_uc_model, solve_lp
from ucdw.policy import featurize
from ucdw.pricing import DualPoint
from ucdw.uc_model import fleet_fingerprint, make_instances

N_T = 24


@pytest.fixture(scope="module")
def pool():
    return make_instances(5, N_T, 30, 11, 1001)


def synthetic_dataset(instances, rng):
    fp = fleet_fingerprint(instances[0].generators)
    ds = DualDataset(fp)
    for i, inst in enumerate(instances):
        y = DualPoint.from_vector(rng.uniform(0, 50, 2 * N_T))
        ds.records.append(DualRecord(i, featurize(inst), y, {"i": i}))
    return ds


def test_coldstart_is_zero():
    inst = make_instances(5, N_T, 1, 11, 1)[0]
    assert not coldstart_dual(inst).vector.any()


def test_lpr_dual_bound_beats_lp_value(pool):
    for inst in pool[:3]:
        y, secs = lpr_dual(inst)
        assert y.is_nonnegative() and secs > 0
        lp = solve_lp(build_uc_model(inst).problem).objective
        assert compute_lower_bound(inst, y) >= lp - 1e-6 * abs(lp)


def test_nearest_matches_linear_scan(pool, rng):
    ds = synthetic_dataset(pool[:20], rng)
    for inst in pool[20:]:
        x = featurize(inst)
        best = min(ds.records, key=lambda r: (float(np.sum((r.features - x) ** 2)), r.instance_id))
        assert np.array_equal(nearest_neighbour_dual(ds, inst).vector, best.dual.vector)


def test_nearest_tie_goes_to_lowest_id(pool, rng):
    ds = synthetic_dataset([pool[0], pool[0], pool[0]], rng)
    ds.records = ds.records[::-1]
    got = nearest_neighbour_dual(ds, pool[0])
    assert np.array_equal(got.vector, [r for r in ds.records if r.instance_id == 0][0].dual.vector)


def test_nearest_returns_a_copy(pool, rng):
    ds = synthetic_dataset(pool[:3], rng)
    y = nearest_neighbour_dual(ds, pool[0])
    y.y_load[:] = -1.0
    assert ds.records[0].dual.is_nonnegative()


def test_fleet_mismatch_refused(pool, rng):
    ds = synthetic_dataset(pool[:3], rng)
    other = make_instances(5, N_T, 1, 12, 1)[0]
    with pytest.raises(ValueError):
        nearest_neighbour_dual(ds, other)
    with pytest.raises(ValueError):
        rf_predict(train_random_forest(ds, n_trees=2), other)


def test_depth_zero_forest_predicts_mean(pool, rng):
    ds = synthetic_dataset(pool[:20], rng)
    forest = train_random_forest(ds, n_trees=1, max_depth=0)
    assert np.allclose(rf_predict(forest, pool[25]).vector, ds.targets().mean(axis=0))


def test_forest_prediction_in_target_hull(pool, rng):
    ds = synthetic_dataset(pool[:20], rng)
    forest = train_random_forest(ds, n_trees=15, seed=3)
    T = ds.targets()
    for inst in pool[20:]:
        y = rf_predict(forest, inst).vector
        assert np.all(y >= T.min(axis=0) - 1e-9) and np.all(y <= T.max(axis=0) + 1e-9)


def test_single_tree_separates_two_clusters(pool):
    fp = fleet_fingerprint(pool[0].generators)
    ds = DualDataset(fp)
    for i, inst in enumerate(pool[:20]):
        x = np.zeros(2 * N_T)
        x[0] = 0.1 if i < 10 else 0.9
        y = np.full(2 * N_T, 5.0 if i < 10 else 40.0)
        ds.records.append(DualRecord(i, x, DualPoint.from_vector(y)))
    forest = train_random_forest(ds, n_trees=1, max_depth=1, min_leaf=1)
    tree = forest.trees[0]
    if tree.feature[0] == 0:
        assert np.allclose(tree.predict(ds.records[0].features), 5.0)
        assert np.allclose(tree.predict(ds.records[15].features), 40.0)
    else:
        # the root only saw uninformative features; predictions fall back to the mean
        assert tree.feature[0] == -1
        assert np.allclose(tree.predict(ds.records[0].features), 22.5)
    full = train_random_forest(ds, n_trees=30, max_depth=1, min_leaf=1, seed=1)
    assert any(t.feature[0] == 0 for t in full.trees)


def test_forest_save_load(tmp_path, pool, rng):
    ds = synthetic_dataset(pool[:20], rng)
    forest = train_random_forest(ds, n_trees=5, seed=1)
    save_forest(forest, tmp_path / "f.bin")
    back = load_forest(tmp_path / "f.bin")
    for inst in pool[20:]:
        assert np.array_equal(rf_predict(back, inst).vector, rf_predict(forest, inst).vector)
    assert forest_bytes(back) == forest_bytes(forest)
    data = bytearray((tmp_path / "f.bin").read_bytes())
    data[40] ^= 1
    (tmp_path / "g.bin").write_bytes(bytes(data))
    with pytest.raises(ValueError):
        load_forest(tmp_path / "g.bin")


def test_forest_is_seeded(pool, rng):
    ds = synthetic_dataset(pool[:20], rng)
    assert forest_bytes(train_random_forest(ds, n_trees=4, seed=2)) == forest_bytes(train_random_forest(ds, n_trees=4, seed=2))


def test_forest_settings_checked(pool, rng):
    ds = synthetic_dataset(pool[:3], rng)
    with pytest.raises(ValueError):
        train_random_forest(ds, n_trees=0)
    with pytest.raises(ValueError):
        train_random_forest(ds, min_leaf=0)
    with pytest.raises(ValueError):
        train_random_forest(DualDataset(ds.fingerprint), n_trees=1)
    tiny = train_random_forest(ds, n_trees=2, min_leaf=5)
    assert all(len(t.feature) == 1 for t in tiny.trees)


def test_dataset_round_trip(tmp_path, pool, rng):
    ds = synthetic_dataset(pool[:4], rng)
    ds.save(tmp_path / "d.jsonl")
    back = DualDataset.load(tmp_path / "d.jsonl")
    assert back.fingerprint == ds.fingerprint
    assert np.array_equal(back.features(), ds.features())
    assert np.array_equal(back.targets(), ds.targets())
    lines = (tmp_path / "d.jsonl").read_text().splitlines()
    (tmp_path / "short.jsonl").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError):
        DualDataset.load(tmp_path / "short.jsonl")


def test_build_dataset_keeps_final_duals(pool):
    logs = []
    ds = build_dataset(pool[:3], max_instances=2, log=logs.append)
    assert 1 <= len(ds) <= 2
    assert len(logs) == 2
    for rec in ds.records:
        inst = pool[rec.instance_id]
        assert np.array_equal(rec.features, featurize(inst))
        assert compute_lower_bound(inst, rec.dual) == pytest.approx(rec.meta["lower_bound"])
        assert rec.meta["status"] in ("solved", "converged")


def test_build_dataset_skips_failed_solves(pool, monkeypatch):
    import ucdw.baselines as B
    real = B.run_column_generation

    def flaky(inst, *a, **kw):
        if inst is pool[0]:
            raise RuntimeError("RMP solve failed: numerical")
        return real(inst, *a, **kw)

    monkeypatch.setattr(B, "run_column_generation", flaky)
    logs = []
    ds = build_dataset(pool[:2], log=logs.append)
    assert [r.instance_id for r in ds.records] == [1]
    assert logs[0] == "instance 0: skipped (RMP solve failed: numerical)"


def test_build_dataset_rejects_mixed_fleets(pool):
    other = make_instances(5, N_T, 1, 12, 1)[0]
    with pytest.raises(ValueError):
        build_dataset([pool[0], other], max_iterations=1)
    with pytest.raises(ValueError):
        build_dataset([])
