"""Non-network warmstarts: coldstart, LP-relaxation duals, nearest neighbour and a random forest."""

from __future__ import annotations

import json
import math
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .colgen import ColGenConfig, run_column_generation
from .lp_core import build_uc_model, solve_lp
from .policy import featurize
from .pricing import DualPoint
from .uc_model import UcInstance, fleet_fingerprint

FOREST_MAGIC = b"UCRF"
FOREST_VERSION = 1
# statuses whose final dual is kept: within tolerance, or master problem solved
DATASET_STATUSES = ("solved", "converged")


def coldstart_dual(instance: UcInstance) -> DualPoint:
    return DualPoint.zeros(instance.n_T)


def lpr_dual(instance: UcInstance):
    """Load and reserve row duals of the LP relaxation, and the wall time to get them."""
    t0 = time.perf_counter()
    model = build_uc_model(instance)
    sol = solve_lp(model.problem)
    if not sol.optimal:
        raise RuntimeError(f"LP relaxation failed: {sol.status}")
    n_T = instance.n_T
    y = np.maximum(sol.duals[: 2 * n_T], 0.0)
    return DualPoint.from_vector(y), time.perf_counter() - t0


# --- dataset ------------------------------------------------------------------


@dataclass
class DualRecord:
    instance_id: int
    features: np.ndarray
    dual: DualPoint
    meta: dict = field(default_factory=dict)


@dataclass
class DualDataset:
    fingerprint: int
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def features(self) -> np.ndarray:
        return np.array([r.features for r in self.records])

    def targets(self) -> np.ndarray:
        return np.array([r.dual.vector for r in self.records])

    def save(self, path) -> None:
        lines = [json.dumps({"fingerprint": self.fingerprint, "n_records": len(self.records)})]
        for r in self.records:
            lines.append(json.dumps({"instance_id": r.instance_id, "features": r.features.tolist(),
                                     "dual": r.dual.vector.tolist(), "meta": r.meta}, sort_keys=True))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "DualDataset":
        lines = Path(path).read_text().splitlines()
        if not lines:
            raise ValueError("empty dataset file")
        head = json.loads(lines[0])
        ds = cls(int(head["fingerprint"]))
        for line in lines[1:]:
            d = json.loads(line)
            dual = DualPoint.from_vector(np.array(d["dual"], dtype=float))
            if not dual.is_nonnegative():
                raise ValueError("dataset dual has negative entries")
            ds.records.append(DualRecord(int(d["instance_id"]), np.array(d["features"], dtype=float), dual, d["meta"]))
        if len(ds.records) != head["n_records"]:
            raise ValueError("dataset record count mismatch")
        return ds


def build_dataset(instances, tolerance: float = 0.0025, max_instances: int | None = None,
                  time_limit: float = 300.0, max_iterations: int = 200, log=None) -> DualDataset:
    """Solve training instances warmstarted from LP duals and keep the best dual of each."""
    instances = list(instances)
    if not instances:
        raise ValueError("no training instances")
    fp = fleet_fingerprint(instances[0].generators)
    ds = DualDataset(fp)
    cfg = ColGenConfig(gap_tolerance=tolerance, time_limit_seconds=time_limit, max_iterations=max_iterations)
    for i, inst in enumerate(instances):
        if max_instances is not None and i >= max_instances:
            break
        if fleet_fingerprint(inst.generators) != fp:
            raise ValueError("all dataset instances must share one fleet")
        y0, t_init = lpr_dual(inst)
        try:
            res = run_column_generation(inst, y0, cfg, init_time=t_init)
        except RuntimeError as exc:
            if log is not None:
                log(f"instance {i}: skipped ({exc})")
            continue
        if res.status not in DATASET_STATUSES:
            if log is not None:
                log(f"instance {i}: skipped ({res.status})")
            continue
        meta = {"status": res.status, "iterations": res.iterations,
                "lower_bound": res.best_lower_bound, "upper_bound": res.upper_bound}
        ds.records.append(DualRecord(i, featurize(inst), res.best_dual, meta))
        if log is not None:
            log(f"instance {i}: {res.status} in {res.iterations} iterations")
    return ds


def nearest_neighbour_dual(dataset: DualDataset, instance: UcInstance) -> DualPoint:
    """Stored dual of the closest feature vector; ties go to the lowest instance id."""
    if not len(dataset):
        raise ValueError("empty dataset")
    if fleet_fingerprint(instance.generators) != dataset.fingerprint:
        raise ValueError("instance fleet differs from the dataset fleet")
    x = featurize(instance)
    d2 = np.sum((dataset.features() - x) ** 2, axis=1)
    ids = np.array([r.instance_id for r in dataset.records])
    best = np.lexsort((ids, d2))[0]
    rec = dataset.records[best]
    return DualPoint(rec.dual.y_load.copy(), rec.dual.y_reserve.copy())


# --- random forest --------------------------------------------------------------


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_out) leaf means (also stored at inner nodes)

    def predict(self, x) -> np.ndarray:
        node = 0
        while self.feature[node] >= 0:
            node = self.left[node] if x[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self.value[node]


def _best_split(X, Y, idx, feats, min_leaf):
    """Split maximizing the drop in summed squared error over all outputs."""
    n = len(idx)
    best = (0.0, -1, 0.0)
    total = Y[idx].sum(axis=0)
    base = float(total @ total) / n
    for f in feats:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cum = np.cumsum(Y[idx][order], axis=0)
        # candidate cut after position k-1 (left has k points)
        k = np.arange(min_leaf, n - min_leaf + 1)
        if not len(k):
            continue
        k = k[xs[k - 1] < xs[np.minimum(k, n - 1)]]
        if not len(k):
            continue
        left = cum[k - 1]
        right = total - left
        gain = np.sum(left * left, axis=1) / k + np.sum(right * right, axis=1) / (n - k) - base
        j = int(np.argmax(gain))
        if gain[j] > best[0] + 1e-12:
            kk = k[j]
            best = (float(gain[j]), int(f), 0.5 * (xs[kk - 1] + xs[kk]))
    return best


def _grow(X, Y, idx, max_depth, min_leaf, n_feat, rng) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def node(ids, depth):
        me = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(Y[ids].mean(axis=0))
        if depth >= max_depth or len(ids) < 2 * min_leaf:
            return me
        feats = np.sort(rng.choice(X.shape[1], size=n_feat, replace=False))
        gain, f, thr = _best_split(X, Y, ids, feats, min_leaf)
        if f < 0:
            return me
        mask = X[ids, f] <= thr
        feature[me], threshold[me] = f, thr
        left[me] = node(ids[mask], depth + 1)
        right[me] = node(ids[~mask], depth + 1)
        return me

    node(idx, 0)
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


@dataclass
class RandomForest:
    trees: list
    fingerprint: int
    n_features: int
    n_outputs: int

    def predict(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape != (self.n_features,):
            raise ValueError("feature length mismatch")
        return np.mean([t.predict(x) for t in self.trees], axis=0)


def train_random_forest(dataset: DualDataset, n_trees: int = 100, max_depth: int = 12, min_leaf: int = 2,
                        seed: int = 0) -> RandomForest:
    """Bagged multi-output CART regression trees with sqrt(d) features per split."""
    if not len(dataset):
        raise ValueError("empty dataset")
    if n_trees < 1 or min_leaf < 1 or max_depth < 0:
        raise ValueError("bad forest settings")
    X, Y = dataset.features(), dataset.targets()
    n, d = X.shape
    n_feat = max(1, int(math.sqrt(d)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, n, n) if n_trees > 1 else np.arange(n)
        trees.append(_grow(X, Y, boot, max_depth, min_leaf, n_feat, rng))
    return RandomForest(trees, dataset.fingerprint, d, Y.shape[1])


def rf_predict(forest: RandomForest, instance: UcInstance) -> DualPoint:
    if fleet_fingerprint(instance.generators) != forest.fingerprint:
        raise ValueError("instance fleet differs from the forest's fleet")
    return DualPoint.from_vector(np.maximum(forest.predict(featurize(instance)), 0.0))


def forest_bytes(forest: RandomForest) -> bytes:
    out = [FOREST_MAGIC, struct.pack("<IQIII", FOREST_VERSION, forest.fingerprint, forest.n_features,
                                     forest.n_outputs, len(forest.trees))]
    for t in forest.trees:
        out.append(struct.pack("<I", len(t.feature)))
        out += [t.feature.astype("<i8").tobytes(), t.threshold.astype("<f8").tobytes(),
                t.left.astype("<i8").tobytes(), t.right.astype("<i8").tobytes(), t.value.astype("<f8").tobytes()]
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


def save_forest(forest: RandomForest, path) -> None:
    Path(path).write_bytes(forest_bytes(forest))


def load_forest(path) -> RandomForest:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != FOREST_MAGIC:
        raise ValueError("not a forest file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ValueError("forest checksum mismatch")
    version, fp, n_feat, n_out, n_trees = struct.unpack_from("<IQIII", body, 4)
    if version != FOREST_VERSION:
        raise ValueError(f"unsupported forest version {version}")
    pos = 4 + struct.calcsize("<IQIII")
    trees = []

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=pos).copy()
        pos += arr.nbytes
        return arr

    try:
        for _ in range(n_trees):
            (m,) = struct.unpack_from("<I", body, pos)
            pos += 4
            trees.append(Tree(take("<i8", m), take("<f8", m), take("<i8", m), take("<i8", m),
                              take("<f8", m * n_out).reshape(m, n_out)))
    except (ValueError, struct.error) as exc:
        raise ValueError("truncated forest file") from exc
    if pos != len(body):
        raise ValueError("trailing bytes in forest file")
    return RandomForest(trees, fp, n_feat, n_out)
