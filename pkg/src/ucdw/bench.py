"""Benchmark protocol: train warmstarts, solve held-out instances per method, aggregate tables.

Every number in a report is read back from the per-run JSON files, so a sweep
can be interrupted and resumed; finished (instance, method) cells are skipped.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import baselines, policy
from .colgen import ColGenConfig, run_column_generation
from .lp_core import solve_extensive_uc
from .uc_model import UcInstance, generate_demand, generate_fleet, load_instance, save_instance

METHODS = ("coldstart", "lpr", "nearest", "forest", "network")
REPORT_COLUMNS = ("size", "method", "tolerance", "solved", "mean_time_s", "mean_iters", "mean_scaled_lb",
                  "mean_scaled_ub", "init_time_s", "t_rmp", "t_pricing", "t_heuristic")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class BenchmarkConfig:
    sizes: tuple = (5, 10, 20)
    n_T: int = 24
    n_test_instances: int = 40
    n_train_instances: int = 200
    n_dataset_instances: int = 50
    tolerances: tuple = (0.01, 0.005, 0.0025)
    time_limit: float = 300.0
    max_iterations: int = 200
    methods: tuple = METHODS
    fleet_seed: int = 11
    train_seed: int = 1001
    test_seed: int = 2002
    policy_seed: int = 0
    train_steps: int = 2000
    forest_trees: int = 100
    reference_gap: float = 1e-4
    reference_time_limit: float = 600.0
    workers: int = 1

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.tolerances = tuple(float(t) for t in self.tolerances)
        self.methods = tuple(self.methods)
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        if list(self.tolerances) != sorted(self.tolerances, reverse=True) or min(self.tolerances) <= 0:
            raise ConfigError("tolerances must be positive and descending")
        if min(self.sizes) < 1 or self.n_test_instances < 1 or self.time_limit <= 0 or self.workers < 1:
            raise ConfigError("sizes, instance counts, time limit and workers must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def large_preset(cls, **kw) -> "BenchmarkConfig":
        return cls(sizes=(200, 600, 1000), n_T=48, **kw)


def runs_root(explicit=None) -> Path:
    return Path(explicit or os.environ.get("UCDW_RUNS_DIR") or "runs")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n")
    tmp.replace(path)


def _finite(x):
    return float(x) if x is not None and math.isfinite(x) else None


def size_instances(config: BenchmarkConfig, size: int):
    """Fleet plus training and held-out test instances (separate demand pools)."""
    fleet = tuple(generate_fleet(size, config.fleet_seed))
    train = [UcInstance(fleet, p, config.n_T) for p in
             generate_demand(list(fleet), config.n_T, config.n_train_instances, config.train_seed)]
    test = [UcInstance(fleet, p, config.n_T, meta={"index": i}) for i, p in
            enumerate(generate_demand(list(fleet), config.n_T, config.n_test_instances, config.test_seed))]
    return fleet, train, test


def prepare_artifacts(config: BenchmarkConfig, size: int, train, out_dir: Path, log=print) -> dict:
    """Train the learned warmstarts once per size; reuse files that already exist."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"policy": out_dir / "policy.ckpt", "dataset": out_dir / "dataset.jsonl", "forest": out_dir / "forest.bin"}
    wanted = set(config.methods)
    if "network" in wanted and not paths["policy"].exists():
        n_eval = max(1, min(10, len(train) // 10))
        pol = policy.MlpPolicy.init(train[0].generators, config.n_T, seed=config.policy_seed)
        res = policy.train(pol, train[:-n_eval], train[-n_eval:],
                           policy.TrainConfig(steps=config.train_steps, seed=config.policy_seed))
        policy.save_checkpoint(res.policy, paths["policy"])
        _write_json(out_dir / "train_curve.json", {"curve": res.curve, "best_step": res.best_step})
        log(f"size {size}: policy trained, best eval {res.best_metric:.6g} at step {res.best_step}")
    if wanted & {"nearest", "forest"} and not paths["dataset"].exists():
        ds = baselines.build_dataset(train, tolerance=min(config.tolerances), max_instances=config.n_dataset_instances,
                                     time_limit=config.time_limit, max_iterations=config.max_iterations)
        if not len(ds):
            raise RuntimeError(f"size {size}: dataset is empty")
        ds.save(paths["dataset"])
        log(f"size {size}: dataset with {len(ds)} records")
    if "forest" in wanted and not paths["forest"].exists():
        forest = baselines.train_random_forest(baselines.DualDataset.load(paths["dataset"]),
                                               n_trees=config.forest_trees, seed=config.policy_seed)
        baselines.save_forest(forest, paths["forest"])
        log(f"size {size}: forest trained")
    return {k: str(v) for k, v in paths.items()}


def initial_dual(method: str, instance: UcInstance, artifacts: dict | None = None, cache: dict | None = None):
    """(dual, wall seconds) for one initialization method."""
    artifacts = artifacts or {}
    cache = cache if cache is not None else {}

    def load(key, fn):
        if key not in cache:
            if key not in artifacts or not Path(artifacts[key]).exists():
                raise ConfigError(f"method needs a {key} artifact")
            cache[key] = fn(artifacts[key])
        return cache[key]

    if method == "lpr":
        return baselines.lpr_dual(instance)
    if method == "network":
        pol = load("policy", lambda p: policy.load_checkpoint(p, instance.generators))
    elif method == "nearest":
        ds = load("dataset", baselines.DualDataset.load)
    elif method == "forest":
        forest = load("forest", baselines.load_forest)
    elif method != "coldstart":
        raise ConfigError(f"unknown method {method}")
    t0 = time.perf_counter()
    if method == "coldstart":
        y = baselines.coldstart_dual(instance)
    elif method == "network":
        y = pol.predict(instance)
    elif method == "nearest":
        y = baselines.nearest_neighbour_dual(ds, instance)
    else:
        y = baselines.rf_predict(forest, instance)
    return y, time.perf_counter() - t0


def solve_cell(instance_path: str, method: str, artifacts: dict, tolerance: float, time_limit: float,
               max_iterations: int, timings: bool = True) -> dict:
    inst = load_instance(instance_path)
    y0, t_init = initial_dual(method, inst, artifacts)
    cfg = ColGenConfig(gap_tolerance=tolerance, time_limit_seconds=time_limit, max_iterations=max_iterations)
    res = run_column_generation(inst, y0, cfg, init_time=t_init)
    out = {"schema": SCHEMA_VERSION, "method": method, "instance": Path(instance_path).stem,
           "result": res.to_dict(timings=timings)}
    if timings:
        out["init_time"] = t_init
    return out


def _reference(inst_path: Path, ref_path: Path, config: BenchmarkConfig) -> dict:
    if ref_path.exists():
        return json.loads(ref_path.read_text())
    t0 = time.perf_counter()
    ex = solve_extensive_uc(load_instance(inst_path), gap_tol=config.reference_gap,
                            time_limit=config.reference_time_limit)
    ref = {"objective": _finite(ex.objective), "bound": _finite(ex.bound), "status": ex.status,
           "seconds": time.perf_counter() - t0}
    _write_json(ref_path, ref)
    return ref


def run_benchmark(config: BenchmarkConfig, bench_id: str, root=None, log=print) -> Path:
    """Execute (or resume) the full protocol; returns the bench directory."""
    base = runs_root(root) / bench_id
    cfg_path = base / "config.json"
    cfg_dict = json.loads(json.dumps(asdict(config)))
    if cfg_path.exists() and json.loads(cfg_path.read_text()) != cfg_dict:
        raise ConfigError(f"{cfg_path} holds a different configuration; use a new bench id")
    _write_json(cfg_path, cfg_dict)
    for size in config.sizes:
        sdir = base / str(size)
        fleet, train, test = size_instances(config, size)
        inst_paths = []
        for i, inst in enumerate(test):
            p = sdir / "instances" / f"i{i:03d}.json"
            if not p.exists():
                p.parent.mkdir(parents=True, exist_ok=True)
                save_instance(inst, p)
            inst_paths.append(p)
        for p in inst_paths:
            _reference(p, sdir / "reference" / p.name, config)
        artifacts = prepare_artifacts(config, size, train, sdir / "artifacts", log=log)
        cells = [(p, m) for p in inst_paths for m in config.methods if not (sdir / m / p.name).exists()]
        args = [(str(p), m, artifacts, min(config.tolerances), config.time_limit, config.max_iterations) for p, m in cells]
        # each run is written as soon as it finishes so an interrupted sweep can resume
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                for (p, m), out in zip(cells, pool.map(_solve_star, args)):
                    _write_json(sdir / m / p.name, out)
        else:
            for (p, m), a in zip(cells, args):
                _write_json(sdir / m / p.name, _solve_star(a))
        log(f"size {size}: {len(cells)} runs done, {len(inst_paths) * len(config.methods) - len(cells)} reused")
    return base


def _solve_star(a):
    try:
        return solve_cell(*a)
    except Exception as exc:  # recorded, never aborts the sweep
        return {"schema": SCHEMA_VERSION, "method": a[1], "instance": Path(a[0]).stem, "error": repr(exc)}


# --- report -------------------------------------------------------------------


def _phase_until(log: list, it: int | None) -> dict:
    recs = log if it is None else [r for r in log if r["iter"] <= it]
    return {k: float(sum(r[k] for r in recs)) for k in ("t_rmp", "t_pricing", "t_heuristic")}


def collect_runs(bench_dir: Path) -> list:
    """Rows (size, method, instance, run dict, reference dict) read from disk."""
    rows = []
    if not bench_dir.is_dir():
        return rows
    for sdir in sorted((d for d in bench_dir.iterdir() if d.is_dir() and d.name.isdigit()), key=lambda d: int(d.name)):
        for mdir in sorted(d for d in sdir.iterdir() if d.is_dir() and d.name in METHODS):
            for f in sorted(mdir.glob("*.json")):
                run = json.loads(f.read_text())
                if run.get("schema") != SCHEMA_VERSION:
                    raise ConfigError(f"{f}: schema version {run.get('schema')} != {SCHEMA_VERSION}")
                ref_file = sdir / "reference" / f.name
                ref = json.loads(ref_file.read_text()) if ref_file.exists() else {}
                rows.append((int(sdir.name), mdir.name, f.stem, run, ref))
    return rows


def aggregate(rows: list, tolerances, time_limit: float) -> list:
    """One record per (size, method, tolerance) with the report columns."""
    groups = {}
    for size, method, _, run, ref in rows:
        groups.setdefault((size, method), []).append((run, ref))
    out = []
    order = {m: i for i, m in enumerate(METHODS)}
    for (size, method) in sorted(groups, key=lambda k: (k[0], order[k[1]])):
        runs = [(r, ref) for r, ref in groups[(size, method)] if "result" in r]
        for tol in tolerances:
            key = f"{tol:g}"
            solved, times, iters, phases = 0, [], [], []
            lbs, ubs, inits = [], [], []
            for run, ref in runs:
                res = run["result"]
                cross = res["crossings"].get(key)
                if cross is not None:
                    solved += 1
                    times.append(cross["time"])
                    iters.append(cross["iter"])
                    phases.append(_phase_until(res["log"], cross["iter"]))
                else:
                    times.append(time_limit)
                    iters.append(res["iterations"])
                    phases.append(_phase_until(res["log"], None))
                inits.append(run.get("init_time", 0.0))
                opt = ref.get("objective")
                if opt:
                    lb, ub = res["first_lower_bound"], res["first_upper_bound"]
                    lbs.append(lb / opt if lb is not None else -math.inf)
                    ubs.append(ub / opt if ub is not None else math.inf)
            mean = lambda v: float(np.mean(v)) if v else math.nan  # noqa: E731
            out.append({
                "size": size, "method": method, "tolerance": tol, "solved": solved,
                "mean_time_s": mean(times), "mean_iters": mean(iters),
                "mean_scaled_lb": mean(lbs), "mean_scaled_ub": mean(ubs), "init_time_s": mean(inits),
                "t_rmp": mean([p["t_rmp"] for p in phases]), "t_pricing": mean([p["t_pricing"] for p in phases]),
                "t_heuristic": mean([p["t_heuristic"] for p in phases]), "n_runs": len(runs),
            })
    return out


def _fmt(x, digits=5):
    if isinstance(x, float):
        return f"{x:.{digits}g}" if math.isfinite(x) else str(x)
    return str(x)


def emit_report(bench_dir, out_dir=None) -> tuple[Path, Path]:
    """Write report.csv and report.md for a bench directory."""
    bench_dir = Path(bench_dir)
    cfg_file = bench_dir / "config.json"
    if not cfg_file.exists():
        raise ConfigError(f"no benchmark config in {bench_dir}")
    config = BenchmarkConfig.from_dict(json.loads(cfg_file.read_text()))
    rows = collect_runs(bench_dir)
    if not rows:
        raise ConfigError(f"no runs under {bench_dir}")
    agg = aggregate(rows, config.tolerances, config.time_limit)
    out_dir = Path(out_dir or bench_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in agg:
        w.writerow([_fmt(r[c], 10) if isinstance(r[c], float) else r[c] for c in REPORT_COLUMNS])
    csv_path = out_dir / "report.csv"
    csv_path.write_text(buf.getvalue())
    md_path = out_dir / "report.md"
    md_path.write_text(_markdown(agg, config))
    return csv_path, md_path


def _markdown(agg: list, config: BenchmarkConfig) -> str:
    lines = ["# Benchmark report", ""]
    if config.workers > 1:
        lines += [f"Runs were executed by {config.workers} parallel workers; timings are approximate.", ""]
    first_tol = config.tolerances[0]
    lines += ["## Bounds after one iteration (scaled by the exact optimum)", "",
              "| size | method | lower bound | upper bound |", "|---|---|---|---|"]
    for r in agg:
        if r["tolerance"] == first_tol:
            lines.append(f"| {r['size']} | {r['method']} | {_fmt(r['mean_scaled_lb'])} | {_fmt(r['mean_scaled_ub'])} |")
    lines += ["", "## Time and iterations to reach each tolerance", "",
              "| size | tolerance | method | solved | mean time (s) | mean iterations |", "|---|---|---|---|---|---|"]
    for r in sorted(agg, key=lambda r: (r["size"], -r["tolerance"])):
        lines.append(f"| {r['size']} | {r['tolerance']:g} | {r['method']} | {r['solved']}/{r['n_runs']} | "
                     f"{_fmt(r['mean_time_s'], 4)} | {_fmt(r['mean_iters'], 4)} |")
    lines += ["", "## Time per phase (s)", "",
              "| size | tolerance | method | initialization | RMP | pricing | heuristic |", "|---|---|---|---|---|---|---|"]
    for r in sorted(agg, key=lambda r: (r["size"], -r["tolerance"])):
        lines.append(f"| {r['size']} | {r['tolerance']:g} | {r['method']} | {_fmt(r['init_time_s'], 3)} | "
                     f"{_fmt(r['t_rmp'], 3)} | {_fmt(r['t_pricing'], 3)} | {_fmt(r['t_heuristic'], 3)} |")
    return "\n".join(lines) + "\n"
