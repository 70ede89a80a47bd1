"""Command-line entry point: ``ucdw <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or usage error, 3 solve failure.
Options may also come from a JSON file given with ``--config``; explicit
command-line flags take precedence.  ``UCDW_RUNS_DIR`` overrides the run root.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import baselines, bench, policy
from .colgen import ColGenConfig, run_column_generation
from .lp_core import solve_extensive_uc
from .uc_model import UcInstance, generate_demand, generate_fleet, load_instance, save_instance

EXIT_OK, EXIT_CONFIG, EXIT_SOLVE = 0, 2, 3


class SolveFailure(RuntimeError):
    pass


def _instances(args, seed, count):
    fleet = tuple(generate_fleet(args.size, args.fleet_seed))
    return [UcInstance(fleet, p, args.n_T, meta={"seed": seed, "index": i, "fleet_seed": args.fleet_seed})
            for i, p in enumerate(generate_demand(list(fleet), args.n_T, count, seed))]


def cmd_generate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, inst in enumerate(_instances(args, args.seed, args.count)):
        save_instance(inst, out / f"i{i:03d}.json")
    print(f"wrote {args.count} instances to {out}")


def cmd_train_policy(args):
    train = _instances(args, args.train_seed, args.count)
    n_eval = max(1, min(10, len(train) // 10))
    if len(train) <= n_eval:
        raise bench.ConfigError("need more training instances than evaluation instances")
    hidden = policy.WIDE_HIDDEN if args.wide else policy.DESK_HIDDEN
    pol = policy.MlpPolicy.init(train[0].generators, args.n_T, hidden=hidden, seed=args.seed)
    cfg = policy.TrainConfig(steps=args.steps, eval_every=args.eval_every, plateau_patience=args.patience,
                             lr=args.lr, seed=args.seed)
    res = policy.train(pol, train[:-n_eval], train[-n_eval:], cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    policy.save_checkpoint(res.policy, out)
    curve = {"curve": [[s, m, lr] for s, m, lr in res.curve], "best_step": res.best_step,
             "best_metric": res.best_metric}
    Path(args.curve or str(out) + ".curve.json").write_text(json.dumps(curve, indent=1) + "\n")
    print(f"best eval bound {res.best_metric:.6g} at step {res.best_step}; checkpoint {out}")


def cmd_build_dataset(args):
    train = _instances(args, args.train_seed, args.count)
    ds = baselines.build_dataset(train, tolerance=args.tol, max_instances=args.max_instances,
                                 time_limit=args.time_limit, max_iterations=args.max_iterations,
                                 log=lambda m: print(m, file=sys.stderr))
    if not len(ds):
        raise SolveFailure("no training instance was solved")
    ds.save(args.out)
    print(f"{len(ds)} records written to {args.out}")


def cmd_train_forest(args):
    ds = baselines.DualDataset.load(args.dataset)
    forest = baselines.train_random_forest(ds, n_trees=args.trees, max_depth=args.depth,
                                           min_leaf=args.min_leaf, seed=args.seed)
    baselines.save_forest(forest, args.out)
    print(f"forest with {len(forest.trees)} trees written to {args.out}")


def cmd_solve(args):
    inst = load_instance(args.instance)
    artifacts = {k: v for k, v in (("policy", args.policy), ("dataset", args.dataset), ("forest", args.forest)) if v}
    y0, t_init = bench.initial_dual(args.init, inst, artifacts)
    cfg = ColGenConfig(gap_tolerance=args.tol, time_limit_seconds=args.time_limit, max_iterations=args.max_iterations)
    try:
        res = run_column_generation(inst, y0, cfg, init_time=t_init)
    except Exception as exc:
        raise SolveFailure(str(exc)) from exc
    out = {"instance": Path(args.instance).stem, "method": args.init, "result": res.to_dict(timings=args.timings)}
    if args.timings:
        out["init_time"] = t_init
    if args.exact:
        ex = solve_extensive_uc(inst, gap_tol=1e-6)
        out["exact"] = {"objective": ex.objective, "bound": ex.bound, "status": ex.status}
    text = json.dumps(out, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"{res.status}: lb {res.best_lower_bound:.6g} ub {res.upper_bound:.6g} in {res.iterations} iterations")
    else:
        sys.stdout.write(text)


def cmd_bench(args):
    d = {}
    if args.bench_config:
        d = json.loads(Path(args.bench_config).read_text())
    for key in ("sizes", "n_test_instances", "time_limit", "methods", "workers"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    cfg = bench.BenchmarkConfig.from_dict(d)
    base = bench.run_benchmark(cfg, args.bench_id, args.runs_dir, log=lambda m: print(m, file=sys.stderr))
    csv_path, md_path = bench.emit_report(base)
    print(f"report written to {csv_path} and {md_path}")


def cmd_report(args):
    base = bench.runs_root(args.runs_dir) / args.bench_id
    csv_path, md_path = bench.emit_report(base, args.out)
    print(f"report written to {csv_path} and {md_path}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ucdw", description="Column generation for unit commitment with dual warmstarts.")
    p.add_argument("--config", help="JSON file with option defaults for the chosen subcommand")
    sub = p.add_subparsers(dest="command", required=True)
    p.subcommands = sub.choices

    def fleet_opts(sp):
        sp.add_argument("--size", type=int, default=10, help="number of generators")
        sp.add_argument("--n-T", dest="n_T", type=int, default=24, help="periods (multiple of 24)")
        sp.add_argument("--fleet-seed", type=int, default=11)

    sp = sub.add_parser("generate", help="write seeded instances as JSON")
    fleet_opts(sp)
    sp.add_argument("--seed", type=int, default=2002, help="demand seed")
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--out", default="instances")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("train-policy", help="train the dual network on sampled bounds")
    fleet_opts(sp)
    sp.add_argument("--train-seed", type=int, default=1001)
    sp.add_argument("--count", type=int, default=200, help="training instances")
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--eval-every", type=int, default=100)
    sp.add_argument("--patience", type=int, default=3)
    sp.add_argument("--lr", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--wide", action="store_true", help="4 x 1000 hidden units")
    sp.add_argument("--out", default="policy.ckpt")
    sp.add_argument("--curve", help="training curve JSON (default: <out>.curve.json)")
    sp.set_defaults(func=cmd_train_policy)

    sp = sub.add_parser("build-dataset", help="solve training instances and store their duals")
    fleet_opts(sp)
    sp.add_argument("--train-seed", type=int, default=1001)
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--max-instances", type=int, default=50)
    sp.add_argument("--tol", type=float, default=0.0025)
    sp.add_argument("--time-limit", type=float, default=300.0)
    sp.add_argument("--max-iterations", type=int, default=200)
    sp.add_argument("--out", default="dataset.jsonl")
    sp.set_defaults(func=cmd_build_dataset)

    sp = sub.add_parser("train-forest", help="fit the random forest on a dual dataset")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--trees", type=int, default=100)
    sp.add_argument("--depth", type=int, default=12)
    sp.add_argument("--min-leaf", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="forest.bin")
    sp.set_defaults(func=cmd_train_forest)

    sp = sub.add_parser("solve", help="run column generation on one instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--init", choices=bench.METHODS, default="coldstart")
    sp.add_argument("--tol", type=float, default=0.0025)
    sp.add_argument("--time-limit", type=float, default=300.0)
    sp.add_argument("--max-iterations", type=int, default=200)
    sp.add_argument("--policy")
    sp.add_argument("--dataset")
    sp.add_argument("--forest")
    sp.add_argument("--timings", action="store_true", help="include wall-clock timings (output no longer reproducible)")
    sp.add_argument("--exact", action="store_true", help="also solve the full MILP for reference")
    sp.add_argument("--out", help="result JSON path (default: stdout)")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("bench", help="run the full benchmark protocol and write the report")
    sp.add_argument("--bench-id", default="desk")
    sp.add_argument("--runs-dir")
    sp.add_argument("--bench-config", help="JSON file with benchmark settings")
    sp.add_argument("--sizes", type=int, nargs="+")
    sp.add_argument("--n-test-instances", type=int)
    sp.add_argument("--time-limit", type=float)
    sp.add_argument("--methods", nargs="+", choices=bench.METHODS)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("report", help="aggregate stored runs into CSV and markdown tables")
    sp.add_argument("--bench-id", default="desk")
    sp.add_argument("--runs-dir")
    sp.add_argument("--out", help="output directory (default: the bench directory)")
    sp.set_defaults(func=cmd_report)
    return p


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        if not isinstance(cfg, dict):
            raise bench.ConfigError("config file must hold a JSON object")
        # re-parse with the file's values as defaults so explicit flags still win
        sub = parser.subcommands[args.command]
        dests = {a.dest for a in sub._actions}
        unknown = set(cfg) - dests
        if unknown:
            raise bench.ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except SolveFailure as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except (bench.ConfigError, policy.CheckpointError, policy.FleetMismatchError, FileNotFoundError,
            json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
