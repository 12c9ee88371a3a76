"""``sa-lab`` command line: run, sweep, check and oracle subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import oracles
from .config import ConfigError, parse_config
from .core import SALabError, make_rng
from .experiments import build_experiment, config_from_summary, load_summary, read_trace, run_experiment
from .stabilizer import TraceError, check_bookkeeping


def _read_config(path: str, seed: int | None = None, out: str | None = None):
    cfg = parse_config(Path(path).read_bytes())
    return cfg.with_overrides(seed=seed, out_dir=out)


def parse_seeds(spec: str) -> list[int]:
    """``"0..100"`` (end exclusive), ``"3,5,9"`` or a single integer."""
    if ".." in spec:
        a, b = spec.split("..", 1)
        return list(range(int(a), int(b)))
    return [int(s) for s in spec.split(",") if s.strip()]


def cmd_run(args) -> int:
    cfg = _read_config(args.config, args.seed, args.out)
    trace, summary = run_experiment(cfg)
    print(json.dumps({"trace": str(trace), "summary": str(summary)}))
    return 0


def _sweep_one(job):
    path, seed, out = job
    cfg = _read_config(path, seed, out)
    run_experiment(cfg)
    return seed


def cmd_sweep(args) -> int:
    base = parse_config(Path(args.config).read_bytes())
    root = Path(args.out or base.out_dir)
    jobs = [(args.config, s, str(root / f"seed_{s}")) for s in parse_seeds(args.seeds)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            done = list(pool.map(_sweep_one, jobs))
    else:
        done = [_sweep_one(j) for j in jobs]
    print(json.dumps({"runs": len(done), "out": str(root)}))
    return 0


def check_trace_file(path) -> int:
    """Validate a trace against the bookkeeping rules; returns the number of rows.

    When ``summary.json`` sits next to the trace, accepted rows are also checked
    for membership in the active compact set.
    """
    table = read_trace(path)
    contains = None
    summary_path = Path(path).with_name("summary.json")
    if summary_path.exists():
        exp = build_experiment(config_from_summary(load_summary(summary_path)))
        contains = exp.family.contains
    check_bookkeeping(table.n, table.I, table.zeta, table.restart, table.theta, contains)
    return len(table.n)


def cmd_check(args) -> int:
    try:
        rows = check_trace_file(args.trace)
    except TraceError as exc:
        print(f"invalid trace: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"ok": True, "rows": rows}))
    return 0


def _load_samples(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=1)


def _normal_sampler(mean, sd):
    return lambda rng, m: mean + sd * rng.standard_normal(m)


def cmd_oracle(args) -> int:
    if args.oracle == "mc-quantile":
        if args.dist == "normal":
            sampler, phi = _normal_sampler(args.mean, args.sd), (lambda v: v)
        elif args.dist == "uniform":
            sampler, phi = (lambda rng, m: rng.random(m)), (lambda v: v)
        else:
            from .bridge import BridgeNetwork, phi_batch

            net = BridgeNetwork()
            sampler, phi = (lambda rng, m: rng.random((m, net.d))), (lambda u: phi_batch(net, u))
        value = oracles.mc_quantile(sampler, phi, args.q, args.n, make_rng(args.seed))
    elif args.oracle == "weiszfeld":
        value = oracles.weiszfeld(_load_samples(args.samples), args.tol, args.max_iter).tolist()
    else:
        centers, history = oracles.lloyd(_load_samples(args.samples), args.n_centers, args.iters, make_rng(args.seed))
        value = {"centers": centers.tolist(), "distortion": history[-1]}
    print(json.dumps(value))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sa-lab", description="Stabilized stochastic approximation lab")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one config over many seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, help="e.g. 0..100 (end exclusive) or 1,2,3")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="validate a trace.csv")
    p.add_argument("trace")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("oracle", help="brute-force references")
    osub = p.add_subparsers(dest="oracle", required=True)
    o = osub.add_parser("mc-quantile")
    o.add_argument("--dist", choices=("normal", "uniform", "bridge"), default="normal")
    o.add_argument("--mean", type=float, default=0.0)
    o.add_argument("--sd", type=float, default=1.0)
    o.add_argument("--q", type=float, required=True)
    o.add_argument("--n", type=int, default=1_000_000)
    o.add_argument("--seed", type=int, default=0)
    o = osub.add_parser("weiszfeld")
    o.add_argument("--samples", required=True, help="CSV file, one sample per row")
    o.add_argument("--tol", type=float, default=1e-10)
    o.add_argument("--max-iter", type=int, default=1000)
    o = osub.add_parser("lloyd")
    o.add_argument("--samples", required=True, help="CSV file, one sample per row")
    o.add_argument("--n-centers", type=int, required=True)
    o.add_argument("--iters", type=int, default=50)
    o.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SALabError, OSError) as exc:
        print(f"aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
