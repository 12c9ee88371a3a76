"""Run every example config and print the headline numbers next to their oracles."""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from salab.bridge import BridgeNetwork, phi_batch
from salab.config import parse_config
from salab.core import make_rng
from salab.experiments import load_summary, run_experiment
from salab.oracles import mc_quantile, normal_quantile

HERE = Path(__file__).parent


def oracle(name):
    if name == "quantile_iid":
        return [normal_quantile(0.9)]
    if name == "quantile_ar1":
        return [2 / math.sqrt(3) * normal_quantile(0.9)]
    if name == "median_mixture":
        return [0.0, 0.0]
    if name == "kohonen_uniform":
        return [0.25, 0.75]
    net = BridgeNetwork()
    return [mc_quantile(lambda r, m: r.random((m, 5)), lambda u: phi_batch(net, u), 0.99, 2_000_000, make_rng(1))]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out")
    ap.add_argument("--only", nargs="*")
    args = ap.parse_args()
    for path in sorted((HERE / "configs").glob("*.json")):
        name = path.stem
        if args.only and name not in args.only:
            continue
        cfg = parse_config(path.read_bytes())
        _, summary = run_experiment(cfg, Path(args.out) / name)
        s = load_summary(summary)
        est = s["tail_mean"] if name != "sace_bridge" else s["tail_mean"][:1]
        if name == "kohonen_uniform":
            est = sorted(est)
        print(json.dumps({
            "config": name,
            "tail_mean": np.round(est, 4).tolist(),
            "oracle": np.round(oracle(name), 4).tolist(),
            "truncations": s["truncation_count"],
        }))
    return 0


if __name__ == "__main__":
    sys.exit(main())
