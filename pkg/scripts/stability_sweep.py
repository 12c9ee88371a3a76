"""Count runs whose truncation counter settles in the second half of the budget."""

import argparse
import json

from salab.config import parse_config
from salab.experiments import execute
from salab.stabilizer import constant_over_final_half


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--budget", type=int, default=200_000)
    ap.add_argument("--gamma0", type=float, default=1.0)
    args = ap.parse_args()
    stable = truncated = 0
    for s in range(args.runs):
        raw = {"experiment": "quantile", "seed": s, "q": 0.9, "budget": args.budget, "thin": args.budget,
               "schedule": {"gamma0": args.gamma0}}
        tr = execute(parse_config(json.dumps(raw))).trace
        stable += constant_over_final_half(tr)
        truncated += tr.truncation_count > 0
    print(json.dumps({"runs": args.runs, "gamma0": args.gamma0, "stable_final_half": stable, "with_truncation": truncated}))


if __name__ == "__main__":
    main()
