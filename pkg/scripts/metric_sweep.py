"""Misclassification of the D_c and Euclidean classifiers over a range of lengths.

    python3 scripts/metric_sweep.py --pairs 10 --out metric_sweep.csv
"""
import argparse
import csv
from dataclasses import dataclass

import numpy as np

from markovbin import chernoff_information
from markovbin.hypotest import DEFAULT_N, metric_comparison, random_pairs
from markovbin.simulator import scaled_length


@dataclass
class SweepConfig:
    pairs: int = 10
    seed: int = 0
    trials: int = 5000
    multipliers: tuple = (0.25, 0.5, 1.0, 2.0)
    n_contigs: int = DEFAULT_N


def run(cfg: SweepConfig):
    rows = []
    for i, (a, b) in enumerate(random_pairs(cfg.pairs, cfg.seed)):
        c = chernoff_information(a, b).value
        for j, mult in enumerate(cfg.multipliers):
            L = max(2, scaled_length(mult / c, cfg.n_contigs))
            ss = np.random.SeedSequence(cfg.seed, spawn_key=(i, j))
            r = metric_comparison(a, b, L, cfg.trials, np.random.default_rng(ss))
            rows.append({"pair": i, "chernoff": c, "multiplier": mult, "L": L,
                         "error_dc": r.error_dc, "error_euclid": r.error_euclid})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=10)
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="metric_sweep.csv")
    args = ap.parse_args()
    rows = run(SweepConfig(args.pairs, args.seed, args.trials))
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    wins = sum(r["error_dc"] <= r["error_euclid"] for r in rows)
    print(f"D_c not worse in {wins}/{len(rows)} settings -> {args.out}")


if __name__ == "__main__":
    main()
