"""Normalized length needed for 5% Bayes error against 1/C over random binary pairs.

    python3 scripts/lbar5_scaling.py --pairs 12 --out lbar5.csv
"""
import argparse
import csv

import numpy as np

from markovbin import chernoff_information
from markovbin.hypotest import min_length_for_error, random_pairs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pairs", type=int, default=12)
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--target", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=8)
    ap.add_argument("--out", default="lbar5.csv")
    args = ap.parse_args()

    rows = []
    for i, (a, b) in enumerate(random_pairs(args.pairs, args.seed, c_range=(0.04, 0.4))):
        c = chernoff_information(a, b).value
        res = min_length_for_error(a, b, args.target, args.trials, args.seed + i)
        rows.append((i, c, 1 / c, res.length, res.lbar))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "chernoff", "inv_chernoff", "L_target", "lbar_target"])
        w.writerows(rows)
    ok = [(x, y) for _, _, x, _, y in rows if y is not None]
    if len(ok) >= 2:
        r = np.corrcoef(*zip(*ok))[0, 1]
        print(f"pearson r(1/C, lbar) = {r:.3f} over {len(ok)} pairs -> {args.out}")


if __name__ == "__main__":
    main()
