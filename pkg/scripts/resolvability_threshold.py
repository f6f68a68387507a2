"""Perfect-binning rate of the clique algorithm as L-bar crosses 1/C_min.

    python3 scripts/resolvability_threshold.py --runs 20 --out threshold.csv
"""
import argparse
import csv
import logging
import math

import numpy as np

from markovbin import MarkovModel, algorithm1, min_pairwise_chernoff, score
from markovbin.simulator import CommunitySpec, generate_contigs

COMMUNITY = [(0.2, 0.3), (0.5, 0.8), (0.8, 0.3)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-contigs", type=int, default=300)
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--multipliers", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0, 5.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="threshold.csv")
    args = ap.parse_args()
    # failed sweeps are expected below the threshold
    logging.getLogger("markovbin").setLevel(logging.ERROR)

    models = [MarkovModel.binary(a, b) for a, b in COMMUNITY]
    c_min = min_pairwise_chernoff(models).c_min
    N, M = args.n_contigs, len(models)
    rows = []
    for mult in args.multipliers:
        L = max(2, math.ceil(mult / c_min * math.log2(N)))
        perfect = 0
        for r in range(args.runs):
            seed = int(np.random.SeedSequence(args.seed, spawn_key=(r,)).generate_state(1)[0])
            contigs = generate_contigs(CommunitySpec(models, L, N, seed))
            res = algorithm1(contigs, M, order=1)
            perfect += score(res, [c.label for c in contigs], M).perfect
        rows.append((mult, L, perfect, args.runs))
        print(f"lbar = {mult:>4} / C_min  L = {L:4d}  perfect {perfect}/{args.runs}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["multiplier", "L", "perfect", "runs"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
