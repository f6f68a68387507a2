"""Command-line entry point: fit, chernoff, simulate, bin, experiment.

Every run writes ``config.json`` (fully resolved parameters, seed included)
and ``manifest.json`` (config, package versions, wall time) into ``--out``.
All other outputs are byte-identical across reruns with the same config.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .binning import Metric, algorithm1, assign_bins, score
from .chernoff import DegenerateInput, chernoff_information, min_pairwise_chernoff
from .hypotest import (
    DEFAULT_N,
    error_exponent,
    metric_comparison,
    min_length_for_error,
    random_pairs,
    sanov_bound_check,
)
from .markov import Alphabet, InvalidInput, JointDistribution, MarkovModel
from .simulator import (
    CommunitySpec,
    community_from_dict,
    extract_contigs_from_genome,
    fit_model_from_genome,
    generate_contigs,
    read_contigs,
    read_genome,
    scaled_length,
    write_contigs,
)

log = logging.getLogger("markovbin")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ALGORITHM = 3
EXIT_SOLVER = 4


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_model(path: str | Path) -> MarkovModel:
    try:
        return MarkovModel(JointDistribution.from_json(Path(path).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise CommandError(f"{path}: cannot load model ({exc})") from None


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# --- subcommands --------------------------------------------------------------

def cmd_fit(args, out: Path) -> int:
    alphabet = Alphabet(tuple(args.alphabet))
    failed = False
    for path in args.fasta:
        try:
            genome = read_genome(path, alphabet)
            model = fit_model_from_genome(genome, args.order, args.pseudocount)
        except InvalidInput as exc:
            print(f"error: {exc}", file=sys.stderr)
            failed = True
            continue
        except OSError as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            failed = True
            continue
        (out / f"{Path(path).stem}.model.json").write_text(_dump(model.joint.to_dict()))
    return EXIT_INPUT if failed else EXIT_OK


def cmd_chernoff(args, out: Path) -> int:
    if len(args.models) < 2:
        raise CommandError("chernoff needs at least two model files")
    models = [load_model(p) for p in args.models]
    try:
        report = min_pairwise_chernoff(models, tol=args.tol, max_workers=1)
    except DegenerateInput as exc:
        raise CommandError(f"degenerate input: {exc}") from None
    except InvalidInput as exc:
        raise CommandError(str(exc)) from None
    data = report.to_dict()
    data["models"] = [str(p) for p in args.models]
    (out / "chernoff_report.json").write_text(_dump(data))
    return EXIT_OK if report.converged.all() else EXIT_SOLVER


def cmd_simulate(args, out: Path) -> int:
    if args.config:
        spec = community_from_dict(json.loads(Path(args.config).read_text()))
        contigs = generate_contigs(spec)
    else:
        n = args.n_contigs
        if args.lbar is not None:
            length = scaled_length(args.lbar, n)
        elif args.length is not None:
            length = args.length
        else:
            raise CommandError("give --length or --lbar")
        if args.genome:
            rng = np.random.default_rng(args.seed)
            alphabet = Alphabet(tuple(args.alphabet))
            genomes = [read_genome(p, alphabet, label=i + 1) for i, p in enumerate(args.genome)]
            priors = np.full(len(genomes), 1 / len(genomes)) if args.priors is None else np.asarray(args.priors)
            species = rng.choice(len(genomes), size=n, p=priors / priors.sum())
            contigs = []
            for k, g in enumerate(genomes):
                cnt = int((species == k).sum())
                if cnt:
                    contigs.extend(extract_contigs_from_genome(g, length, cnt, rng, label=k + 1))
            # keep the species draw order for the output
            by_species = {k: iter([c for c in contigs if c.label == k + 1]) for k in range(len(genomes))}
            contigs = [next(by_species[k]) for k in species]
        elif args.models:
            spec = CommunitySpec([load_model(p) for p in args.models], length, n, args.seed, args.priors)
            contigs = generate_contigs(spec)
        else:
            raise CommandError("give --models, --genome or --config")
    write_contigs(contigs, out / "contigs.fasta")
    return EXIT_OK


def cmd_bin(args, out: Path) -> int:
    contigs = read_contigs(args.contigs, Alphabet(tuple(args.alphabet)))
    labels = [c.label for c in contigs]
    code = EXIT_OK
    if args.models:
        estimates = [load_model(p).joint for p in args.models]
        if len(estimates) != args.n_bins:
            raise CommandError("--n-bins must match the number of --models")
        result = assign_bins(contigs, estimates, Metric(args.metric), order=estimates[0].order)
    else:
        result = algorithm1(contigs, args.n_bins, alpha=args.alpha, order=args.order,
                            exact=args.exact, metric=Metric(args.metric))
        if not result.success:
            code = EXIT_ALGORITHM
    result.to_csv(out / "assignment.csv", [c.name for c in contigs])
    summary = {"success": bool(result.success), "metric": Metric(args.metric).value,
               "epsilon": result.epsilon, "alpha": result.alpha,
               "fallback_contigs": int(np.count_nonzero(result.fallback))}
    if all(lab is not None for lab in labels):
        sc = score(result, labels, args.n_bins)
        (out / "score.json").write_text(_dump(sc.to_dict()))
        summary["score"] = sc.to_dict()
    (out / "bin_summary.json").write_text(_dump(summary))
    return code


def _pairs_from_args(args) -> list[tuple[str, MarkovModel, MarkovModel]]:
    if args.models:
        models = [load_model(p) for p in args.models]
        if len(models) < 2:
            raise CommandError("need at least two models for a pairwise experiment")
        names = [Path(p).stem for p in args.models]
        return [(f"{names[i]}|{names[j]}", models[i], models[j])
                for i in range(len(models)) for j in range(i + 1, len(models))]
    if args.random_pairs:
        pairs = random_pairs(args.random_pairs, args.seed, order=args.order,
                             alphabet=Alphabet(tuple(args.alphabet)), c_range=(args.c_low, args.c_high))
        return [(f"pair{i}", a, b) for i, (a, b) in enumerate(pairs)]
    raise CommandError("give --models or --random-pairs")


def cmd_experiment(args, out: Path) -> int:
    if args.trials < 1:
        raise CommandError("--trials must be >= 1")
    rows: list[list] = []
    summary: dict = {"kind": args.kind}
    code = EXIT_OK
    if args.kind == "sanov":
        if not args.models:
            raise CommandError("sanov needs --models (the generating chain)")
        header = ["model", "eps", "L", "empirical_prob", "bound", "log2_bound", "d_star", "available"]
        dominated = True
        for i, path in enumerate(args.models):
            q = load_model(path)
            for eps in args.eps:
                for L in args.lengths:
                    chk = sanov_bound_check(q, q, eps, L, args.trials, _sub_seed(args.seed, i, L))
                    rows.append([Path(path).stem, float(eps), L, chk.empirical_prob, chk.bound,
                                 chk.log2_bound, chk.d_star, chk.available])
                    dominated &= (not chk.available) or chk.empirical_prob <= chk.bound
                    if not chk.available:
                        code = EXIT_SOLVER
        summary["all_dominated"] = bool(dominated)
        _write_csv(out / "results.csv", header, rows)
        (out / "summary.json").write_text(_dump(summary))
        return code

    pairs = _pairs_from_args(args)
    chern = {}
    for name, a, b in pairs:
        try:
            res = chernoff_information(a, b, tol=args.tol)
        except DegenerateInput as exc:
            raise CommandError(f"{name}: {exc}") from None
        if not res.converged:
            code = EXIT_SOLVER
        chern[name] = res.value

    if args.kind == "exponent":
        header = ["pair", "L", "metric", "error", "halfwidth", "events", "chernoff"]
        per_pair = {}
        for i, (name, a, b) in enumerate(pairs):
            est = error_exponent(a, b, args.lengths, args.trials, _sub_seed(args.seed, i), method=args.method)
            for L, r, hw, ev in zip(est.lengths, est.error_rates, est.confidence_halfwidths, est.error_events):
                rows.append([name, L, "bayes", r, hw, ev, est.chernoff_reference])
            per_pair[name] = {"c_hat": est.slope_estimate, "chernoff": est.chernoff_reference,
                              "excluded_lengths": est.excluded, "method": est.method}
        summary["pairs"] = per_pair
    elif args.kind == "l5pct":
        header = ["pair", "chernoff", "inv_chernoff", "L_target", "lbar_target", "monotone"]
        xs, ys = [], []
        for i, (name, a, b) in enumerate(pairs):
            res = min_length_for_error(a, b, args.target, args.trials, _sub_seed(args.seed, i),
                                       n_contigs=args.n_contigs)
            rows.append([name, chern[name], 1 / chern[name], res.length, res.lbar, res.monotone])
            if res.lbar is not None:
                xs.append(1 / chern[name])
                ys.append(res.lbar)
        summary["pearson_r"] = float(np.corrcoef(xs, ys)[0, 1]) if len(xs) >= 2 else None
        summary["target"] = args.target
    elif args.kind == "metric-compare":
        header = ["pair", "lbar", "L", "error_dc", "error_euclid", "halfwidth_dc", "halfwidth_euclid"]
        wins = 0
        for i, (name, a, b) in enumerate(pairs):
            for j, mult in enumerate(args.lbar_multipliers):
                lbar = mult / chern[name]
                L = max(a.order + 1, scaled_length(lbar, args.n_contigs))
                cmp = metric_comparison(a, b, L, args.trials, _sub_seed(args.seed, i, j))
                rows.append([name, lbar, L, cmp.error_dc, cmp.error_euclid, cmp.halfwidth_dc, cmp.halfwidth_euclid])
                wins += cmp.error_dc <= cmp.error_euclid
        summary["dc_not_worse_fraction"] = wins / len(rows)
    else:  # pragma: no cover - argparse restricts choices
        raise CommandError(f"unknown experiment {args.kind}")
    _write_csv(out / "results.csv", header, rows)
    (out / "summary.json").write_text(_dump(summary))
    return code


def _sub_seed(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="markovbin", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--alphabet", default="ACGT")

    sp = sub.add_parser("fit", help="fit Markov models from genome FASTA files")
    sp.add_argument("fasta", nargs="+")
    sp.add_argument("--order", type=int, default=3)
    sp.add_argument("--pseudocount", type=float, default=0.0)
    common(sp)

    sp = sub.add_parser("chernoff", help="pairwise Chernoff information and resolvability threshold")
    sp.add_argument("models", nargs="+")
    sp.add_argument("--tol", type=float, default=1e-8)
    common(sp)

    sp = sub.add_parser("simulate", help="generate labelled contigs")
    sp.add_argument("--models", nargs="+")
    sp.add_argument("--genome", nargs="+")
    sp.add_argument("--config", help="CommunitySpec JSON")
    sp.add_argument("--n-contigs", type=int, default=100)
    sp.add_argument("--length", type=int)
    sp.add_argument("--lbar", type=float)
    sp.add_argument("--priors", type=float, nargs="+")
    common(sp)

    sp = sub.add_parser("bin", help="bin contigs (clique algorithm or assign-only with --models)")
    sp.add_argument("contigs")
    sp.add_argument("--n-bins", type=int, required=True)
    sp.add_argument("--order", type=int, default=3)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.CONDITIONAL_DIVERGENCE.value)
    sp.add_argument("--models", nargs="+")
    sp.add_argument("--exact", action="store_true", help="exact clique search (N <= 40)")
    common(sp)

    sp = sub.add_parser("experiment", help="Monte Carlo experiments, CSV + JSON summary")
    sp.add_argument("kind", choices=["exponent", "l5pct", "metric-compare", "sanov"])
    sp.add_argument("--models", nargs="+")
    sp.add_argument("--random-pairs", type=int, default=0)
    sp.add_argument("--order", type=int, default=1)
    sp.add_argument("--c-low", type=float, default=0.02)
    sp.add_argument("--c-high", type=float, default=0.5)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--lengths", type=int, nargs="+", default=[25, 50, 100, 200])
    sp.add_argument("--method", choices=["importance", "direct"], default="importance")
    sp.add_argument("--target", type=float, default=0.05)
    sp.add_argument("--n-contigs", type=int, default=DEFAULT_N)
    sp.add_argument("--lbar-multipliers", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    sp.add_argument("--eps", type=float, nargs="+", default=[0.4])
    sp.add_argument("--tol", type=float, default=1e-8)
    common(sp)
    return p


COMMANDS = {"fit": cmd_fit, "chernoff": cmd_chernoff, "simulate": cmd_simulate,
            "bin": cmd_bin, "experiment": cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose", "out")}
    (out / "config.json").write_text(_dump(config))
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, out)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.code
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    manifest = {
        "config": config,
        "exit_code": code,
        "out": str(out),
        "wall_time_s": time.perf_counter() - start,
        "versions": {"markovbin": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    (out / "manifest.json").write_text(_dump(manifest))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
