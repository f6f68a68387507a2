"""Binary tests between known Markov chains and Monte Carlo error studies."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .chernoff import chernoff_information, information_projection_l1
from .markov import (
    Alphabet,
    Contig,
    InvalidInput,
    JointDistribution,
    MarkovModel,
    conditional_relative_entropy,
    empirical_type,
    gram_codes,
    sequence_log_probability,
    sequence_log_probability_linear,
    type_class_count_log2_bound,
    type_counts,
)
from .simulator import sample_batch

log = logging.getLogger(__name__)

CHUNK = 20_000
MIN_EVENTS = 50
WILSON_Z = 1.96
LLR_TIE_TOL = 1e-12
DEFAULT_N = 10 ** 6


class Undecidable(InvalidInput):
    """Both hypotheses give the sequence zero probability."""


def _seed_from(rng: np.random.Generator | int | None) -> int:
    if rng is None:
        return 0
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(0, 2 ** 63 - 1))


def _chunk_rngs(seed: int, trials: int, *key: int):
    """(rng, size) per fixed-size chunk; streams depend only on (seed, key, chunk index)."""
    for c, start in enumerate(range(0, trials, CHUNK)):
        yield (np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(*key, c))),
               min(CHUNK, trials - start))


def wilson_halfwidth(errors: int, trials: int, z: float = WILSON_Z) -> float:
    if trials == 0:
        return math.nan
    p = errors / trials
    denom = 1 + z * z / trials
    return float(z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)))


@dataclass
class TestOutcome:
    decision: int
    normalized_llr: float
    components: tuple[float, float, float]


def np_decide(x: Contig, p1: MarkovModel, p2: MarkovModel, priors: Sequence[float] = (0.5, 0.5)) -> TestOutcome:
    """Likelihood-ratio test; H1 iff p1(x)/p2(x) >= pi2/pi1 (ties go to H1)."""
    pi1, pi2 = _check_priors(priors)
    L = len(x)
    ll1 = sequence_log_probability(x, p1)
    ll2 = sequence_log_probability(x, p2)
    if math.isinf(ll1) and math.isinf(ll2):
        raise Undecidable("sequence has zero probability under both hypotheses")
    p_hat = empirical_type(x, p1.order)
    dc2 = conditional_relative_entropy(p_hat, p2.joint)
    dc1 = conditional_relative_entropy(p_hat, p1.joint)
    init = (_log_init(x, p1) - _log_init(x, p2)) / L
    llr = (ll1 - ll2) / L if not (math.isinf(ll1) or math.isinf(ll2)) else (math.inf if math.isinf(ll2) else -math.inf)
    threshold = _log_ratio(pi2, pi1) / L
    decision = 1 if llr >= threshold - LLR_TIE_TOL else 2
    return TestOutcome(decision, llr, (dc2, dc1, init))


def _log_ratio(a: float, b: float) -> float:
    if a == 0:
        return -math.inf
    if b == 0:
        return math.inf
    return math.log2(a / b)


def _log_init(x: Contig, q: MarkovModel) -> float:
    ctx = 0
    for s in x.symbols[: q.order]:
        ctx = ctx * q.alphabet.size + int(s)
    return float(q.log_context_marginal[ctx])


def _check_priors(priors: Sequence[float]) -> tuple[float, float]:
    pi1, pi2 = (float(v) for v in priors)
    if min(pi1, pi2) < 0 or abs(pi1 + pi2 - 1) > 1e-12:
        raise InvalidInput("priors must be non-negative and sum to 1")
    return pi1, pi2


# --- batched likelihoods -----------------------------------------------------

def _initial_contexts(X: np.ndarray, order: int, size: int) -> np.ndarray:
    ctx = np.zeros(X.shape[0], dtype=np.int64)
    for j in range(order):
        ctx = ctx * size + X[:, j]
    return ctx


def _weighted_log(counts: np.ndarray, logs: np.ndarray) -> np.ndarray:
    """sum_c counts[:, c] * logs[c] with 0 * (-inf) = 0."""
    finite = np.isfinite(logs)
    out = counts[:, finite] @ logs[finite]
    if not finite.all():
        out = np.where((counts[:, ~finite] > 0).any(axis=1), -np.inf, out)
    return out


def cyclic_log_likelihoods(X: np.ndarray, q: MarkovModel) -> np.ndarray:
    """Row-wise cyclic log2-likelihood (initial context + all L cyclic transitions)."""
    counts = type_counts(X, q.order, q.alphabet.size)
    ctx = _initial_contexts(X, q.order, q.alphabet.size)
    return _weighted_log(counts, q.log_transitions) + q.log_context_marginal[ctx]


def linear_log_likelihoods(X: np.ndarray, q: MarkovModel) -> np.ndarray:
    """Row-wise generative log2-likelihood (initial context + L - m transitions)."""
    n = q.alphabet.size ** (q.order + 1)
    codes = gram_codes(X, q.order, q.alphabet.size, cyclic=False)
    offsets = (np.arange(codes.shape[0]) * n)[:, None]
    counts = np.bincount((codes + offsets).ravel(), minlength=n * codes.shape[0]).reshape(codes.shape[0], n)
    ctx = _initial_contexts(X, q.order, q.alphabet.size)
    return _weighted_log(counts, q.log_transitions) + q.log_context_marginal[ctx]


def batch_decide(X: np.ndarray, p1: MarkovModel, p2: MarkovModel, priors=(0.5, 0.5)) -> np.ndarray:
    """Vectorized :func:`np_decide`; returns decisions in {1, 2}."""
    pi1, pi2 = _check_priors(priors)
    L = X.shape[1]
    ll1 = cyclic_log_likelihoods(X, p1)
    ll2 = cyclic_log_likelihoods(X, p2)
    with np.errstate(invalid="ignore"):
        llr = (ll1 - ll2) / L
    llr = np.where(np.isneginf(ll2) & np.isfinite(ll1), np.inf, llr)
    llr = np.where(np.isneginf(ll1) & np.isfinite(ll2), -np.inf, llr)
    threshold = _log_ratio(pi2, pi1) / L
    return np.where(llr >= threshold - LLR_TIE_TOL, 1, 2)


class BayesError(NamedTuple):
    estimate: float
    halfwidth: float
    errors: int
    trials: int


def bayes_error_mc(p1: MarkovModel, p2: MarkovModel, priors=(0.5, 0.5), length: int = 100,
                   trials: int = 10_000, rng: np.random.Generator | int | None = 0) -> BayesError:
    """Draw the hypothesis from the priors, sample a contig, decide, count errors."""
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    pi1, _ = _check_priors(priors)
    seed = _seed_from(rng)
    errors = 0
    for g, n in _chunk_rngs(seed, trials, length):
        h1 = g.random(n) < pi1
        n1 = int(h1.sum())
        if n1:
            errors += int((batch_decide(sample_batch(p1, length, n1, g), p1, p2, priors) == 2).sum())
        if n - n1:
            errors += int((batch_decide(sample_batch(p2, length, n - n1, g), p1, p2, priors) == 1).sum())
    return BayesError(errors / trials, wilson_halfwidth(errors, trials), errors, trials)


def exact_bayes_error(p1: MarkovModel, p2: MarkovModel, priors=(0.5, 0.5), length: int = 4,
                      max_sequences: int = 1 << 20) -> float:
    """Enumerate every length-L sequence (small alphabets/lengths only)."""
    k = p1.alphabet.size
    if k ** length > max_sequences:
        raise InvalidInput("too many sequences to enumerate")
    pi1, pi2 = _check_priors(priors)
    total = 0.0
    for seq in itertools.product(range(k), repeat=length):
        x = Contig(np.array(seq), p1.alphabet)
        d = np_decide(x, p1, p2, priors).decision
        if d == 1:
            total += pi2 * 2.0 ** sequence_log_probability_linear(x, p2)
        else:
            total += pi1 * 2.0 ** sequence_log_probability_linear(x, p1)
    return total


# --- error exponent ------------------------------------------------------------

@dataclass
class ErrorExponentEstimate:
    lengths: list[int]
    error_rates: list[float]
    log_error_rates: list[float]
    slope_estimate: float
    chernoff_reference: float
    trials_per_length: int
    confidence_halfwidths: list[float]
    error_events: list[int]
    excluded: list[int] = field(default_factory=list)
    method: str = "importance"

    @property
    def relative_error(self) -> float:
        return abs(self.slope_estimate - self.chernoff_reference) / self.chernoff_reference


def _importance_error(p1, p2, proposal: MarkovModel, priors, length, trials, seed):
    """Bayes error by sampling from the tilted chain p* and reweighting."""
    pi1, pi2 = _check_priors(priors)
    total = 0.0
    total_sq = 0.0
    events = 0
    for g, n in _chunk_rngs(seed, trials, length, 1):
        X = sample_batch(proposal, length, n, g)
        lq = linear_log_likelihoods(X, proposal)
        l1 = linear_log_likelihoods(X, p1)
        l2 = linear_log_likelihoods(X, p2)
        dec = batch_decide(X, p1, p2, priors)
        contrib = np.where(dec == 2, pi1 * np.exp2(l1 - lq), pi2 * np.exp2(l2 - lq))
        total += float(contrib.sum())
        total_sq += float((contrib ** 2).sum())
        events += int(np.count_nonzero(contrib > 0))
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    return mean, WILSON_Z * math.sqrt(var / trials), events


def fit_exponent(lengths, rates, events, min_events: int = MIN_EVENTS) -> tuple[float, list[int]]:
    """Weighted least-squares slope of log2(error) vs L (weights ~ event counts); returns (-slope, excluded)."""
    keep = [i for i, (r, e) in enumerate(zip(rates, events)) if e >= min_events and r > 0]
    excluded = [int(lengths[i]) for i in range(len(lengths)) if i not in keep]
    if len(keep) < 2:
        return math.nan, excluded
    Ls = np.asarray([lengths[i] for i in keep], dtype=float)
    y = np.log2([rates[i] for i in keep])
    w = np.asarray([events[i] for i in keep], dtype=float)
    W = w / w.sum()
    Lbar = (W * Ls).sum()
    ybar = (W * y).sum()
    slope = float((W * (Ls - Lbar) * (y - ybar)).sum() / (W * (Ls - Lbar) ** 2).sum())
    return -slope, excluded


def error_exponent(p1: MarkovModel, p2: MarkovModel, lengths: Sequence[int], trials: int,
                   rng: np.random.Generator | int | None = 0, method: str = "importance",
                   priors=(0.5, 0.5)) -> ErrorExponentEstimate:
    """Estimate the Bayes-error exponent from Monte Carlo error rates at several lengths.

    ``method="direct"`` counts errors of plain simulation; ``"importance"``
    samples from the Chernoff-tilted chain p* and reweights by likelihood
    ratios, which keeps the estimator usable where errors are rare.
    """
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    lengths = [int(L) for L in lengths]
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise InvalidInput("lengths must be increasing")
    ch = chernoff_information(p1, p2)
    seed = _seed_from(rng)
    rates, hws, events = [], [], []
    for L in lengths:
        if method == "direct":
            est = bayes_error_mc(p1, p2, priors, L, trials, seed)
            rates.append(est.estimate)
            hws.append(est.halfwidth)
            events.append(est.errors)
        elif method == "importance":
            proposal = MarkovModel(ch.p_star)
            mean, hw, ev = _importance_error(p1, p2, proposal, priors, L, trials, seed)
            rates.append(mean)
            hws.append(hw)
            events.append(ev)
        else:
            raise InvalidInput(f"unknown method {method!r}")
    slope, excluded = fit_exponent(lengths, rates, events)
    logs = [math.log2(r) / L if r > 0 else -math.inf for r, L in zip(rates, lengths)]
    return ErrorExponentEstimate(lengths, rates, logs, slope, ch.value, trials, hws, events, excluded, method)


# --- minimum length for a target error ----------------------------------------

class LengthForError(NamedTuple):
    length: int | None
    lbar: float | None
    monotone: bool
    probes: dict


def min_length_for_error(p1: MarkovModel, p2: MarkovModel, target: float = 0.05, trials: int = 20_000,
                         rng: np.random.Generator | int | None = 0, n_contigs: int = DEFAULT_N,
                         max_length: int = 100_000, priors=(0.5, 0.5)) -> LengthForError:
    """Smallest L with Monte Carlo Bayes error <= target (doubling bracket, then bisection)."""
    if not 0 < target < 0.5:
        raise InvalidInput("target must lie in (0, 0.5)")
    seed = _seed_from(rng)
    m = p1.order
    probes: dict[int, float] = {}

    def err(L: int) -> float:
        if L not in probes:
            probes[L] = bayes_error_mc(p1, p2, priors, L, trials, seed).estimate
        return probes[L]

    lo, hi = m, m + 1
    while err(hi) > target:
        lo, hi = hi, hi * 2
        if hi > max_length:
            return LengthForError(None, None, True, probes)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if err(mid) <= target:
            hi = mid
        else:
            lo = mid
    largest = sorted(probes)[-3:]
    monotone = all(probes[a] >= probes[b] for a, b in zip(largest, largest[1:]))
    if not monotone:
        log.warning("error not monotone over the largest probes; scanning linearly")
        for L in range(m + 1, hi + 1):
            if err(L) <= target:
                hi = L
                break
    return LengthForError(hi, hi / math.log2(n_contigs), monotone, probes)


# --- metric comparison ---------------------------------------------------------

class MetricComparison(NamedTuple):
    error_dc: float
    error_euclid: float
    halfwidth_dc: float
    halfwidth_euclid: float


def metric_comparison(p1: MarkovModel, p2: MarkovModel, length: int, trials: int,
                      rng: np.random.Generator | int | None = 0) -> MetricComparison:
    """Error of nearest-model classification by D_c and by Euclidean distance, same contigs."""
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    seed = _seed_from(rng)
    k, m = p1.alphabet.size, p1.order
    models = (p1, p2)
    J = np.vstack([p1.joint.probs, p2.joint.probs])
    err_dc = err_eu = 0
    for g, n in _chunk_rngs(seed, trials, length, 2):
        truth = np.where(g.random(n) < 0.5, 0, 1)
        for h in (0, 1):
            nh = int((truth == h).sum())
            if not nh:
                continue
            X = sample_batch(models[h], length, nh, g)
            T = type_counts(X, m, k) / length
            # argmin_k D_c(T||p_k) = argmax_k sum T log p_k(b|a)
            cross = np.column_stack([_weighted_log(T, mdl.log_transitions) for mdl in models])
            dec_dc = np.where(cross[:, 0] >= cross[:, 1] - LLR_TIE_TOL, 0, 1)
            d2 = ((T[:, None, :] - J[None, :, :]) ** 2).sum(axis=2)
            dec_eu = np.where(d2[:, 0] <= d2[:, 1] + LLR_TIE_TOL, 0, 1)
            err_dc += int((dec_dc != h).sum())
            err_eu += int((dec_eu != h).sum())
    return MetricComparison(err_dc / trials, err_eu / trials,
                            wilson_halfwidth(err_dc, trials), wilson_halfwidth(err_eu, trials))


# --- Sanov bound -------------------------------------------------------------------

class SanovCheck(NamedTuple):
    empirical_prob: float
    bound: float
    log2_bound: float
    d_star: float
    available: bool


def sanov_bound_check(q: MarkovModel, center: MarkovModel | JointDistribution, eps: float, length: int,
                      trials: int, rng: np.random.Generator | int | None = 0,
                      convention: str = "generic") -> SanovCheck:
    """Monte Carlo P(d(center, type) >= eps/2) against |P_L| 2^(-L D_c(p*||q) + log alpha).

    alpha is taken as the largest context probability of q so the bound holds
    for every initial state.
    """
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    center_joint = center.joint if isinstance(center, MarkovModel) else center
    radius = eps / 2
    seed = _seed_from(rng)
    hits = 0
    for g, n in _chunk_rngs(seed, trials, length, 3):
        T = type_counts(sample_batch(q, length, n, g), q.order, q.alphabet.size) / length
        hits += int((np.abs(T - center_joint.probs).sum(axis=1) >= radius - 1e-12).sum())
    empirical = hits / trials
    if radius > 2.0:
        return SanovCheck(empirical, 0.0, -math.inf, math.inf, True)
    proj = information_projection_l1(q, center_joint, radius)
    if not proj.converged or not math.isfinite(proj.value):
        return SanovCheck(empirical, math.nan, math.nan, proj.value, False)
    log2_bound = (type_class_count_log2_bound(length, q.order, q.alphabet.size, convention)
                  - length * proj.value + math.log2(q.context_marginal.max()))
    bound = 2.0 ** log2_bound if log2_bound < 1000 else math.inf
    return SanovCheck(empirical, bound, log2_bound, proj.value, True)


# --- prior washout -------------------------------------------------------------------

def prior_disagreement(p1: MarkovModel, p2: MarkovModel, priors, length: int, trials: int,
                       rng: np.random.Generator | int | None = 0) -> float:
    """Fraction of contigs where the prior-aware test and argmin_k D_c(type||p_k) disagree."""
    pi1, _ = _check_priors(priors)
    seed = _seed_from(rng)
    k, m = p1.alphabet.size, p1.order
    differ = 0
    for g, n in _chunk_rngs(seed, trials, length, 4):
        h1 = g.random(n) < pi1
        n1 = int(h1.sum())
        for mdl, cnt in ((p1, n1), (p2, n - n1)):
            if not cnt:
                continue
            X = sample_batch(mdl, length, cnt, g)
            T = type_counts(X, m, k)
            plain = np.where(_weighted_log(T, p1.log_transitions) >= _weighted_log(T, p2.log_transitions), 1, 2)
            differ += int((batch_decide(X, p1, p2, priors) != plain).sum())
    return differ / trials


# --- synthetic pairs ---------------------------------------------------------------

def random_pairs(count: int, seed: int = 0, order: int = 1, alphabet: Alphabet | None = None,
                 c_range: tuple[float, float] = (0.02, 0.5), min_asymmetry: float = 0.1,
                 max_draws: int = 100_000) -> list[tuple[MarkovModel, MarkovModel]]:
    """Random model pairs whose Chernoff information lies in ``c_range``.

    Binary first-order chains get P(1|0), P(1|1) uniform on [0.05, 0.95] with
    |P(1|0) - P(1|1)| >= ``min_asymmetry`` so neither chain is i.i.d.; other
    shapes use Dirichlet rows with a small floor.
    """
    alphabet = alphabet or Alphabet.binary()
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5,)))
    binary = alphabet.size == 2 and order == 1

    def draw() -> MarkovModel:
        if binary:
            while True:
                a, b = rng.uniform(0.05, 0.95, size=2)
                if abs(a - b) >= min_asymmetry:
                    return MarkovModel.binary(a, b)
        return MarkovModel.random(rng, order, alphabet, floor=0.02 / alphabet.size)

    out = []
    for _ in range(max_draws):
        if len(out) == count:
            break
        p1, p2 = draw(), draw()
        c = chernoff_information(p1, p2).value
        if c_range[0] <= c <= c_range[1]:
            out.append((p1, p2))
    if len(out) < count:
        raise InvalidInput(f"only {len(out)} pairs with C in {c_range} after {max_draws} draws")
    return out
