"""Clique-based binning of contigs by their empirical (m+1)-gram types.

The procedure sweeps a distance threshold eps upward, looks for M disjoint
large cliques in the eps-graph of contig types, averages the types inside each
clique to estimate the species distributions, then assigns every contig to
the estimate with the smallest conditional relative entropy.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import pdist, squareform

from .markov import Contig, InvalidInput, JointDistribution, type_counts

log = logging.getLogger(__name__)

ESTIMATE_FLOOR = 1e-9
TIE_TOL = 1e-12


class Metric(str, Enum):
    CONDITIONAL_DIVERGENCE = "conditional-divergence"
    EUCLIDEAN = "euclidean"
    L1 = "l1"


def type_matrix(contigs: Sequence[Contig], order: int = 3) -> np.ndarray:
    """Row i is the cyclic empirical type of contig i."""
    if not contigs:
        raise InvalidInput("no contigs")
    k = contigs[0].alphabet.size
    rows = []
    for c in contigs:
        if len(c) < order + 1:
            raise InvalidInput(f"contig {c.name} is shorter than order+1 = {order + 1}")
        rows.append(type_counts(c.symbols, order, k) / len(c))
    return np.vstack(rows)


def _as_types(contigs_or_types, order: int) -> np.ndarray:
    if isinstance(contigs_or_types, np.ndarray):
        return contigs_or_types
    return type_matrix(contigs_or_types, order)


@dataclass
class SortedDistances:
    """All pairwise l1 distances, ascending, ties ordered by (i, j)."""

    distance: np.ndarray
    first: np.ndarray
    second: np.ndarray

    def __len__(self) -> int:
        return int(self.distance.size)

    def __iter__(self):
        for d, i, j in zip(self.distance, self.first, self.second):
            yield float(d), (int(i), int(j))


def pairwise_distances(contigs, order: int = 3) -> SortedDistances:
    types = _as_types(contigs, order)
    n = types.shape[0]
    if n < 2:
        raise InvalidInput("need at least two contigs")
    d = pdist(types, metric="cityblock")
    i, j = np.triu_indices(n, k=1)
    idx = np.lexsort((j, i, d))
    return SortedDistances(d[idx], i[idx], j[idx])


@dataclass
class EpsilonGraph:
    epsilon: float
    adjacency: np.ndarray

    @property
    def nodes(self) -> range:
        return range(self.adjacency.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum() // 2)

    def edges(self) -> set[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return set(zip(i.tolist(), j.tolist()))

    def is_clique(self, members) -> bool:
        members = np.asarray(list(members))
        sub = self.adjacency[np.ix_(members, members)]
        return bool(sub.sum() == members.size * (members.size - 1))


def _adjacency(dist: np.ndarray, eps: float) -> np.ndarray:
    adj = dist <= eps
    np.fill_diagonal(adj, False)
    return adj


def build_epsilon_graph(contigs, eps: float, order: int = 3) -> EpsilonGraph:
    if eps < 0:
        raise InvalidInput("eps must be non-negative")
    types = _as_types(contigs, order)
    dist = squareform(pdist(types, metric="cityblock")) if types.shape[0] > 1 else np.zeros((1, 1))
    return EpsilonGraph(float(eps), _adjacency(dist, eps))


def _greedy_cliques(adj: np.ndarray, M: int, min_size: int = 1) -> list[np.ndarray]:
    """Seed at the highest-degree unused vertex, grow by the highest-degree common neighbour.

    Growth stops early when taking another vertex would leave too few for the
    remaining cliques to reach min_size.
    """
    n = adj.shape[0]
    unused = np.ones(n, dtype=bool)
    cliques = []
    for k in range(M):
        if not unused.any():
            break
        sub = adj & unused[None, :] & unused[:, None]
        deg = sub.sum(axis=1)
        deg[~unused] = -1
        v = int(np.argmax(deg))
        members = [v]
        cand = sub[v].copy()
        cap = int(unused.sum()) - (M - k - 1) * min_size
        while cand.any() and len(members) < cap:
            v = int(np.argmax(np.where(cand, deg, -1)))
            members.append(v)
            cand &= sub[v]
        members = np.sort(np.asarray(members))
        unused[members] = False
        cliques.append(members)
    return cliques


def _exact_cliques(adj: np.ndarray, M: int, min_size: int) -> list[np.ndarray] | None:
    """Backtracking search for M disjoint cliques of size >= min_size (small graphs only)."""
    n = adj.shape[0]
    nbr = [sum(1 << j for j in np.nonzero(adj[i])[0].tolist()) for i in range(n)]

    def bits(mask: int) -> list[int]:
        out = []
        while mask:
            low = mask & -mask
            out.append(low.bit_length() - 1)
            mask ^= low
        return out

    def cliques_with(v: int, avail: int):
        # s-cliques containing v, other members drawn in increasing order
        def extend(members: int, cand: int, need: int):
            if need == 0:
                yield members
                return
            if bin(cand).count("1") < need:
                return
            for u in bits(cand):
                cand &= ~(1 << u)
                yield from extend(members | (1 << u), cand & nbr[u], need - 1)
        yield from extend(1 << v, nbr[v] & avail, min_size - 1)

    def search(k: int, avail: int):
        if k == M:
            return []
        if bin(avail).count("1") < (M - k) * min_size:
            return None
        v = (avail & -avail).bit_length() - 1
        for clique in cliques_with(v, avail):
            rest = search(k + 1, avail & ~clique)
            if rest is not None:
                return [clique] + rest
        return search(k, avail & ~(1 << v))

    found = search(0, (1 << n) - 1)
    if found is None:
        return None
    # extend each clique greedily with still-unused vertices
    used = 0
    for c in found:
        used |= c
    out = []
    for c in found:
        cand = (1 << n) - 1
        for u in bits(c):
            cand &= nbr[u]
        cand &= ~used
        for u in bits(cand):
            if all(nbr[u] >> w & 1 for w in bits(c)):
                c |= 1 << u
                used |= 1 << u
        out.append(np.asarray(bits(c)))
    return out


def find_cliques(graph: EpsilonGraph, M: int, min_size: int, exact: bool = False) -> list[np.ndarray] | None:
    """M vertex-disjoint cliques of size >= min_size, or None when none are found."""
    if min_size < 1:
        raise InvalidInput("min_size must be >= 1")
    adj = graph.adjacency
    if M * min_size > adj.shape[0]:
        return None
    if exact:
        if adj.shape[0] > 40:
            raise InvalidInput("exact clique search is limited to 40 vertices")
        return _exact_cliques(adj, M, min_size)
    cliques = _greedy_cliques(adj, M, min_size)
    if len(cliques) == M and all(c.size >= min_size for c in cliques):
        return cliques
    return None


def estimate_distributions(cliques: Sequence[np.ndarray], contigs, order: int = 3) -> list[JointDistribution]:
    """Mean type within each clique."""
    types = _as_types(contigs, order)
    if isinstance(contigs, np.ndarray):
        raise InvalidInput("pass contigs (alphabet needed), not a bare type matrix")
    alphabet = contigs[0].alphabet
    out = []
    for c in cliques:
        if len(c) == 0:
            raise InvalidInput("cannot estimate from an empty clique")
        mean = types[np.asarray(c)].mean(axis=0)
        out.append(JointDistribution(order, alphabet, mean / mean.sum()))
    return out


@dataclass
class BinAssignment:
    assignment: np.ndarray          # 1-based bins
    estimates: list[JointDistribution]
    metric: Metric
    best_score: np.ndarray
    runner_up_score: np.ndarray
    fallback: np.ndarray = field(default=None)
    success: bool = True
    epsilon: float | None = None
    cliques: list[np.ndarray] | None = None
    alpha: float | None = None

    def to_csv(self, path, names: Sequence[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["contig_id", "bin", "best_divergence", "runner_up_divergence"])
            for i, b in enumerate(self.assignment):
                cid = names[i] if names is not None else f"contig_{i}"
                w.writerow([cid, int(b), repr(float(self.best_score[i])), repr(float(self.runner_up_score[i]))])


def _floored(p: JointDistribution, floor: float) -> np.ndarray:
    # uniform additive floor keeps the estimate consistent
    q = p.probs + floor
    return q / q.sum()


def divergence_matrix(types: np.ndarray, estimates: np.ndarray, size: int) -> np.ndarray:
    """D_c(type_i || estimate_k) for all i, k; +inf on support violations."""
    N, n = types.shape
    P = types.reshape(N, -1, size)
    marg = P.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(P > 0, np.log2(np.where(P > 0, P, 1.0)) - np.log2(np.where(marg > 0, marg, 1.0)), 0.0)
    neg_h = (P * logp).reshape(N, n).sum(axis=1)
    Q = estimates.reshape(estimates.shape[0], -1, size)
    qmarg = Q.sum(axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        logq = np.log2(Q) - np.log2(qmarg)
    logq = logq.reshape(estimates.shape[0], n)
    out = np.empty((N, estimates.shape[0]))
    for k in range(estimates.shape[0]):
        lq = logq[k]
        bad = ~np.isfinite(lq)
        cross = types[:, ~bad] @ lq[~bad]
        viol = (types[:, bad] > 0).any(axis=1) if bad.any() else np.zeros(N, dtype=bool)
        out[:, k] = np.where(viol, np.inf, np.maximum(neg_h - cross, 0.0))
    return out


def metric_matrix(types: np.ndarray, estimates: np.ndarray, metric: Metric, size: int) -> np.ndarray:
    metric = Metric(metric)
    if metric is Metric.CONDITIONAL_DIVERGENCE:
        return divergence_matrix(types, estimates, size)
    diff = types[:, None, :] - estimates[None, :, :]
    if metric is Metric.EUCLIDEAN:
        return np.sqrt((diff ** 2).sum(axis=2))
    return np.abs(diff).sum(axis=2)


def _argmin_first(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmin treating values within TIE_TOL of the minimum as ties (lowest index wins)."""
    best = scores.min(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        near = scores <= best + TIE_TOL
    return np.argmax(near, axis=1)


def assign_bins(contigs, estimates: Sequence[JointDistribution], metric: Metric | str = Metric.CONDITIONAL_DIVERGENCE,
                order: int | None = None, floor: float = ESTIMATE_FLOOR) -> BinAssignment:
    """argmin_k metric(type_x, estimate_k); ties go to the smallest k."""
    metric = Metric(metric)
    order = estimates[0].order if order is None else order
    types = _as_types(contigs, order)
    size = estimates[0].alphabet.size
    if metric is Metric.CONDITIONAL_DIVERGENCE:
        est = np.vstack([_floored(e, floor) for e in estimates])
    else:
        est = np.vstack([e.probs for e in estimates])
    scores = metric_matrix(types, est, metric, size)
    fallback = ~np.isfinite(scores).any(axis=1)
    if fallback.any():
        log.warning("%d contigs have infinite divergence to every estimate; using l1", int(fallback.sum()))
        l1 = metric_matrix(types[fallback], np.vstack([e.probs for e in estimates]), Metric.L1, size)
        scores[fallback] = l1
    choice = _argmin_first(scores)
    best = scores[np.arange(len(choice)), choice]
    if scores.shape[1] > 1:
        masked = scores.copy()
        masked[np.arange(len(choice)), choice] = np.inf
        runner = masked.min(axis=1)
    else:
        runner = np.full(len(choice), np.inf)
    return BinAssignment(choice + 1, list(estimates), metric, best, runner, fallback)


def default_alpha(length: int) -> float:
    """1 / log2 L, clipped to [0.01, 0.5]."""
    if length < 2:
        return 0.5
    return float(min(0.5, max(0.01, 1.0 / math.log2(length))))


def min_clique_size(n: int, M: int, alpha: float) -> int:
    return max(1, math.ceil((1 - alpha) * n / M - 1e-9))


def algorithm1(contigs: Sequence[Contig], M: int, alpha: float | None = None, order: int = 3,
               exact: bool = False, metric: Metric | str = Metric.CONDITIONAL_DIVERGENCE) -> BinAssignment:
    """Sweep eps over the sorted pairwise distances; bin with the first M large cliques found.

    If no threshold yields M cliques of size >= (1 - alpha) N / M, the attempt
    with the largest smallest-clique is used and ``success`` is False.
    """
    N = len(contigs)
    if M < 1 or N < M:
        raise InvalidInput(f"need 1 <= M <= N (got M={M}, N={N})")
    length = min(len(c) for c in contigs)
    alpha = default_alpha(length) if alpha is None else float(alpha)
    if not 0 < alpha < 1:
        raise InvalidInput("alpha must lie in (0, 1)")
    types = type_matrix(contigs, order)
    s = min_clique_size(N, M, alpha)

    if N == 1:
        cliques, eps, success = [np.array([0])], 0.0, True
    else:
        cliques, eps, success = _sweep(types, M, s, exact)
    estimates = estimate_distributions(cliques, contigs, order)
    result = assign_bins(types, estimates, metric, order)
    result.success = success
    result.epsilon = eps
    result.cliques = cliques
    result.alpha = alpha
    if M == 1:
        result.assignment[:] = 1
    return result


def _sweep(types: np.ndarray, M: int, s: int, exact: bool):
    dist = squareform(pdist(types, metric="cityblock"))
    sd = pairwise_distances(types)
    d = sd.distance
    N = types.shape[0]
    deg = np.zeros(N, dtype=np.int64)
    # group boundaries of equal distances (deduplicated sweep)
    bounds = np.flatnonzero(np.diff(d)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [d.size]])
    best = None  # (min size, eps, cliques)
    for a, b in zip(starts, ends):
        np.add.at(deg, sd.first[a:b], 1)
        np.add.at(deg, sd.second[a:b], 1)
        # M disjoint s-cliques need M*s vertices of degree >= s-1
        if np.count_nonzero(deg >= s - 1) < M * s:
            continue
        eps = float(d[a])
        adj = _adjacency(dist, eps)
        if exact:
            cl = _exact_cliques(adj, M, s)
            if cl is not None:
                return cl, eps, True
            continue
        cl = _greedy_cliques(adj, M)
        if len(cl) == M:
            smallest = min(c.size for c in cl)
            if smallest >= s:
                return cl, eps, True
            if best is None or smallest > best[0]:
                best = (smallest, eps, cl)
    if best is None:
        # never reached the degree filter: fall back to the largest threshold
        eps = float(d[-1])
        cl = _greedy_cliques(_adjacency(dist, eps), M)
        if len(cl) < M:
            # a complete graph swallows everything into one clique; split by index
            cl = [np.asarray(part) for part in np.array_split(np.arange(N), M)]
        best = (min(c.size for c in cl), eps, cl)
    log.warning("no eps gave %d cliques of size >= %d; best attempt has smallest clique %d", M, s, best[0])
    return best[2], best[1], False


@dataclass
class BinningScore:
    misbin_count: int
    misbin_rate: float
    perfect: bool
    permutation: dict[int, int]

    def to_dict(self) -> dict:
        return {"misbin_count": self.misbin_count, "misbin_rate": self.misbin_rate,
                "perfect": self.perfect, "permutation": {str(k): v for k, v in self.permutation.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def score(assignment, truth_labels: Sequence[int], M: int | None = None) -> BinningScore:
    """Misbinned contigs under the best bin-to-species relabeling."""
    bins = np.asarray(assignment.assignment if isinstance(assignment, BinAssignment) else assignment, dtype=int)
    truth = np.asarray(truth_labels, dtype=int)
    if bins.shape != truth.shape:
        raise InvalidInput("assignment and labels differ in length")
    M = int(max(bins.max(), 1)) if M is None else M
    if truth.min() < 1 or truth.max() > M or bins.min() < 1 or bins.max() > M:
        raise InvalidInput(f"labels and bins must lie in 1..{M}")
    conf = np.zeros((M, M), dtype=np.int64)
    np.add.at(conf, (bins - 1, truth - 1), 1)
    if M <= 8:
        best_hits, best_perm = -1, None
        for perm in itertools.permutations(range(M)):
            hits = int(conf[np.arange(M), perm].sum())
            if hits > best_hits:
                best_hits, best_perm = hits, perm
        rows, cols = np.arange(M), np.asarray(best_perm)
    else:
        rows, cols = linear_sum_assignment(-conf)
        best_hits = int(conf[rows, cols].sum())
    mis = int(bins.size - best_hits)
    return BinningScore(mis, mis / bins.size, mis == 0, {int(r) + 1: int(c) + 1 for r, c in zip(rows, cols)})


def good_contig_mask(types: np.ndarray, labels: Sequence[int], models: Sequence[JointDistribution],
                     radius: float) -> np.ndarray:
    """Contigs whose type is within l1 ``radius`` of their generating distribution."""
    labels = np.asarray(labels, dtype=int)
    truth = np.vstack([m.probs for m in models])[labels - 1]
    return np.abs(types - truth).sum(axis=1) <= radius
