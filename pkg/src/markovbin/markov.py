"""Stationary Markov distributions over (m+1)-grams, empirical types, divergences.

A joint distribution of order ``m`` is a dense vector over all ``|X|**(m+1)``
strings in lexicographic order.  Index ``c`` of an (m+1)-gram ``ab`` splits as
``prefix = c // |X|`` (the context ``a``) and ``suffix = c % |X|**m`` (the
context that follows after emitting ``b``).

All logarithms are base 2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

CONSISTENCY_TOL = 1e-12
DNA = ("A", "C", "G", "T")


class InvalidInput(ValueError):
    """Raised when inputs violate an operation's preconditions."""


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...] = DNA

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if len(symbols) < 2:
            raise InvalidInput("alphabet needs at least two symbols")
        if len(set(symbols)) != len(symbols):
            raise InvalidInput(f"alphabet symbols are not distinct: {symbols}")
        if any(len(s) != 1 for s in symbols):
            raise InvalidInput("alphabet symbols must be single characters")

    @property
    def size(self) -> int:
        return len(self.symbols)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.symbols)}

    def index(self, symbol: str) -> int:
        return self._index[symbol]

    def encode(self, text: str) -> np.ndarray:
        try:
            return np.fromiter((self._index[ch] for ch in text), dtype=np.int64, count=len(text))
        except KeyError as exc:
            raise InvalidInput(f"symbol {exc.args[0]!r} not in alphabet {self.symbols}") from None

    def decode(self, indices: Iterable[int]) -> str:
        return "".join(self.symbols[i] for i in indices)

    @classmethod
    def binary(cls) -> "Alphabet":
        return cls(("0", "1"))


@dataclass(frozen=True)
class Contig:
    """A finite symbol sequence (alphabet indices) with an optional species label."""

    symbols: np.ndarray
    alphabet: Alphabet = field(default_factory=Alphabet)
    label: int | None = None
    name: str | None = None

    def __post_init__(self):
        arr = np.asarray(self.symbols, dtype=np.int64)
        if arr.ndim != 1:
            raise InvalidInput("contig symbols must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= self.alphabet.size):
            raise InvalidInput("contig symbol index outside the alphabet")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    @classmethod
    def from_string(cls, text: str, alphabet: Alphabet | None = None,
                    label: int | None = None, name: str | None = None) -> "Contig":
        alphabet = alphabet or Alphabet()
        return cls(alphabet.encode(text), alphabet, label, name)

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __str__(self) -> str:
        return self.alphabet.decode(self.symbols)


def n_grams(order: int, size: int) -> int:
    return size ** (order + 1)


def gram_string(index: int, order: int, alphabet: Alphabet) -> str:
    k = alphabet.size
    out = []
    for _ in range(order + 1):
        index, r = divmod(index, k)
        out.append(alphabet.symbols[r])
    return "".join(reversed(out))


def gram_index(gram: str, alphabet: Alphabet) -> int:
    idx = 0
    for ch in gram:
        idx = idx * alphabet.size + alphabet.index(ch)
    return idx


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Distribution over (m+1)-grams, stored densely in lexicographic order."""

    order: int
    alphabet: Alphabet
    probs: np.ndarray

    def __post_init__(self):
        if self.order < 1:
            raise InvalidInput("order must be >= 1")
        probs = np.array(self.probs, dtype=float)
        if probs.shape != (n_grams(self.order, self.alphabet.size),):
            raise InvalidInput(
                f"expected {n_grams(self.order, self.alphabet.size)} probabilities, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise InvalidInput("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > CONSISTENCY_TOL * max(1, probs.size):
            raise InvalidInput(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_contexts(self) -> int:
        return self.alphabet.size ** self.order

    @property
    def table(self) -> np.ndarray:
        """probs reshaped to (context, next symbol)."""
        return self.probs.reshape(self.n_contexts, self.alphabet.size)

    def consistency_residual(self) -> float:
        """max_a |sum_b p(ab) - sum_b p(ba)|."""
        k = self.alphabet.size
        outgoing = self.table.sum(axis=1)
        incoming = self.probs.reshape(k, self.n_contexts).sum(axis=0)
        return float(np.abs(outgoing - incoming).max())

    def is_consistent(self, tol: float = CONSISTENCY_TOL) -> bool:
        return self.consistency_residual() <= tol

    def in_p_tilde(self, tol: float = CONSISTENCY_TOL) -> bool:
        """Strictly positive and consistent."""
        return bool(self.probs.min() > 0) and self.is_consistent(tol)

    def prob(self, gram: str) -> float:
        return float(self.probs[gram_index(gram, self.alphabet)])

    def same_shape(self, other: "JointDistribution") -> bool:
        return self.order == other.order and self.alphabet == other.alphabet

    def to_dict(self) -> dict:
        return {"order": self.order, "alphabet": list(self.alphabet.symbols),
                "probs": [float(v) for v in self.probs]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "JointDistribution":
        return cls(int(data["order"]), Alphabet(tuple(data["alphabet"])), np.asarray(data["probs"], dtype=float))

    @classmethod
    def from_json(cls, text: str) -> "JointDistribution":
        return cls.from_dict(json.loads(text))

    @classmethod
    def uniform(cls, order: int = 3, alphabet: Alphabet | None = None) -> "JointDistribution":
        alphabet = alphabet or Alphabet()
        n = n_grams(order, alphabet.size)
        return cls(order, alphabet, np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, gram: str, alphabet: Alphabet | None = None) -> "JointDistribution":
        alphabet = alphabet or Alphabet()
        order = len(gram) - 1
        probs = np.zeros(n_grams(order, alphabet.size))
        probs[gram_index(gram, alphabet)] = 1.0
        return cls(order, alphabet, probs)

    def __repr__(self) -> str:
        return f"JointDistribution(order={self.order}, alphabet={''.join(self.alphabet.symbols)!r})"


@dataclass(frozen=True)
class ConditionalTable:
    """p(b|a) per context; rows with p(a) = 0 are zero and marked undefined."""

    probs: np.ndarray
    defined: np.ndarray


def context_marginal(p: JointDistribution) -> np.ndarray:
    return p.table.sum(axis=1)


def conditional(p: JointDistribution) -> ConditionalTable:
    marg = context_marginal(p)
    defined = marg > 0
    out = np.zeros_like(p.table)
    out[defined] = p.table[defined] / marg[defined, None]
    return ConditionalTable(out, defined)


def _xlog2x_over(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """num * log2(num/den) with 0 log 0 = 0 (caller guarantees den > 0 where num > 0)."""
    out = np.zeros_like(num, dtype=float)
    mask = num > 0
    out[mask] = num[mask] * (np.log2(num[mask]) - np.log2(den[mask]))
    return out


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Plain KL divergence in bits; +inf if p is not absolutely continuous wrt q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p > 0) & (q <= 0)):
        return math.inf
    return float(_xlog2x_over(p, q).sum())


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def block_divergence(p: JointDistribution, q: JointDistribution, length: int) -> float:
    """KL divergence between the length-``length`` block marginals (length in {m, m+1})."""
    if length == p.order + 1:
        return kl_divergence(p.probs, q.probs)
    if length == p.order:
        return kl_divergence(context_marginal(p), context_marginal(q))
    raise InvalidInput("block length must be m or m+1")


def block_entropy(p: JointDistribution, length: int) -> float:
    if length == p.order + 1:
        return entropy(p.probs)
    if length == p.order:
        return entropy(context_marginal(p))
    raise InvalidInput("block length must be m or m+1")


def _check_same_shape(p: JointDistribution, q: JointDistribution) -> None:
    if not p.same_shape(q):
        raise InvalidInput("distributions differ in order or alphabet")


def conditional_relative_entropy(p: JointDistribution, q: JointDistribution) -> float:
    """D_c(p||q) = sum_ab p(ab) log2(p(b|a) / q(b|a)), in bits.

    Returns ``math.inf`` when p puts mass on a transition q forbids.
    """
    _check_same_shape(p, q)
    pc = conditional(p).probs.ravel()
    qc = conditional(q).probs.ravel()
    mass = p.probs
    if np.any((mass > 0) & (qc <= 0)):
        return math.inf
    mask = mass > 0
    val = float((mass[mask] * (np.log2(pc[mask]) - np.log2(qc[mask]))).sum())
    # exact zero can come out as -1e-17
    return max(val, 0.0)


def conditional_entropy(p: JointDistribution) -> float:
    """H_c(p) = -sum_ab p(ab) log2 p(b|a), in bits."""
    pc = conditional(p).probs.ravel()
    mask = p.probs > 0
    return max(float(-(p.probs[mask] * np.log2(pc[mask])).sum()), 0.0)


def l1_distance(p: JointDistribution, q: JointDistribution) -> float:
    _check_same_shape(p, q)
    return float(np.abs(p.probs - q.probs).sum())


def gram_codes(symbols: np.ndarray, order: int, size: int, cyclic: bool = True) -> np.ndarray:
    """Integer codes of the (m+1)-grams of a sequence (or of each row of a 2-D batch)."""
    x = np.asarray(symbols, dtype=np.int64)
    length = x.shape[-1]
    if cyclic:
        ext = np.concatenate([x, x[..., :order]], axis=-1)
        n_out = length
    else:
        ext = x
        n_out = length - order
    codes = np.zeros(x.shape[:-1] + (n_out,), dtype=np.int64)
    for j in range(order + 1):
        codes = codes * size + ext[..., j:j + n_out]
    return codes


def type_counts(symbols: np.ndarray, order: int, size: int) -> np.ndarray:
    """Cyclic (m+1)-gram counts; accepts a single sequence or a (batch, L) array."""
    codes = gram_codes(symbols, order, size, cyclic=True)
    n = size ** (order + 1)
    if codes.ndim == 1:
        return np.bincount(codes, minlength=n)
    offsets = (np.arange(codes.shape[0]) * n)[:, None]
    return np.bincount((codes + offsets).ravel(), minlength=n * codes.shape[0]).reshape(codes.shape[0], n)


def empirical_type(x: Contig, order: int = 3) -> JointDistribution:
    """Cyclic empirical (m+1)-gram distribution of a contig.

    Counting wraps ``order`` symbols around the end, so the result is
    consistent exactly.
    """
    if len(x) < order + 1:
        raise InvalidInput(f"sequence of length {len(x)} is shorter than order+1 = {order + 1}")
    counts = type_counts(x.symbols, order, x.alphabet.size)
    return JointDistribution(order, x.alphabet, counts / len(x))


def stationary_context_distribution(transitions: np.ndarray, order: int) -> np.ndarray:
    """Stationary law over contexts of the chain with transition table p(b|a)."""
    n_ctx, k = transitions.shape
    P = np.zeros((n_ctx, n_ctx))
    nxt = (np.arange(n_ctx)[:, None] * k + np.arange(k)[None, :]) % n_ctx
    np.add.at(P, (np.repeat(np.arange(n_ctx), k), nxt.ravel()), transitions.ravel())
    A = P.T - np.eye(n_ctx)
    A[-1, :] = 1.0
    rhs = np.zeros(n_ctx)
    rhs[-1] = 1.0
    pi = np.linalg.solve(A, rhs)
    pi = np.clip(pi, 0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Stationary order-m Markov chain defined by a consistent joint distribution."""

    joint: JointDistribution

    def __post_init__(self):
        if not self.joint.is_consistent(1e-10):
            raise InvalidInput(
                f"joint distribution is not consistent (residual {self.joint.consistency_residual():.3g})")

    @property
    def order(self) -> int:
        return self.joint.order

    @property
    def alphabet(self) -> Alphabet:
        return self.joint.alphabet

    @cached_property
    def context_marginal(self) -> np.ndarray:
        return context_marginal(self.joint)

    @cached_property
    def conditional(self) -> ConditionalTable:
        return conditional(self.joint)

    @property
    def transitions(self) -> np.ndarray:
        return self.conditional.probs

    @cached_property
    def log_transitions(self) -> np.ndarray:
        """log2 p(b|a) flattened by gram index; -inf for forbidden transitions."""
        with np.errstate(divide="ignore"):
            return np.log2(self.transitions.ravel())

    @cached_property
    def log_context_marginal(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log2(self.context_marginal)

    def in_p_tilde(self) -> bool:
        return self.joint.in_p_tilde()

    def is_irreducible(self) -> bool:
        k = self.alphabet.size
        n_ctx = self.joint.n_contexts
        adj = self.transitions > 0
        # contexts reachable from 0 and from which 0 is reachable
        def reach(forward: bool) -> set[int]:
            seen = {0}
            stack = [0]
            while stack:
                a = stack.pop()
                if forward:
                    nbrs = [(a * k + b) % n_ctx for b in range(k) if adj[a, b]]
                else:
                    nbrs = [c for c in ((b * n_ctx + a) // k for b in range(k)) if adj[c, a % k]]
                for c in nbrs:
                    if c not in seen:
                        seen.add(c)
                        stack.append(c)
            return seen
        return len(reach(True)) == n_ctx and len(reach(False)) == n_ctx

    @classmethod
    def from_transitions(cls, transitions: np.ndarray, order: int, alphabet: Alphabet | None = None) -> "MarkovModel":
        """Model from a row-stochastic table p(b|a) of shape (|X|**m, |X|)."""
        alphabet = alphabet or Alphabet()
        transitions = np.asarray(transitions, dtype=float)
        if transitions.shape != (alphabet.size ** order, alphabet.size):
            raise InvalidInput("transition table has the wrong shape")
        if np.any(transitions < 0) or not np.allclose(transitions.sum(axis=1), 1.0, atol=1e-12):
            raise InvalidInput("transition rows must be probability vectors")
        pi = stationary_context_distribution(transitions, order)
        probs = (pi[:, None] * transitions).ravel()
        return cls(JointDistribution(order, alphabet, probs / probs.sum()))

    @classmethod
    def binary(cls, p1_given_0: float, p1_given_1: float) -> "MarkovModel":
        """First-order binary chain from P(1|0) and P(1|1)."""
        t = np.array([[1 - p1_given_0, p1_given_0], [1 - p1_given_1, p1_given_1]])
        return cls.from_transitions(t, 1, Alphabet.binary())

    @classmethod
    def iid(cls, probs: Sequence[float], order: int = 1, alphabet: Alphabet | None = None) -> "MarkovModel":
        """Order-m chain whose transitions ignore the context."""
        alphabet = alphabet or (Alphabet.binary() if len(probs) == 2 else Alphabet())
        row = np.asarray(probs, dtype=float)
        return cls.from_transitions(np.tile(row, (alphabet.size ** order, 1)), order, alphabet)

    @classmethod
    def random(cls, rng: np.random.Generator, order: int = 3, alphabet: Alphabet | None = None,
               concentration: float = 1.0, floor: float = 0.0) -> "MarkovModel":
        """Rows drawn from a symmetric Dirichlet, optionally mixed with the uniform row."""
        alphabet = alphabet or Alphabet()
        k = alphabet.size
        rows = rng.dirichlet(np.full(k, concentration), size=k ** order)
        rows = (1 - floor * k) * rows + floor
        return cls.from_transitions(rows, order, alphabet)

    def to_json(self) -> str:
        return self.joint.to_json()

    @classmethod
    def from_json(cls, text: str) -> "MarkovModel":
        return cls(JointDistribution.from_json(text))

    def __repr__(self) -> str:
        return f"MarkovModel(order={self.order}, alphabet={''.join(self.alphabet.symbols)!r})"


def as_joint(p: JointDistribution | MarkovModel) -> JointDistribution:
    return p.joint if isinstance(p, MarkovModel) else p


def sequence_log_probability(x: Contig, q: MarkovModel) -> float:
    """log2 q(x) under the cyclic convention, written through the type of x.

    Equals ``-L [D_c(p_x||q) + H_c(p_x)] + log2 q(x_1..x_m)``, i.e. the
    initial-context probability times all L cyclic transitions.
    Returns ``-inf`` when x uses a transition (or initial context) q forbids.
    """
    m = q.order
    if len(x) < m + 1:
        raise InvalidInput(f"sequence of length {len(x)} is shorter than order+1 = {m + 1}")
    log_alpha = _log_initial(x, q)
    p_hat = empirical_type(x, m)
    d = conditional_relative_entropy(p_hat, q.joint)
    if math.isinf(d) or math.isinf(log_alpha):
        return -math.inf
    return -len(x) * (d + conditional_entropy(p_hat)) + log_alpha


def sequence_log_probability_linear(x: Contig, q: MarkovModel) -> float:
    """Standard log2-likelihood: initial context then the L - m actual transitions."""
    m = q.order
    if len(x) < m + 1:
        raise InvalidInput(f"sequence of length {len(x)} is shorter than order+1 = {m + 1}")
    codes = gram_codes(x.symbols, m, q.alphabet.size, cyclic=False)
    with np.errstate(invalid="ignore"):
        total = float(q.log_transitions[codes].sum()) + _log_initial(x, q)
    return -math.inf if math.isnan(total) else total


def _log_initial(x: Contig, q: MarkovModel) -> float:
    ctx = 0
    for s in x.symbols[: q.order]:
        ctx = ctx * q.alphabet.size + int(s)
    return float(q.log_context_marginal[ctx])


def type_class_count_log2_bound(length: int, order: int, size: int, convention: str = "generic") -> float:
    """log2 of the bound on the number of length-L types.

    ``"tetranucleotide"`` uses the exponent 4 stated for tetranucleotides; ``"generic"``
    uses |X|**(m+1).  The two coincide for a binary first-order chain.
    """
    if convention == "tetranucleotide":
        exponent = 4
    elif convention == "generic":
        exponent = size ** (order + 1)
    else:
        raise InvalidInput(f"unknown convention {convention!r}")
    return exponent * math.log2(length + 1)
