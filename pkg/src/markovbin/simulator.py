"""Contig generation from Markov models and from genome sequences."""
from __future__ import annotations

import math
import re
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .markov import (
    Alphabet,
    Contig,
    InvalidInput,
    JointDistribution,
    MarkovModel,
    type_counts,
)


def contig_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for contig ``index``; fixed by (seed, index) alone."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _cumulative(model: MarkovModel) -> tuple[np.ndarray, np.ndarray]:
    cum_ctx = np.cumsum(model.context_marginal)
    cum_ctx[-1] = 1.0
    cum = np.cumsum(model.transitions, axis=1)
    cum[:, -1] = 1.0
    return cum_ctx, cum


def _context_digits(ctx: int, order: int, size: int) -> list[int]:
    out = []
    for _ in range(order):
        ctx, r = divmod(ctx, size)
        out.append(r)
    return out[::-1]


def sample_sequence(model: MarkovModel, length: int, rng: np.random.Generator,
                    label: int | None = None) -> Contig:
    """Length-L realization: initial context from the stationary marginal, then transitions."""
    m, k = model.order, model.alphabet.size
    if length < m + 1:
        raise InvalidInput(f"length {length} is shorter than order+1 = {m + 1}")
    n_ctx = k ** m
    cum_ctx, cum = _cumulative(model)
    ctx = min(int(np.searchsorted(cum_ctx, rng.random(), side="right")), n_ctx - 1)
    out = np.empty(length, dtype=np.int64)
    out[:m] = _context_digits(ctx, m, k)
    rows = [list(r) for r in cum]
    u = rng.random(length - m).tolist()
    for t, ut in enumerate(u, start=m):
        b = min(bisect_right(rows[ctx], ut), k - 1)
        out[t] = b
        ctx = (ctx * k + b) % n_ctx
    return Contig(out, model.alphabet, label)


def sample_batch(model: MarkovModel, length: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent length-L realizations as an (n, L) index array."""
    m, k = model.order, model.alphabet.size
    if length < m + 1:
        raise InvalidInput(f"length {length} is shorter than order+1 = {m + 1}")
    n_ctx = k ** m
    cum_ctx, cum = _cumulative(model)
    ctx = np.minimum(np.searchsorted(cum_ctx, rng.random(n), side="right"), n_ctx - 1)
    out = np.empty((n, length), dtype=np.int8 if k <= 127 else np.int64)
    tmp = ctx.copy()
    for j in range(m - 1, -1, -1):
        out[:, j] = tmp % k
        tmp //= k
    u = rng.random((length - m, n))
    for t in range(m, length):
        b = np.minimum((u[t - m][:, None] >= cum[ctx]).sum(axis=1), k - 1)
        out[:, t] = b
        ctx = (ctx * k + b) % n_ctx
    return out


@dataclass
class CommunitySpec:
    models: list[MarkovModel]
    contig_length: int
    contig_count: int
    seed: int = 0
    priors: list[float] | None = None

    def __post_init__(self):
        M = len(self.models)
        if M < 2:
            raise InvalidInput("community needs at least two models")
        if self.priors is None:
            self.priors = [1.0 / M] * M
        if len(self.priors) != M or abs(sum(self.priors) - 1.0) > 1e-9 or min(self.priors) < 0:
            raise InvalidInput("priors must be a probability vector with one entry per model")
        order = self.models[0].order
        if any(not mdl.joint.same_shape(self.models[0].joint) for mdl in self.models):
            raise InvalidInput("all models must share order and alphabet")
        if self.contig_length < order + 1:
            raise InvalidInput(f"contig length must be at least order+1 = {order + 1}")
        if self.contig_count < 1:
            raise InvalidInput("contig count must be >= 1")


@dataclass
class ScalingSpec:
    """Contig length tied to the contig count through L = round(lbar * log2 N)."""

    lbar: float
    n: int

    def __post_init__(self):
        if self.lbar <= 0 or self.n < 2:
            raise InvalidInput("need lbar > 0 and N >= 2")

    @property
    def length(self) -> int:
        return scaled_length(self.lbar, self.n)


def scaled_length(lbar: float, n: int) -> int:
    return int(round(lbar * math.log2(n)))


def generate_contigs(spec: CommunitySpec) -> list[Contig]:
    """N labelled contigs; labels are 1-based species indices."""
    cum = np.cumsum(spec.priors)
    cum[-1] = 1.0
    contigs = []
    for i in range(spec.contig_count):
        rng = contig_rng(spec.seed, i)
        k = int(np.searchsorted(cum, rng.random(), side="right"))
        # zero-prior species can never be drawn, even at u == cum boundary
        while spec.priors[k] == 0:
            k -= 1
        c = sample_sequence(spec.models[k], spec.contig_length, rng, label=k + 1)
        contigs.append(Contig(c.symbols, c.alphabet, k + 1, f"contig_{i}"))
    return contigs


def fit_model_from_genome(genome: Contig, order: int = 3, pseudocount: float = 0.0) -> MarkovModel:
    """Cyclic (m+1)-gram frequencies of a genome, optionally smoothed by a pseudocount."""
    if len(genome) < order + 1:
        raise InvalidInput(f"genome of length {len(genome)} is shorter than order+1 = {order + 1}")
    if pseudocount < 0:
        raise InvalidInput("pseudocount must be non-negative")
    counts = type_counts(genome.symbols, order, genome.alphabet.size).astype(float) + pseudocount
    # uniform pseudocounts keep consistency: every context gains |X| * pc in and out
    return MarkovModel(JointDistribution(order, genome.alphabet, counts / counts.sum()))


def extract_contigs_from_genome(genome: Contig, length: int, count: int, rng: np.random.Generator,
                                label: int | None = None) -> list[Contig]:
    """Substrings with uniform start positions, drawn with replacement (no wrap-around)."""
    if length > len(genome):
        raise InvalidInput(f"contig length {length} exceeds genome length {len(genome)}")
    if length < 1 or count < 1:
        raise InvalidInput("length and count must be positive")
    label = genome.label if label is None else label
    starts = rng.integers(0, len(genome) - length + 1, size=count)
    return [Contig(genome.symbols[s:s + length], genome.alphabet, label, f"contig_{i}")
            for i, s in enumerate(starts)]


# --- FASTA -------------------------------------------------------------------

_SPECIES = re.compile(r"species=(\d+)")


def read_fasta(path: str | Path) -> list[tuple[str, str]]:
    records: list[tuple[str, str]] = []
    header = None
    chunks: list[str] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if header is not None:
                    records.append((header, "".join(chunks)))
                header = line[1:].strip()
                chunks = []
            else:
                if header is None:
                    header = ""
                chunks.append(line)
    if header is not None:
        records.append((header, "".join(chunks)))
    return records


def clean_sequence(seq: str, alphabet: Alphabet) -> str:
    """Uppercase and drop characters outside the alphabet (N, ambiguity codes, gaps)."""
    allowed = set(alphabet.symbols)
    return "".join(ch for ch in seq.upper() if ch in allowed)


def read_genome(path: str | Path, alphabet: Alphabet | None = None, label: int | None = None) -> Contig:
    """All records of one FASTA file concatenated into a single genome."""
    alphabet = alphabet or Alphabet()
    records = read_fasta(path)
    seq = "".join(clean_sequence(s, alphabet) for _, s in records)
    if not seq:
        raise InvalidInput(f"{path}: no usable sequence")
    return Contig.from_string(seq, alphabet, label=label, name=Path(path).stem)


def read_contigs(path: str | Path, alphabet: Alphabet | None = None) -> list[Contig]:
    alphabet = alphabet or Alphabet()
    out = []
    for header, seq in read_fasta(path):
        match = _SPECIES.search(header)
        label = int(match.group(1)) if match else None
        name = header.split()[0] if header else f"contig_{len(out)}"
        out.append(Contig.from_string(clean_sequence(seq, alphabet), alphabet, label, name))
    if not out:
        raise InvalidInput(f"{path}: no records")
    return out


def write_contigs(contigs: Iterable[Contig], path: str | Path, width: int = 80) -> None:
    with open(path, "w") as fh:
        for i, c in enumerate(contigs):
            header = f">contig_{i}"
            if c.label is not None:
                header += f" species={c.label}"
            fh.write(header + "\n")
            text = str(c)
            for j in range(0, len(text), width):
                fh.write(text[j:j + width] + "\n")


def community_to_dict(spec: CommunitySpec) -> dict:
    return {"models": [m.joint.to_dict() for m in spec.models], "priors": spec.priors,
            "contig_length": spec.contig_length, "contig_count": spec.contig_count, "seed": spec.seed}


def community_from_dict(data: dict) -> CommunitySpec:
    models = [MarkovModel(JointDistribution.from_dict(d)) for d in data["models"]]
    return CommunitySpec(models=models, contig_length=int(data["contig_length"]),
                         contig_count=int(data["contig_count"]), seed=int(data.get("seed", 0)),
                         priors=data.get("priors"))
