"""Token corpora, synthetic generators, and frequency statistics.

Token states are plain integers: ``0..K-1`` are real categories, ``K`` is the
MASK sentinel and ``K+1`` is the PAD sentinel. PAD marks unused tail positions
and never takes part in corruption or in frequency statistics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "TokenSequence",
    "ContinuousSequence",
    "CorpusStats",
    "load_corpus",
    "save_corpus",
    "synth_grammar_corpus",
    "synth_cluster_corpus",
    "count_frequencies",
    "write_stats_csv",
]


@dataclass(frozen=True)
class TokenSequence:
    """Integer token sequence over ``num_categories`` real states plus sentinels.

    ``length`` counts non-PAD positions; PAD is only legal as a contiguous
    suffix. MASK may appear anywhere in the body (corrupted sequences are
    ordinary TokenSequences).
    """

    tokens: tuple[int, ...]
    num_categories: int
    condition: int | None = None
    seq_id: str | None = None

    def __post_init__(self) -> None:
        if self.num_categories < 1:
            raise ValueError("num_categories must be >= 1")
        toks = tuple(int(t) for t in self.tokens)
        object.__setattr__(self, "tokens", toks)
        if not toks:
            raise ValueError("empty sequence")
        pad = self.pad_token
        if any(t < 0 or t > pad for t in toks):
            bad = next(t for t in toks if t < 0 or t > pad)
            raise ValueError(f"token {bad} out of range [0, {pad}]")
        in_pad = False
        for t in toks:
            if t == pad:
                in_pad = True
            elif in_pad:
                raise ValueError("PAD not suffix")

    @property
    def mask_token(self) -> int:
        return self.num_categories

    @property
    def pad_token(self) -> int:
        return self.num_categories + 1

    @property
    def length(self) -> int:
        """Number of non-PAD positions."""
        return sum(1 for t in self.tokens if t != self.pad_token)

    @property
    def is_clean(self) -> bool:
        """True when the body holds only real categories (no MASK)."""
        return all(t < self.num_categories for t in self.tokens[: self.length])

    def body(self) -> np.ndarray:
        """Non-PAD prefix as an int array."""
        return np.asarray(self.tokens[: self.length], dtype=np.int64)

    def padded(self, total_length: int) -> "TokenSequence":
        """Copy with a PAD suffix up to ``total_length``."""
        if total_length < len(self.tokens):
            raise ValueError("total_length shorter than existing tokens")
        extra = (self.pad_token,) * (total_length - len(self.tokens))
        return TokenSequence(self.tokens + extra, self.num_categories,
                             self.condition, self.seq_id)

    def with_body(self, body: Sequence[int]) -> "TokenSequence":
        """Copy with the non-PAD prefix replaced, keeping the PAD suffix."""
        n = self.length
        if len(body) != n:
            raise ValueError(f"body length {len(body)} != {n}")
        return TokenSequence(tuple(int(t) for t in body) + self.tokens[n:],
                             self.num_categories, self.condition, self.seq_id)


@dataclass(frozen=True)
class ContinuousSequence:
    """A ``(T, d)`` array of finite real-valued frames."""

    frames: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.frames, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("frames must be a non-empty (T, d) array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frames contain non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "frames", arr)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def width(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class CorpusStats:
    """Per-category occurrence counts over a token corpus."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.counts, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("counts must be a 1-D array")
        if np.any(arr < 0):
            raise ValueError("negative count")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def num_categories(self) -> int:
        return int(self.counts.size)

    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            raise ValueError("empty statistics: total count is zero")
        return self.counts / self.total


def load_corpus(path: str | Path, num_categories: int) -> list[TokenSequence]:
    """Read a line-delimited JSON corpus.

    Each record needs a ``tokens`` integer array; ``id`` and ``condition``
    are optional. Malformed records raise with the offending line number.
    """
    out: list[TokenSequence] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(rec, dict) or "tokens" not in rec:
                raise ValueError(f"{path}:{lineno}: record has no tokens array")
            try:
                seq = TokenSequence(
                    tuple(rec["tokens"]),
                    num_categories,
                    condition=rec.get("condition"),
                    seq_id=rec.get("id"),
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            out.append(seq)
    return out


def save_corpus(seqs: Sequence[TokenSequence], path: str | Path) -> None:
    """Write sequences as line-delimited JSON with keys id, tokens, condition."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, seq in enumerate(seqs):
            rec: dict = {"id": seq.seq_id if seq.seq_id is not None else f"s{i:05d}",
                         "tokens": list(seq.tokens)}
            if seq.condition is not None:
                rec["condition"] = int(seq.condition)
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def synth_grammar_corpus(
    seed: int,
    n: int,
    num_categories: int,
    len_range: tuple[int, int] = (6, 12),
    skew: float = 1.0,
) -> list[TokenSequence]:
    """Sample token sequences from a small two-state emission automaton.

    State 0 emits categories with power-law weights ``(k+1)^-skew`` (common
    categories first); state 1 emits the reversed weights, so low-index
    categories dominate globally while high-index ones stay rare. ``skew=0``
    makes both states uniform. Pure function of ``(seed, args)``.
    """
    if num_categories < 2:
        raise ValueError("num_categories must be >= 2")
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = len_range
    if lo < 1 or hi < lo:
        raise ValueError(f"empty length range {len_range}")
    rng = np.random.default_rng(seed)
    k = num_categories
    weights = (np.arange(k) + 1.0) ** (-float(skew))
    common = weights / weights.sum()
    rare = weights[::-1] / weights.sum()
    stay = np.array([[0.8, 0.2], [0.6, 0.4]])

    seqs = []
    for i in range(n):
        length = int(rng.integers(lo, hi + 1))
        state = 0
        toks = []
        for _ in range(length):
            probs = common if state == 0 else rare
            toks.append(int(rng.choice(k, p=probs)))
            state = int(rng.choice(2, p=stay[state]))
        seqs.append(TokenSequence(tuple(toks), k,
                                  condition=int(rng.integers(0, 2)),
                                  seq_id=f"s{i:05d}"))
    return seqs


def synth_cluster_corpus(
    seed: int,
    n: int,
    dim: int = 4,
    n_clusters: int = 6,
    frames_range: tuple[int, int] = (8, 16),
    spread: float = 0.35,
    skew: float = 1.0,
) -> list[ContinuousSequence]:
    """Sample continuous sequences from a power-law-weighted cluster mixture.

    Cluster centers sit on the unit sphere; frames add isotropic noise of
    scale ``spread``. Heavy clusters dominate (weights ``(c+1)^-skew``),
    which is what makes codebook usage interesting downstream.
    """
    if n_clusters < 1 or dim < 1 or n < 1:
        raise ValueError("n, dim, n_clusters must be >= 1")
    lo, hi = frames_range
    if lo < 1 or hi < lo:
        raise ValueError(f"empty frames range {frames_range}")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_clusters, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    w = (np.arange(n_clusters) + 1.0) ** (-float(skew))
    w /= w.sum()

    out = []
    for _ in range(n):
        t = int(rng.integers(lo, hi + 1))
        labels = rng.choice(n_clusters, size=t, p=w)
        frames = centers[labels] + spread * rng.normal(size=(t, dim))
        out.append(ContinuousSequence(frames))
    return out


def count_frequencies(corpus: Sequence[TokenSequence]) -> CorpusStats:
    """Count category occurrences over all non-PAD, non-MASK positions."""
    if not corpus:
        raise ValueError("empty corpus")
    k = corpus[0].num_categories
    counts = np.zeros(k, dtype=np.int64)
    for seq in corpus:
        if seq.num_categories != k:
            raise ValueError("corpus mixes category counts")
        body = seq.body()
        real = body[body < k]
        counts += np.bincount(real, minlength=k)
    return CorpusStats(counts)


def write_stats_csv(stats: CorpusStats, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("category,count\n")
        for cat, cnt in enumerate(stats.counts):
            fh.write(f"{cat},{int(cnt)}\n")
