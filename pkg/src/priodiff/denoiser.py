"""Clean-token denoisers and the reverse-chain generator.

A denoiser maps (observed states, timestep, condition label) to one
distribution over the ``K`` real categories per position; MASK never appears
in the output support. Implementations here are desk-scale: an oracle that
returns the true clean token (test fixture), a uniform baseline, and a
smoothed count-table model trained from forward-corrupted samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import TokenSequence
from .diffusion import reverse_step, vlb
from .schedule import ScheduleTable

__all__ = [
    "Denoiser",
    "OracleDenoiser",
    "UniformDenoiser",
    "TabularDenoiser",
    "TabularTrainConfig",
    "train_tabular",
    "generate",
    "generate_with_trace",
    "stabilization_steps",
    "save_tabular",
    "load_tabular",
]

TABULAR_FORMAT_VERSION = 1


class Denoiser(Protocol):
    """Predicts the clean token distribution for each position."""

    def predict_x0(self, states: np.ndarray, t: int,
                   condition: int | None) -> np.ndarray: ...


@dataclass(frozen=True)
class OracleDenoiser:
    """Delta distributions at the true clean tokens, ignoring the input."""

    clean: TokenSequence

    def predict_x0(self, states: np.ndarray, t: int,
                   condition: int | None) -> np.ndarray:
        body = self.clean.body()
        if len(states) != body.size:
            raise ValueError("state vector length does not match the clean sequence")
        out = np.zeros((body.size, self.clean.num_categories))
        out[np.arange(body.size), body] = 1.0
        return out


@dataclass(frozen=True)
class UniformDenoiser:
    num_categories: int

    def predict_x0(self, states: np.ndarray, t: int,
                   condition: int | None) -> np.ndarray:
        n = len(states)
        return np.full((n, self.num_categories), 1.0 / self.num_categories)


@dataclass(frozen=True)
class TabularTrainConfig:
    passes: int = 50
    epsilon: float = 1e-3
    t_buckets: int = 4
    pos_buckets: int = 8
    seed: int = 0
    holdout_fraction: float = 0.2
    trace_points: int = 5


@dataclass
class TabularDenoiser:
    """Smoothed counts over (condition, position bucket, observed state, t bucket).

    Prediction normalizes ``counts + epsilon`` over the clean-token axis, so
    unseen cells fall back to uniform. Per-position output depends only on
    that position's state, which keeps exact bound evaluation cheap.
    """

    num_categories: int
    num_steps: int
    t_buckets: int
    pos_buckets: int
    epsilon: float
    counts: dict[int, np.ndarray] = field(default_factory=dict)

    def _table(self, condition: int | None) -> np.ndarray | None:
        return self.counts.get(self._cond_key(condition))

    @staticmethod
    def _cond_key(condition: int | None) -> int:
        return -1 if condition is None else int(condition)

    def _new_table(self) -> np.ndarray:
        return np.zeros((self.pos_buckets, self.num_categories + 1,
                         self.t_buckets, self.num_categories))

    def pos_bucket(self, pos: int) -> int:
        return min(pos, self.pos_buckets - 1)

    def t_bucket(self, t: int) -> int:
        if not 1 <= t <= self.num_steps:
            raise ValueError(f"t={t} outside 1..{self.num_steps}")
        return (t - 1) * self.t_buckets // self.num_steps

    def observe(self, condition: int | None, pos: int, observed_state: int,
                t: int, clean_token: int) -> None:
        key = self._cond_key(condition)
        if key not in self.counts:
            self.counts[key] = self._new_table()
        self.counts[key][self.pos_bucket(pos), observed_state,
                         self.t_bucket(t), clean_token] += 1.0

    def predict_x0(self, states: np.ndarray, t: int,
                   condition: int | None) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        table = self._table(condition)
        tb = self.t_bucket(t)
        k = self.num_categories
        if table is None:
            return np.full((states.size, k), 1.0 / k)
        pb = np.minimum(np.arange(states.size), self.pos_buckets - 1)
        rows = table[pb, states, tb] + self.epsilon
        return rows / rows.sum(axis=1, keepdims=True)


def train_tabular(
    corpus: Sequence[TokenSequence],
    table: ScheduleTable,
    config: TabularTrainConfig,
) -> tuple[TabularDenoiser, list[float]]:
    """Accumulate (clean, corrupted, t) counts from seeded forward draws.

    Returns the denoiser and a trace of exact held-out bound values measured
    at evenly spaced points during training (the training set stands in when
    the corpus is too small to split). Deterministic for a fixed seed.
    """
    if not corpus:
        raise ValueError("empty corpus")
    from .diffusion import sample_forward  # local import keeps module load light

    k = corpus[0].num_categories
    if k != table.num_categories:
        raise ValueError("corpus and schedule disagree on the number of categories")
    rng = np.random.default_rng(config.seed)
    den = TabularDenoiser(
        num_categories=k,
        num_steps=table.num_steps,
        t_buckets=config.t_buckets,
        pos_buckets=config.pos_buckets,
        epsilon=config.epsilon,
    )

    n_hold = int(round(config.holdout_fraction * len(corpus)))
    holdout = list(corpus[:n_hold]) if n_hold > 0 else list(corpus)
    train_set = list(corpus[n_hold:]) if n_hold > 0 else list(corpus)
    if not train_set:
        train_set = list(corpus)

    trace: list[float] = []
    trace_every = max(1, config.passes // max(1, config.trace_points))

    def holdout_vlb() -> float:
        vals = [vlb(s, den, table, mode="exact").total for s in holdout]
        return float(np.mean(vals))

    for p in range(config.passes):
        for seq in train_set:
            body = seq.body()
            for t in range(1, table.num_steps + 1):
                corrupted = sample_forward(seq, table, t, rng).body()
                for i, x0 in enumerate(body):
                    den.observe(seq.condition, i, int(corrupted[i]), t, int(x0))
        if (p + 1) % trace_every == 0 or p == config.passes - 1:
            trace.append(holdout_vlb())
    return den, trace


def generate(denoiser: Denoiser, table: ScheduleTable, length: int,
             condition: int | None, rng: np.random.Generator) -> TokenSequence:
    """Run the reverse chain from pure noise down to a clean sequence."""
    seq, _ = generate_with_trace(denoiser, table, length, condition, rng)
    return seq


def generate_with_trace(
    denoiser: Denoiser, table: ScheduleTable, length: int,
    condition: int | None, rng: np.random.Generator,
) -> tuple[TokenSequence, list[TokenSequence]]:
    """Reverse chain keeping every intermediate state ``x_T .. x_0``.

    Positions initialize from the terminal marginal (mask-dominant), then each
    step samples from the denoiser-mixed posterior. The returned trace is
    ordered from ``t = T`` down to ``t = 0``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if table.num_positions not in (1, length):
        raise ValueError(f"schedule covers {table.num_positions} positions, need {length}")
    if not table.is_fully_corrupting:
        raise ValueError("generation needs a fully corrupting schedule")
    k = table.num_categories
    t_max = table.num_steps

    body = np.empty(length, dtype=np.int64)
    for i in range(length):
        _, bb, gb = table.cumulative(i, t_max)
        probs = np.full(k + 1, bb)
        probs[k] = gb
        u = rng.random()
        body[i] = int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, k))
    seq = TokenSequence(tuple(int(x) for x in body), k, condition=condition)
    trace = [seq]
    for t in range(t_max, 0, -1):
        seq = reverse_step(seq, denoiser, table, t, rng, condition=condition)
        trace.append(seq)
    if any(tok == k for tok in seq.tokens):
        raise RuntimeError("incomplete denoising: MASK remains after the final step")
    return seq, trace


def stabilization_steps(trace: Sequence[TokenSequence]) -> np.ndarray:
    """Per position, the largest ``t`` from which the final value persisted.

    ``trace`` is ordered ``t = T .. 0`` as produced by
    :func:`generate_with_trace`. A value of ``T`` means the position held its
    final token from initialization; ``0`` means it settled only at the last
    step. Low-priority-score positions settle at larger ``t`` under a
    priority schedule (they are reinstated foremost).
    """
    t_max = len(trace) - 1
    final = trace[-1].body()
    n = final.size
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        t_stable = 0
        for j in range(t_max, -1, -1):  # trace[j] holds x_{T-j}
            if trace[j].body()[i] == final[i]:
                t_stable = t_max - j
            else:
                break
        out[i] = t_stable
    return out


def save_tabular(den: TabularDenoiser, config: TabularTrainConfig,
                 path: str | Path) -> None:
    payload = {
        "format_version": TABULAR_FORMAT_VERSION,
        "num_categories": den.num_categories,
        "num_steps": den.num_steps,
        "t_buckets": den.t_buckets,
        "pos_buckets": den.pos_buckets,
        "epsilon": den.epsilon,
        "counts": {str(key): tbl.tolist() for key, tbl in sorted(den.counts.items())},
        "config": {
            "passes": config.passes,
            "epsilon": config.epsilon,
            "t_buckets": config.t_buckets,
            "pos_buckets": config.pos_buckets,
            "seed": config.seed,
            "holdout_fraction": config.holdout_fraction,
            "trace_points": config.trace_points,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_tabular(path: str | Path) -> tuple[TabularDenoiser, TabularTrainConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != TABULAR_FORMAT_VERSION:
        raise ValueError(f"unsupported denoiser format version {payload.get('format_version')}")
    den = TabularDenoiser(
        num_categories=payload["num_categories"],
        num_steps=payload["num_steps"],
        t_buckets=payload["t_buckets"],
        pos_buckets=payload["pos_buckets"],
        epsilon=payload["epsilon"],
        counts={int(key): np.array(tbl) for key, tbl in payload["counts"].items()},
    )
    return den, TabularTrainConfig(**payload["config"])
