"""Codebook construction, nearest-neighbor quantization, and VQ losses.

Quantization measures squared Euclidean distance between unit-normalized
latent vectors and unit-normalized codebook entries; ties go to the lowest
index. The training objective combines a reconstruction term, an embedding
term (moves codes toward latents), a weighted commitment term (moves latents
toward codes), and a weighted orthogonality penalty on the normalized Gram
matrix of the codebook. Gradient routing is term-wise: the embedding term
updates only the codebook, the commitment term only the encoder, and the
reconstruction term reaches the encoder through a straight-through pass that
treats the quantization step as the identity.

The toy trainer uses linear encoder/decoder maps so every gradient has a
closed form that finite differences can check directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import json

import numpy as np

from .corpus import ContinuousSequence, TokenSequence

__all__ = [
    "Codebook",
    "VqLossReport",
    "UsageReport",
    "ToyVqConfig",
    "ToyVqModel",
    "l2_normalize",
    "nearest_code_indices",
    "quantize",
    "orth_reg",
    "orth_reg_grad",
    "vq_losses",
    "train_toy_vq",
    "usage_report",
    "save_codebook",
    "load_codebook",
]

CODEBOOK_FORMAT_VERSION = 1


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector (or each row of a matrix) to unit Euclidean norm."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 1:
        norm = np.linalg.norm(arr)
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return arr / norm
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero row")
    return arr / norms


@dataclass
class Codebook:
    """``K`` embedding vectors of width ``d`` with per-entry usage counters."""

    entries: np.ndarray
    usage: np.ndarray = field(default=None)  # type: ignore[assignment]
    seed: int | None = None

    def __post_init__(self) -> None:
        self.entries = np.array(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or self.entries.shape[0] < 1 or self.entries.shape[1] < 1:
            raise ValueError("entries must be a (K, d) array with K, d >= 1")
        if np.any(np.linalg.norm(self.entries, axis=1) == 0.0):
            raise ValueError("codebook contains a zero entry")
        if self.usage is None:
            self.usage = np.zeros(self.num_codes, dtype=np.int64)
        else:
            self.usage = np.array(self.usage, dtype=np.int64)
            if self.usage.shape != (self.num_codes,):
                raise ValueError("usage shape does not match entry count")

    @property
    def num_codes(self) -> int:
        return self.entries.shape[0]

    @property
    def width(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def random_init(cls, num_codes: int, width: int, seed: int) -> "Codebook":
        """Entries drawn uniformly on the unit sphere."""
        rng = np.random.default_rng(seed)
        entries = rng.normal(size=(num_codes, width))
        entries /= np.linalg.norm(entries, axis=1, keepdims=True)
        return cls(entries, seed=seed)

    def reset_usage(self) -> None:
        self.usage[:] = 0

    def decode(self, states: np.ndarray) -> np.ndarray:
        """Map token states to entry rows; MASK and PAD map to zero frames."""
        states = np.asarray(states, dtype=np.int64)
        out = np.zeros((states.size, self.width))
        real = states < self.num_codes
        out[real] = self.entries[states[real]]
        return out


def nearest_code_indices(latents: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Argmin of squared distance between normalized rows; ties to lowest index."""
    b = l2_normalize(np.atleast_2d(np.asarray(latents, dtype=np.float64)))
    z = l2_normalize(np.asarray(entries, dtype=np.float64))
    # ||b - z||^2 = 2 - 2 <b, z> on the unit sphere; argmax of the dot product
    # with argmin-style tie-breaking (first maximal index).
    sims = b @ z.T
    d2 = 2.0 - 2.0 * sims
    return np.argmin(d2, axis=1)


def quantize(latents: np.ndarray, book: Codebook, count_usage: bool = True) -> TokenSequence:
    """Assign each latent row to its nearest codebook entry.

    Increments the codebook's usage counters unless ``count_usage`` is False.
    """
    arr = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if arr.shape[1] != book.width:
        raise ValueError(f"latent width {arr.shape[1]} != codebook width {book.width}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("latents contain non-finite values")
    idx = nearest_code_indices(arr, book.entries)
    if count_usage:
        book.usage += np.bincount(idx, minlength=book.num_codes)
    return TokenSequence(tuple(int(i) for i in idx), book.num_codes)


def orth_reg(entries: np.ndarray) -> float:
    """Squared Frobenius distance between the normalized Gram matrix and identity.

    Zero exactly when the normalized entries are pairwise orthogonal, which is
    attainable only for K <= d; above that the penalty has a positive floor.
    """
    z = l2_normalize(np.asarray(entries, dtype=np.float64))
    gram = z @ z.T
    delta = gram - np.eye(z.shape[0])
    return float(np.sum(delta * delta))


def orth_reg_grad(entries: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`orth_reg` with respect to the raw entries."""
    raw = np.asarray(entries, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("codebook contains a zero entry")
    z = raw / norms
    gram = z @ z.T
    g_z = 4.0 * (gram - np.eye(z.shape[0])) @ z
    # chain through row normalization: project out the radial component
    radial = np.sum(g_z * z, axis=1, keepdims=True)
    return (g_z - radial * z) / norms


@dataclass(frozen=True)
class VqLossReport:
    """Loss terms of one quantizer evaluation.

    ``embedding`` and ``commitment`` have equal values by construction (both
    measure latent-to-code distance); they differ only in which parameters
    receive their gradient.
    """

    reconstruction: float
    embedding: float
    commitment: float
    orthogonal: float
    eta: float
    delta: float

    @property
    def total(self) -> float:
        return (self.reconstruction + self.embedding
                + self.eta * self.commitment + self.delta * self.orthogonal)


def vq_losses(
    x: ContinuousSequence | np.ndarray,
    x_recon: ContinuousSequence | np.ndarray,
    latents: np.ndarray,
    selected_codes: np.ndarray,
    book: Codebook,
    eta: float,
    delta: float,
) -> VqLossReport:
    """Evaluate all loss terms for given inputs, reconstruction, and codes."""
    xa = x.frames if isinstance(x, ContinuousSequence) else np.asarray(x, dtype=np.float64)
    xr = x_recon.frames if isinstance(x_recon, ContinuousSequence) else np.asarray(x_recon, dtype=np.float64)
    b = np.asarray(latents, dtype=np.float64)
    zq = np.asarray(selected_codes, dtype=np.float64)
    if xa.shape != xr.shape:
        raise ValueError(f"input/reconstruction shape mismatch {xa.shape} vs {xr.shape}")
    if b.shape != zq.shape:
        raise ValueError(f"latent/code shape mismatch {b.shape} vs {zq.shape}")
    if b.shape[1] != book.width:
        raise ValueError("latent width does not match codebook")
    rec = float(np.sum((xa - xr) ** 2))
    dist = float(np.sum((zq - b) ** 2))
    return VqLossReport(
        reconstruction=rec,
        embedding=dist,
        commitment=dist,
        orthogonal=orth_reg(book.entries),
        eta=float(eta),
        delta=float(delta),
    )


@dataclass(frozen=True)
class ToyVqConfig:
    num_codes: int
    code_width: int
    input_width: int
    eta: float = 0.25
    delta: float = 0.0
    learning_rate: float = 0.05
    epochs: int = 100
    seed: int = 0


@dataclass
class ToyVqModel:
    """Linear encoder/decoder around a codebook.

    ``encode`` is ``x @ w_enc.T`` and ``decode`` is ``z @ w_dec.T``; both maps
    stay linear so the training gradients below are exact.
    """

    w_enc: np.ndarray  # (code_width, input_width)
    w_dec: np.ndarray  # (input_width, code_width)
    codebook: Codebook
    config: ToyVqConfig

    @classmethod
    def init(cls, config: ToyVqConfig) -> "ToyVqModel":
        rng = np.random.default_rng(config.seed)
        w_enc = rng.normal(scale=1.0 / np.sqrt(config.input_width),
                           size=(config.code_width, config.input_width))
        w_dec = rng.normal(scale=1.0 / np.sqrt(config.code_width),
                           size=(config.input_width, config.code_width))
        book = Codebook.random_init(config.num_codes, config.code_width,
                                    seed=config.seed + 1)
        return cls(w_enc, w_dec, book, config)

    def encode(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.w_enc.T

    def decode(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) @ self.w_dec.T

    def forward(self, x: np.ndarray):
        """Return (latents, indices, selected codes, reconstruction)."""
        b = self.encode(x)
        idx = nearest_code_indices(b, self.codebook.entries)
        zq = self.codebook.entries[idx]
        return b, idx, zq, self.decode(zq)


def vq_gradients(model: ToyVqModel, x: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradients of the total loss at fixed quantization assignments.

    Routing: reconstruction -> w_dec directly and w_enc via straight-through;
    embedding -> codebook; commitment -> w_enc; orthogonality -> codebook.
    """
    cfg = model.config
    b, idx, zq, xr = model.forward(x)
    resid = xr - np.asarray(x, dtype=np.float64)

    g_wdec = 2.0 * resid.T @ zq
    g_b_rec = 2.0 * resid @ model.w_dec          # straight-through to latents
    g_b_com = 2.0 * cfg.eta * (b - zq)
    g_wenc = (g_b_rec + g_b_com).T @ np.asarray(x, dtype=np.float64)

    g_book = np.zeros_like(model.codebook.entries)
    np.add.at(g_book, idx, 2.0 * (zq - b))
    if cfg.delta != 0.0:
        g_book += cfg.delta * orth_reg_grad(model.codebook.entries)
    return {"w_enc": g_wenc, "w_dec": g_wdec, "codebook": g_book}


def _corpus_matrix(corpus: Sequence[ContinuousSequence]) -> np.ndarray:
    return np.concatenate([seq.frames for seq in corpus], axis=0)


def train_toy_vq(
    corpus: Sequence[ContinuousSequence],
    config: ToyVqConfig,
) -> tuple[ToyVqModel, list[VqLossReport]]:
    """Full-batch gradient descent on the combined quantizer loss.

    Deterministic for a fixed seed. Aborts when the loss turns non-finite.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if corpus[0].width != config.input_width:
        raise ValueError("corpus width does not match config.input_width")
    x = _corpus_matrix(corpus)
    model = ToyVqModel.init(config)
    trace: list[VqLossReport] = []
    for epoch in range(config.epochs):
        b, idx, zq, xr = model.forward(x)
        report = vq_losses(x, xr, b, zq, model.codebook, config.eta, config.delta)
        if not np.isfinite(report.total):
            raise RuntimeError(f"training diverged at epoch {epoch}: loss={report.total}")
        trace.append(report)
        grads = vq_gradients(model, x)
        # gradients sum over frames; keep the step size corpus-size-independent
        lr = config.learning_rate / x.shape[0]
        model.w_enc -= lr * grads["w_enc"]
        model.w_dec -= lr * grads["w_dec"]
        model.codebook.entries -= lr * grads["codebook"]
        if np.any(np.linalg.norm(model.codebook.entries, axis=1) == 0.0):
            raise RuntimeError(f"training collapsed a codebook entry to zero at epoch {epoch}")
    model.codebook.reset_usage()
    quantize(model.encode(x), model.codebook)
    return model, trace


@dataclass(frozen=True)
class UsageReport:
    histogram: np.ndarray
    fraction: float
    entropy: float


def usage_report(book: Codebook, corpus: Sequence[TokenSequence]) -> UsageReport:
    """Histogram of code selections plus usage fraction and entropy (nats)."""
    hist = np.zeros(book.num_codes, dtype=np.int64)
    for seq in corpus:
        body = seq.body()
        if np.any(body >= book.num_codes):
            raise ValueError("token corpus contains states outside the codebook")
        hist += np.bincount(body, minlength=book.num_codes)
    total = hist.sum()
    if total == 0:
        return UsageReport(hist, 0.0, 0.0)
    p = hist[hist > 0] / total
    entropy = float(-np.sum(p * np.log(p)))
    fraction = float(np.count_nonzero(hist) / book.num_codes)
    return UsageReport(hist, fraction, entropy)


def write_usage_csv(report: UsageReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("entry,count\n")
        for i, c in enumerate(report.histogram):
            fh.write(f"{i},{int(c)}\n")


def save_codebook(book: Codebook, path: str | Path) -> None:
    payload = {
        "format_version": CODEBOOK_FORMAT_VERSION,
        "num_codes": book.num_codes,
        "width": book.width,
        "seed": book.seed,
        "entries": [[float(v) for v in row] for row in book.entries],
        "usage": [int(c) for c in book.usage],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != CODEBOOK_FORMAT_VERSION:
        raise ValueError(f"unsupported codebook format version {version}")
    book = Codebook(np.array(payload["entries"], dtype=np.float64),
                    usage=np.array(payload["usage"], dtype=np.int64),
                    seed=payload.get("seed"))
    if book.num_codes != payload["num_codes"] or book.width != payload["width"]:
        raise ValueError("codebook header does not match entry array")
    return book
