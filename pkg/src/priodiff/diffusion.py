"""Mask-and-replace categorical diffusion kernel.

State space per position: ``0..K-1`` are real categories and ``K`` is the
absorbing MASK state. One forward step retains a token with probability
``alpha``, replaces it with each real category with probability ``beta``, or
masks it with probability ``gamma``; MASK only maps to itself. PAD positions
sit outside the state space entirely: they are frozen during sampling and
skipped by the loss.

Convention: distributions are column vectors and a step applies as
``p_t = Q_t @ p_{t-1}``, so transition matrices are column-stochastic with
``Q[i, j] = P(x_t = i | x_{t-1} = j)``.

The closed-form cumulative marginal of ``x_t`` given a clean token is
``P(same) = alpha_bar + beta_bar``, ``P(other real) = beta_bar`` each and
``P(MASK) = gamma_bar``. The one-step posterior combines a per-step
transition row with the cumulative marginal at ``t-1`` via Bayes' rule. The
reverse kernel mixes those posteriors under a denoiser that predicts the
clean token. All of these are verified against brute-force matrix-product,
trajectory-enumeration, and Monte-Carlo oracles in :mod:`priodiff.verify`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .corpus import TokenSequence
from .schedule import ScheduleTable

if TYPE_CHECKING:  # pragma: no cover
    from .denoiser import Denoiser

__all__ = [
    "build_transition_matrix",
    "forward_marginal",
    "sample_forward",
    "sample_trajectory",
    "posterior",
    "reverse_step",
    "categorical_kl",
    "VlbReport",
    "vlb",
]

DIST_TOL = 1e-9
DENOISER_ROW_TOL = 1e-6
LOG_FLOOR = 1e-12
EXACT_VLB_MAX_CATEGORIES = 4
EXACT_VLB_MAX_STEPS = 6


def build_transition_matrix(alpha: float, beta: float, gamma: float,
                            num_categories: int) -> np.ndarray:
    """Dense ``(K+1, K+1)`` column-stochastic one-step transition matrix.

    Real-category columns put ``alpha + beta`` on the diagonal, ``beta`` on
    the other real rows and ``gamma`` on the MASK row; the MASK column is the
    unit vector at MASK (absorbing).
    """
    k = num_categories
    if beta < 0.0:
        raise ValueError(f"negative replace probability beta={beta}")
    if not (0.0 <= alpha <= 1.0 and 0.0 <= gamma <= 1.0):
        raise ValueError("alpha and gamma must lie in [0, 1]")
    if abs(alpha + k * beta + gamma - 1.0) > DIST_TOL:
        raise ValueError("alpha + K*beta + gamma must equal 1")
    q = np.zeros((k + 1, k + 1))
    q[:k, :k] = beta
    q[np.arange(k), np.arange(k)] += alpha
    q[k, :k] = gamma
    q[k, k] = 1.0
    return q


def _step_row(x_t: int, table: ScheduleTable, pos: int, t: int) -> np.ndarray:
    """Row ``Q_t[x_t, :]`` as a vector over previous states, no K^2 storage."""
    k = table.num_categories
    alpha, beta, gamma = table.step(pos, t)
    row = np.empty(k + 1)
    if x_t == k:
        row[:k] = gamma
        row[k] = 1.0
    else:
        row[:k] = beta
        row[x_t] += alpha
        row[k] = 0.0
    return row


def forward_marginal(x0: int, table: ScheduleTable, pos: int, t: int) -> np.ndarray:
    """Distribution of ``x_t`` given the clean token ``x0`` at a position."""
    k = table.num_categories
    if not 0 <= x0 < k:
        raise ValueError(f"x0 must be a real category in [0, {k}), got {x0}")
    ab, bb, gb = table.cumulative(pos, t)
    dist = np.full(k + 1, bb)
    dist[x0] += ab
    dist[k] = gb
    return dist


def _sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> int:
    # exact inverse-CDF draw; avoids rng.choice re-normalization overhead
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, probs.size - 1))


def sample_forward(seq: TokenSequence, table: ScheduleTable, t: int,
                   rng: np.random.Generator) -> TokenSequence:
    """Corrupt a clean sequence directly to time ``t``.

    Every non-PAD position is drawn independently from its cumulative
    marginal; PAD positions pass through untouched.
    """
    if not seq.is_clean:
        raise ValueError("forward sampling needs a clean sequence (no MASK)")
    if not 0 <= t <= table.num_steps:
        raise ValueError(f"t={t} outside schedule with T={table.num_steps}")
    body = seq.body()
    out = body.copy()
    for i, x0 in enumerate(body):
        out[i] = _sample_categorical(rng, forward_marginal(int(x0), table, i, t))
    return seq.with_body(out)


def sample_trajectory(seq: TokenSequence, table: ScheduleTable,
                      rng: np.random.Generator) -> list[TokenSequence]:
    """Full forward trajectory ``x_0 .. x_T`` using per-step transitions."""
    if not seq.is_clean:
        raise ValueError("forward sampling needs a clean sequence (no MASK)")
    k = table.num_categories
    states = [seq]
    body = seq.body()
    for t in range(1, table.num_steps + 1):
        nxt = body.copy()
        for i, s in enumerate(body):
            if s == k:  # MASK is absorbing
                continue
            alpha, beta, gamma = table.step(i, t)
            u = rng.random()
            if u < alpha:
                continue
            u -= alpha
            if u < gamma:
                nxt[i] = k
            else:
                nxt[i] = int((u - gamma) // beta) if beta > 0.0 else k
                if nxt[i] >= k:
                    nxt[i] = k - 1  # guard rounding at the interval edge
        body = nxt
        states.append(seq.with_body(body))
    return states


def posterior(x_t: int, x0: int, table: ScheduleTable, pos: int, t: int) -> np.ndarray:
    """Exact one-step denoising distribution of ``x_{t-1}`` given both endpoints.

    Bayes' rule: proportional to (one-step likelihood of ``x_t`` from each
    previous state) times (cumulative marginal of the previous state from
    ``x0``), normalized by the marginal probability of ``x_t``.
    """
    if t < 1:
        raise ValueError("posterior needs t >= 1")
    lik = _step_row(x_t, table, pos, t)
    prev = forward_marginal(x0, table, pos, t - 1)
    unnorm = lik * prev
    z = unnorm.sum()
    if z <= 0.0:
        raise ValueError(
            f"inconsistent evidence: state {x_t} at t={t} is unreachable from {x0}")
    return unnorm / z


def _posterior_matrix(x_t: int, table: ScheduleTable, pos: int, t: int) -> np.ndarray:
    """Rows ``c`` give the posterior of ``x_{t-1}`` assuming clean token ``c``.

    Row ``c`` is all zeros when ``x_t`` is unreachable from ``c``.
    """
    k = table.num_categories
    lik = _step_row(x_t, table, pos, t)
    ab, bb, gb = table.cumulative(pos, t - 1)
    prev = np.full((k, k + 1), bb)
    prev[np.arange(k), np.arange(k)] += ab
    prev[:, k] = gb
    unnorm = prev * lik[None, :]
    z = unnorm.sum(axis=1, keepdims=True)
    out = np.zeros_like(unnorm)
    reachable = z[:, 0] > 0.0
    out[reachable] = unnorm[reachable] / z[reachable]
    return out


def _reverse_position_distribution(x_t: int, den_row: np.ndarray,
                                   table: ScheduleTable, pos: int, t: int) -> np.ndarray:
    """Mixture of exact posteriors weighted by the denoiser's clean-token row."""
    post = _posterior_matrix(x_t, table, pos, t)
    reachable = post.sum(axis=1) > 0.0
    weight = float(den_row[reachable].sum())
    if weight <= 0.0:
        raise ValueError(
            f"inconsistent evidence: denoiser mass is zero on every clean token "
            f"that can reach state {x_t} at t={t}")
    return (den_row[None, reachable] @ post[reachable])[0] / weight


def _validate_denoiser_rows(rows: np.ndarray, k: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != k:
        raise ValueError(f"denoiser output must be (N, {k})")
    if np.any(rows < -DENOISER_ROW_TOL):
        raise ValueError("denoiser row has negative probability")
    sums = rows.sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > DENOISER_ROW_TOL:
        raise ValueError("denoiser row not normalized")
    return np.clip(rows, 0.0, None)


def reverse_step(seq_t: TokenSequence, denoiser: "Denoiser", table: ScheduleTable,
                 t: int, rng: np.random.Generator,
                 condition: int | None = None) -> TokenSequence:
    """Sample ``x_{t-1}`` from the denoiser-mixed posterior, position-wise."""
    if t < 1:
        raise ValueError("reverse_step needs t >= 1")
    body = seq_t.body()
    den = _validate_denoiser_rows(
        denoiser.predict_x0(body, t, condition), table.num_categories)
    out = body.copy()
    for i, x_t in enumerate(body):
        dist = _reverse_position_distribution(int(x_t), den[i], table, i, t)
        out[i] = _sample_categorical(rng, dist)
    return seq_t.with_body(out)


def categorical_kl(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence between two categorical distributions, in nats.

    Probabilities of ``q`` below ``LOG_FLOOR`` are floored inside the log so a
    support mismatch yields a large finite penalty rather than infinity.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    nz = p > 0.0
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(np.maximum(q[nz], LOG_FLOOR)))))


@dataclass(frozen=True)
class VlbReport:
    """Variational-bound terms, summed over non-PAD positions, in nats.

    ``diffusion`` collects the posterior KL terms for ``t = 2..T``;
    ``reconstruction`` is the negative log-likelihood of the clean token from
    ``t = 1``. ``stderr`` is set in sampled mode only.
    """

    prior: float
    diffusion: float
    reconstruction: float
    mode: str
    num_samples: int = 0
    stderr: float = 0.0

    @property
    def total(self) -> float:
        return self.prior + self.diffusion + self.reconstruction


def _terminal_reference(table: ScheduleTable, pos: int) -> np.ndarray:
    """The clean-token-independent reference distribution at ``t = T``.

    Equals the closed-form terminal marginal for fully corrupting schedules;
    any leftover retention mass is spread uniformly over real categories.
    """
    k = table.num_categories
    ab, bb, gb = table.cumulative(pos, table.num_steps)
    ref = np.full(k + 1, bb + ab / k)
    ref[k] = gb
    return ref


def _denoiser_rows_by_state(denoiser: "Denoiser", n: int, t: int,
                            condition: int | None, k: int) -> np.ndarray:
    """Per-position denoiser rows for every possible observed state.

    Exact evaluation enumerates positions independently, which is valid for
    denoisers whose per-position output depends only on that position's state
    (true of every denoiser shipped here). Returns shape ``(K+1, N, K)``.
    """
    rows = np.empty((k + 1, n, k))
    for s in range(k + 1):
        rows[s] = _validate_denoiser_rows(
            denoiser.predict_x0(np.full(n, s, dtype=np.int64), t, condition), k)
    return rows


def vlb(seq: TokenSequence, denoiser: "Denoiser", table: ScheduleTable,
        mode: str = "auto", num_samples: int = 1000,
        rng: np.random.Generator | None = None,
        condition: int | None = None) -> VlbReport:
    """Variational bound of a clean sequence under a denoiser and schedule.

    ``exact`` mode sums every term against closed-form marginal weights
    (cheap, but assumes the denoiser factorizes across positions). ``sampled``
    mode is an unbiased Monte-Carlo estimator over forward draws and reports
    its standard error. ``auto`` picks exact for desk-sized instances.
    """
    if not seq.is_clean:
        raise ValueError("vlb needs a clean sequence")
    k = table.num_categories
    t_max = table.num_steps
    if mode == "auto":
        mode = ("exact" if k <= EXACT_VLB_MAX_CATEGORIES and t_max <= EXACT_VLB_MAX_STEPS
                else "sampled")
    if condition is None:
        condition = seq.condition
    body = seq.body()
    n = body.size

    prior = 0.0
    for i, x0 in enumerate(body):
        q_t = forward_marginal(int(x0), table, i, t_max)
        prior += categorical_kl(q_t, _terminal_reference(table, i))

    clamped = False
    if mode == "exact":
        diffusion = 0.0
        reconstruction = 0.0
        for t in range(1, t_max + 1):
            rows = _denoiser_rows_by_state(denoiser, n, t, condition, k)
            for i, x0 in enumerate(body):
                q_t = forward_marginal(int(x0), table, i, t)
                for s in range(k + 1):
                    w = q_t[s]
                    if w <= 0.0:
                        continue
                    if t == 1:
                        p = rows[s, i, int(x0)]
                        if p < LOG_FLOOR:
                            clamped = True
                        reconstruction += w * -np.log(max(p, LOG_FLOOR))
                    else:
                        post = posterior(s, int(x0), table, i, t)
                        model = _reverse_position_distribution(s, rows[s, i], table, i, t)
                        diffusion += w * categorical_kl(post, model)
        if clamped:
            warnings.warn("reconstruction likelihood clamped at floor 1e-12")
        return VlbReport(prior, diffusion, reconstruction, mode="exact")

    if mode != "sampled":
        raise ValueError(f"unknown vlb mode {mode!r}")
    if rng is None:
        raise ValueError("sampled mode needs an rng")

    totals = np.empty(num_samples)
    diff_sum = 0.0
    recon_sum = 0.0
    for m in range(num_samples):
        val_diff = 0.0
        val_recon = 0.0
        for t in range(1, t_max + 1):
            x_t = np.array([
                _sample_categorical(rng, forward_marginal(int(x0), table, i, t))
                for i, x0 in enumerate(body)
            ])
            den = _validate_denoiser_rows(denoiser.predict_x0(x_t, t, condition), k)
            for i, x0 in enumerate(body):
                s = int(x_t[i])
                if t == 1:
                    p = den[i, int(x0)]
                    if p < LOG_FLOOR:
                        clamped = True
                    val_recon += -np.log(max(p, LOG_FLOOR))
                else:
                    post = posterior(s, int(x0), table, i, t)
                    model = _reverse_position_distribution(s, den[i], table, i, t)
                    val_diff += categorical_kl(post, model)
        totals[m] = val_diff + val_recon
        diff_sum += val_diff
        recon_sum += val_recon
    if clamped:
        warnings.warn("reconstruction likelihood clamped at floor 1e-12")
    stderr = float(totals.std(ddof=1) / np.sqrt(num_samples)) if num_samples > 1 else 0.0
    return VlbReport(prior, diff_sum / num_samples, recon_sum / num_samples,
                     mode="sampled", num_samples=num_samples, stderr=stderr)
