"""Corruption schedules: linear baselines, priority modulation, per-step params.

A schedule stores, per position and timestep, the cumulative probabilities of
a token having been retained (``alpha_bar``), replaced by a uniform random
category (``beta_bar`` each), or absorbed into MASK (``gamma_bar``). The three
always satisfy ``alpha_bar + K*beta_bar + gamma_bar = 1``. Per-step transition
parameters are derived from ratios of consecutive cumulative values and
compose back to the cumulative table.

Priority modulation multiplies the cumulative mask/replace masses by a
half-sine bump in time and by the per-position score, then repairs the result:
the modulated masses are clamped to keep a sliver of retention probability,
made monotone by a running maximum, and the final step is pinned to full
corruption so reverse sampling can start from pure noise. Low scores therefore
delay corruption, high scores hasten it, and every position still ends fully
corrupted.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .priority import PriorityScores

__all__ = [
    "ScheduleTable",
    "linear_base_schedule",
    "apply_priority",
    "per_step_from_cumulative",
    "compose_from_steps",
    "export_schedule_csv",
    "export_priority_bands_csv",
]

MASS_TOL = 1e-9
MONOTONE_TOL = 1e-12
DEFAULT_ABSORPTION_FLOOR = 1e-6


def per_step_from_cumulative(
    alpha_bar: np.ndarray,
    gamma_bar: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Recover per-step retention/masking probabilities from cumulative ones.

    ``alpha_t = alpha_bar_t / alpha_bar_{t-1}`` and
    ``gamma_t = 1 - (1 - gamma_bar_t) / (1 - gamma_bar_{t-1})``. The cumulative
    retention may only reach zero at the final step; hitting it earlier makes
    later ratios undefined.
    """
    ab = np.atleast_2d(np.asarray(alpha_bar, dtype=np.float64))
    gb = np.atleast_2d(np.asarray(gamma_bar, dtype=np.float64))
    t_max = ab.shape[1] - 1
    if np.any(ab[:, :t_max] <= 0.0):
        raise ValueError("premature absorption: cumulative retention hits zero before the final step")
    alpha = np.ones_like(ab)
    gamma = np.zeros_like(gb)
    alpha[:, 1:] = ab[:, 1:] / ab[:, :-1]
    gamma[:, 1:] = 1.0 - (1.0 - gb[:, 1:]) / (1.0 - gb[:, :-1])
    return alpha, gamma


def compose_from_steps(alpha: np.ndarray, gamma: np.ndarray, num_categories: int):
    """Cumulative table from per-step parameters (products over steps)."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=np.float64))
    ab = np.cumprod(alpha, axis=1)
    gb = 1.0 - np.cumprod(1.0 - gamma, axis=1)
    bb = (1.0 - ab - gb) / num_categories
    return ab, bb, gb


@dataclass(frozen=True)
class ScheduleTable:
    """Cumulative and per-step corruption parameters for each position.

    Arrays have shape ``(P, T+1)`` with column ``t=0`` fixed at
    ``(alpha_bar, beta_bar, gamma_bar) = (1, 0, 0)``. ``P`` is 1 for a
    position-uniform table. Construction validates the probability-mass
    identity, value ranges, monotonicity, and derives per-step parameters.
    """

    alpha_bar: np.ndarray
    beta_bar: np.ndarray
    gamma_bar: np.ndarray
    num_categories: int

    def __post_init__(self) -> None:
        ab = np.atleast_2d(np.array(self.alpha_bar, dtype=np.float64))
        bb = np.atleast_2d(np.array(self.beta_bar, dtype=np.float64))
        gb = np.atleast_2d(np.array(self.gamma_bar, dtype=np.float64))
        if not (ab.shape == bb.shape == gb.shape) or ab.shape[1] < 2:
            raise ValueError("cumulative arrays must share shape (P, T+1) with T >= 1")
        if self.num_categories < 1:
            raise ValueError("num_categories must be >= 1")
        k = self.num_categories

        if np.any((ab < -MASS_TOL) | (ab > 1 + MASS_TOL)) or np.any(
                (gb < -MASS_TOL) | (gb > 1 + MASS_TOL)) or np.any(bb < -MASS_TOL):
            raise ValueError("cumulative parameters outside [0, 1]")
        mass = ab + k * bb + gb
        if np.max(np.abs(mass - 1.0)) > MASS_TOL:
            raise ValueError("probability mass identity violated: alpha_bar + K*beta_bar + gamma_bar != 1")
        if np.max(np.abs(ab[:, 0] - 1.0)) > MASS_TOL or np.max(np.abs(gb[:, 0])) > MASS_TOL:
            raise ValueError("column t=0 must be (1, 0, 0)")
        if np.any(np.diff(ab, axis=1) > MONOTONE_TOL):
            raise ValueError("cumulative retention must be non-increasing in t")
        if np.any(np.diff(gb, axis=1) < -MONOTONE_TOL):
            raise ValueError("cumulative masking must be non-decreasing in t")

        alpha, gamma = per_step_from_cumulative(ab, gb)
        beta = (1.0 - alpha - gamma) / k
        for name, arr in (("alpha", alpha), ("gamma", gamma), ("beta", beta)):
            if np.any(arr < -MASS_TOL) or np.any(arr > 1 + MASS_TOL):
                raise ValueError(f"per-step {name} outside [0, 1]")
        alpha = np.clip(alpha, 0.0, 1.0)
        gamma = np.clip(gamma, 0.0, 1.0)
        beta = np.clip(beta, 0.0, None)

        for arr in (ab, bb, gb, alpha, beta, gamma):
            arr.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "beta_bar", bb)
        object.__setattr__(self, "gamma_bar", gb)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def num_steps(self) -> int:
        return self.alpha_bar.shape[1] - 1

    @property
    def num_positions(self) -> int:
        return self.alpha_bar.shape[0]

    @property
    def is_fully_corrupting(self) -> bool:
        """True when every position is fully corrupted at the final step."""
        return bool(np.all(self.alpha_bar[:, -1] <= MASS_TOL))

    def position_row(self, pos: int) -> int:
        """Row index serving ``pos``: a 1-row table serves every position."""
        if self.num_positions == 1:
            return 0
        if not 0 <= pos < self.num_positions:
            raise ValueError(f"position {pos} outside table with {self.num_positions} rows")
        return pos

    def cumulative(self, pos: int, t: int) -> tuple[float, float, float]:
        """``(alpha_bar, beta_bar, gamma_bar)`` at position ``pos``, step ``t``."""
        r = self.position_row(pos)
        return (float(self.alpha_bar[r, t]), float(self.beta_bar[r, t]),
                float(self.gamma_bar[r, t]))

    def step(self, pos: int, t: int) -> tuple[float, float, float]:
        """``(alpha, beta, gamma)`` of the single step ``t-1 -> t``."""
        if t < 1:
            raise ValueError("per-step parameters start at t=1")
        r = self.position_row(pos)
        return (float(self.alpha[r, t]), float(self.beta[r, t]),
                float(self.gamma[r, t]))


def linear_base_schedule(
    num_steps: int,
    num_categories: int,
    gamma_bar_final: float = 0.9,
    kbeta_bar_final: float = 0.1,
) -> ScheduleTable:
    """Position-uniform table with masses growing linearly to the final split.

    ``gamma_bar_t = gamma_bar_final * t/T`` and likewise for the replace mass,
    so retention decays linearly and reaches exactly zero at ``t = T``. The
    two final masses must sum to one.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if not (0.0 <= gamma_bar_final <= 1.0 and 0.0 <= kbeta_bar_final <= 1.0):
        raise ValueError("infeasible targets: final masses must lie in [0, 1]")
    if abs(gamma_bar_final + kbeta_bar_final - 1.0) > MASS_TOL:
        raise ValueError("infeasible targets: final masses must sum to 1")
    ramp = np.arange(num_steps + 1) / num_steps
    gb = gamma_bar_final * ramp
    kb = kbeta_bar_final * ramp
    ab = 1.0 - gb - kb
    return ScheduleTable(ab[None, :], (kb / num_categories)[None, :], gb[None, :],
                         num_categories)


def apply_priority(
    base: ScheduleTable,
    scores: PriorityScores,
    absorption_floor: float = DEFAULT_ABSORPTION_FLOOR,
) -> ScheduleTable:
    """Per-position table from a uniform base and mean-one priority scores.

    Pipeline order is fixed: modulate the interior steps by
    ``sin(t*pi/T) * score``, rescale any step whose combined mass would leave
    less than ``absorption_floor`` retention, restore monotonicity with a
    running maximum, then pin the final step to full corruption (final split
    copied from the base, nudged if monotonicity requires it).
    """
    if base.num_positions != 1:
        raise ValueError("apply_priority expects a position-uniform base table")
    if absorption_floor <= 0.0 or absorption_floor >= 1.0:
        raise ValueError("absorption_floor must lie in (0, 1)")
    f = scores.scores
    n = f.size
    t_max = base.num_steps
    k = base.num_categories

    gb = np.repeat(base.gamma_bar, n, axis=0).copy()
    kb = np.repeat(base.beta_bar * k, n, axis=0).copy()
    ts = np.arange(1, t_max)  # interior steps only; t = T is pinned below
    if ts.size:
        bump = np.sin(np.pi * ts / t_max)
        gb[:, ts] = base.gamma_bar[0, ts] * bump * f[:, None]
        kb[:, ts] = base.beta_bar[0, ts] * k * bump * f[:, None]

        # keep at least absorption_floor retention on interior steps
        tot = gb[:, ts] + kb[:, ts]
        scale = np.minimum(1.0, (1.0 - absorption_floor) / np.maximum(tot, 1e-300))
        gb[:, ts] *= scale
        kb[:, ts] *= scale

    # running maximum over time (final column fixed afterwards)
    gb[:, :t_max] = np.maximum.accumulate(gb[:, :t_max], axis=1)
    kb[:, :t_max] = np.maximum.accumulate(kb[:, :t_max], axis=1)

    # final step: full corruption, mask/replace split from the base where the
    # interior values allow it
    base_final = float(base.gamma_bar[0, t_max])
    lo = gb[:, t_max - 1]
    hi = 1.0 - kb[:, t_max - 1]
    gb[:, t_max] = np.clip(base_final, lo, hi)
    kb[:, t_max] = 1.0 - gb[:, t_max]

    ab = 1.0 - gb - kb
    ab[:, t_max] = 0.0
    return ScheduleTable(ab, kb / k, gb, k)


def export_schedule_csv(table: ScheduleTable, path: str | Path) -> None:
    """Rows ``position,t`` with cumulative and per-step parameters, t = 1..T."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("position,t,alpha_bar,beta_bar,gamma_bar,alpha,beta,gamma\n")
        for p in range(table.num_positions):
            for t in range(1, table.num_steps + 1):
                ab, bb, gb = table.cumulative(p, t)
                a, b, g = table.step(p, t)
                fh.write(f"{p},{t},{ab!r},{bb!r},{gb!r},{a!r},{b!r},{g!r}\n")


def export_priority_bands_csv(
    table: ScheduleTable,
    scores: PriorityScores,
    path: str | Path,
    num_bands: int = 4,
) -> None:
    """Mean cumulative masking curve per priority band (for plotting).

    Positions are grouped into ``num_bands`` quantile bands of their score;
    band 0 holds the lowest scores (latest corruption).
    """
    f = scores.scores
    if f.size != table.num_positions:
        raise ValueError("scores length must match table positions")
    order = np.argsort(f, kind="stable")
    bands = np.empty(f.size, dtype=np.int64)
    bands[order] = (np.arange(f.size) * num_bands) // f.size
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("band,t,mean_score,mean_gamma_bar\n")
        for b in range(num_bands):
            members = np.flatnonzero(bands == b)
            if members.size == 0:
                continue
            ms = float(f[members].mean())
            for t in range(1, table.num_steps + 1):
                mg = float(table.gamma_bar[members, t].mean())
                fh.write(f"{b},{t},{ms!r},{mg!r}\n")
