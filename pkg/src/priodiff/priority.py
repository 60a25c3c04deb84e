"""Per-token priority scores from corpus entropy or a learned ordering agent.

Scores are positive with mean exactly 1 over a sequence, so either scorer can
feed the schedule module unchanged. Polarity: a LOW score marks a
high-priority token, which the schedule corrupts late in the forward process
(and which the reverse process therefore restores early). This follows from
the scores multiplying corruption probabilities.

The dynamic scorer learns to pick tokens in order of how much each pick
reduces reconstruction error through a decoder; its verification oracle is an
exact greedy search over the same objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .corpus import CorpusStats, TokenSequence

__all__ = [
    "PriorityScores",
    "TokenDecoder",
    "SeparableDecoder",
    "OrderingPolicy",
    "OrderingAgentConfig",
    "EpisodeTrace",
    "token_entropy",
    "static_scores",
    "uniform_scores",
    "reconstruction_error",
    "greedy_order_oracle",
    "rollout",
    "train_ordering_agent",
    "dynamic_scores",
    "save_policy",
    "load_policy",
]

POLICY_FORMAT_VERSION = 1
MEAN_TOL = 1e-9


@dataclass(frozen=True)
class PriorityScores:
    """Positive per-position multipliers that average to one."""

    scores: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.scores, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("scores must be a non-empty 1-D array")
        if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
            raise ValueError("scores must be positive and finite")
        if abs(arr.sum() - arr.size) > MEAN_TOL * arr.size:
            raise ValueError("scores must sum to the sequence length")
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    def __len__(self) -> int:
        return self.scores.size


def token_entropy(stats: CorpusStats) -> np.ndarray:
    """Per-category surprisal weight ``-p * ln(p)``; zero-count categories get 0."""
    if stats.total == 0:
        raise ValueError("empty statistics: total count is zero")
    p = stats.probabilities()
    h = np.zeros_like(p)
    nz = p > 0.0
    h[nz] = -p[nz] * np.log(p[nz])
    return h


def static_scores(seq: TokenSequence, entropy: np.ndarray) -> PriorityScores:
    """Scores proportional to each position's category entropy, mean-normalized.

    Rare categories carry little weight here, so they score low, i.e. rank as
    high priority and corrupt late.
    """
    body = seq.body()
    if np.any(body >= seq.num_categories):
        raise ValueError("static scores need a clean sequence (no MASK)")
    entropy = np.asarray(entropy, dtype=np.float64)
    if entropy.shape != (seq.num_categories,):
        raise ValueError("entropy array must have one value per category")
    h = entropy[body]
    total = h.sum()
    if total <= 0.0:
        raise ValueError("degenerate priorities: entropy is zero for every position")
    scores = h * (body.size / total)
    scores *= body.size / scores.sum()  # pin the mean exactly despite rounding
    return PriorityScores(scores)


def uniform_scores(n: int) -> PriorityScores:
    """Fallback scores when priorities are degenerate or disabled."""
    return PriorityScores(np.ones(n))


class TokenDecoder(Protocol):
    """Maps token states to continuous frames; MASK and PAD decode to zeros."""

    def decode(self, states: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class SeparableDecoder:
    """Test decoder where each position contributes an independent frame.

    State ``k`` decodes to a frame of magnitude ``magnitudes[k]`` on the first
    axis, so reconstruction error decomposes exactly across positions.
    """

    magnitudes: np.ndarray
    width: int = 1

    def __post_init__(self) -> None:
        arr = np.array(self.magnitudes, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "magnitudes", arr)

    def decode(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        out = np.zeros((states.size, self.width))
        real = states < self.magnitudes.size
        out[real, 0] = self.magnitudes[states[real]]
        return out


def reconstruction_error(decoder: TokenDecoder, states: np.ndarray, target: np.ndarray) -> float:
    """Squared Frobenius distance between the decoded states and the target."""
    return float(np.sum((np.asarray(target, dtype=np.float64) - decoder.decode(states)) ** 2))


def _masked_states(body: np.ndarray, selected: Sequence[int], mask_token: int) -> np.ndarray:
    states = np.full(body.shape, mask_token, dtype=np.int64)
    sel = list(selected)
    if sel:
        states[sel] = body[sel]
    return states


def greedy_order_oracle(
    seq: TokenSequence,
    decoder: TokenDecoder,
    target: np.ndarray | None = None,
) -> np.ndarray:
    """Exact greedy pick order: at each step reveal the position whose
    inclusion most reduces reconstruction error, ties to the lowest position.

    Unselected positions stay MASK (decoding to zero frames). This is the
    verification oracle for the learned ordering agent.
    """
    body = seq.body()
    n = body.size
    if target is None:
        target = decoder.decode(body)
    target = np.asarray(target, dtype=np.float64)
    selected: list[int] = []
    remaining = list(range(n))
    order = []
    for _ in range(n):
        errs = [
            reconstruction_error(decoder, _masked_states(body, selected + [i], seq.mask_token), target)
            for i in remaining
        ]
        pick = remaining[int(np.argmin(errs))]
        order.append(pick)
        selected.append(pick)
        remaining.remove(pick)
    return np.asarray(order, dtype=np.int64)


@dataclass
class OrderingPolicy:
    """Linear softmax policy over remaining positions.

    Candidate features: the rank of its marginal error drop among remaining
    candidates (bucketized, capped), its token category, and the fraction of
    positions already selected (shared across candidates, so it shifts all
    logits equally).
    """

    num_categories: int
    drop_buckets: int = 8
    theta_bucket: np.ndarray = field(default=None)  # type: ignore[assignment]
    theta_category: np.ndarray = field(default=None)  # type: ignore[assignment]
    theta_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.theta_bucket is None:
            self.theta_bucket = np.zeros(self.drop_buckets)
        else:
            self.theta_bucket = np.array(self.theta_bucket, dtype=np.float64)
        if self.theta_category is None:
            self.theta_category = np.zeros(self.num_categories)
        else:
            self.theta_category = np.array(self.theta_category, dtype=np.float64)
        if self.theta_bucket.shape != (self.drop_buckets,):
            raise ValueError("theta_bucket shape mismatch")
        if self.theta_category.shape != (self.num_categories,):
            raise ValueError("theta_category shape mismatch")

    def logits(self, buckets: np.ndarray, categories: np.ndarray, fraction: float) -> np.ndarray:
        return (self.theta_bucket[buckets]
                + self.theta_category[categories]
                + self.theta_fraction * fraction)

    def probabilities(self, buckets: np.ndarray, categories: np.ndarray, fraction: float) -> np.ndarray:
        z = self.logits(buckets, categories, fraction)
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()


@dataclass(frozen=True)
class EpisodeTrace:
    """One rollout: pick order, error after each pick, per-step rewards."""

    picks: np.ndarray
    errors: np.ndarray   # length n+1; errors[0] is the all-masked error
    rewards: np.ndarray  # rewards[t] = errors[t] - errors[t+1]

    @property
    def ret(self) -> float:
        return float(self.rewards.sum())


@dataclass(frozen=True)
class OrderingAgentConfig:
    learning_rate: float = 0.15
    episodes: int = 1500
    baseline: str = "moving_average"  # or "none"
    baseline_momentum: float = 0.1
    drop_buckets: int = 8
    seed: int = 0


def _candidate_features(
    body: np.ndarray,
    remaining: list[int],
    selected: list[int],
    decoder: TokenDecoder,
    target: np.ndarray,
    mask_token: int,
    current_error: float,
    n_buckets: int,
):
    """Per-candidate (drop-rank bucket, category) plus the shared fraction."""
    drops = np.array([
        current_error
        - reconstruction_error(decoder, _masked_states(body, selected + [i], mask_token), target)
        for i in remaining
    ])
    # rank 0 = largest drop; stable sort keeps position-order tie-breaking
    order = np.argsort(-drops, kind="stable")
    ranks = np.empty(len(remaining), dtype=np.int64)
    ranks[order] = np.arange(len(remaining))
    buckets = np.minimum(ranks, n_buckets - 1)
    categories = body[remaining]
    fraction = len(selected) / body.size
    return buckets, categories, fraction, drops


def rollout(
    policy: OrderingPolicy,
    seq: TokenSequence,
    decoder: TokenDecoder,
    target: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
    greedy: bool = False,
) -> EpisodeTrace:
    """Run the policy over a sequence, sampling picks (or argmax if greedy)."""
    body = seq.body()
    n = body.size
    if target is None:
        target = decoder.decode(body)
    target = np.asarray(target, dtype=np.float64)
    if not greedy and rng is None:
        raise ValueError("sampling rollout needs an rng")

    selected: list[int] = []
    remaining = list(range(n))
    errors = [reconstruction_error(decoder, _masked_states(body, [], seq.mask_token), target)]
    picks = []
    for _ in range(n):
        buckets, cats, frac, _ = _candidate_features(
            body, remaining, selected, decoder, target, seq.mask_token,
            errors[-1], policy.drop_buckets)
        if greedy:
            z = policy.logits(buckets, cats, frac)
            j = int(np.argmax(z))  # ties to the lowest remaining position
        else:
            probs = policy.probabilities(buckets, cats, frac)
            j = int(rng.choice(len(remaining), p=probs))
        pick = remaining[j]
        picks.append(pick)
        selected.append(pick)
        remaining.pop(j)
        errors.append(reconstruction_error(
            decoder, _masked_states(body, selected, seq.mask_token), target))
    errors_arr = np.asarray(errors)
    return EpisodeTrace(np.asarray(picks, dtype=np.int64), errors_arr, -np.diff(errors_arr))


def train_ordering_agent(
    corpus: Sequence[TokenSequence],
    decoder: TokenDecoder,
    config: OrderingAgentConfig,
    targets: Sequence[np.ndarray] | None = None,
) -> tuple[OrderingPolicy, list[float]]:
    """Score-function policy gradient on per-step error-drop rewards.

    The return of a whole episode telescopes to a policy-independent constant,
    so credit is assigned per step: each pick's advantage is its immediate
    error drop minus a per-step moving-average baseline.
    Deterministic for a fixed seed; returns the per-episode return trace.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if targets is not None and len(targets) != len(corpus):
        raise ValueError("targets length mismatch")
    rng = np.random.default_rng(config.seed)
    k = corpus[0].num_categories
    policy = OrderingPolicy(num_categories=k, drop_buckets=config.drop_buckets)
    baselines: dict[int, float] = {}
    trace: list[float] = []

    for ep in range(config.episodes):
        si = int(rng.integers(0, len(corpus)))
        seq = corpus[si]
        body = seq.body()
        target = (np.asarray(targets[si], dtype=np.float64) if targets is not None
                  else decoder.decode(body))

        selected: list[int] = []
        remaining = list(range(body.size))
        current_error = reconstruction_error(
            decoder, _masked_states(body, [], seq.mask_token), target)
        ep_return = 0.0

        for step in range(body.size):
            buckets, cats, frac, drops = _candidate_features(
                body, remaining, selected, decoder, target, seq.mask_token,
                current_error, policy.drop_buckets)
            probs = policy.probabilities(buckets, cats, frac)
            j = int(rng.choice(len(remaining), p=probs))
            reward = float(drops[j])
            ep_return += reward

            if config.baseline == "moving_average":
                base = baselines.get(step, reward)
                baselines[step] = (1.0 - config.baseline_momentum) * base \
                    + config.baseline_momentum * reward
            elif config.baseline == "none":
                base = 0.0
            else:
                raise ValueError(f"unknown baseline type {config.baseline!r}")
            advantage = reward - base

            # d log pi / d theta for a linear softmax: chosen features minus
            # the probability-weighted feature average
            step_size = config.learning_rate * advantage
            policy.theta_bucket[buckets[j]] += step_size
            np.add.at(policy.theta_bucket, buckets, -step_size * probs)
            policy.theta_category[cats[j]] += step_size
            np.add.at(policy.theta_category, cats, -step_size * probs)
            # the fraction feature is shared by all candidates, so its
            # score-function gradient is identically zero

            pick = remaining[j]
            selected.append(pick)
            remaining.pop(j)
            current_error -= reward

        if not (np.all(np.isfinite(policy.theta_bucket))
                and np.all(np.isfinite(policy.theta_category))):
            raise RuntimeError(f"policy parameters became non-finite at episode {ep}")
        trace.append(ep_return)
    return policy, trace


def dynamic_scores(
    seq: TokenSequence,
    policy: OrderingPolicy,
    decoder: TokenDecoder,
    target: np.ndarray | None = None,
) -> PriorityScores:
    """Scores from the policy's greedy pick order.

    The first pick (most important) gets rank 1 and the smallest score
    ``2 * rank / (n + 1)``; the mean is exactly one.
    """
    trace = rollout(policy, seq, decoder, target=target, greedy=True)
    n = trace.picks.size
    ranks = np.empty(n, dtype=np.float64)
    ranks[trace.picks] = np.arange(1, n + 1)
    scores = 2.0 * ranks / (n + 1)
    scores *= n / scores.sum()
    return PriorityScores(scores)


def save_policy(policy: OrderingPolicy, config: OrderingAgentConfig, path: str | Path) -> None:
    payload = {
        "format_version": POLICY_FORMAT_VERSION,
        "num_categories": policy.num_categories,
        "drop_buckets": policy.drop_buckets,
        "theta_bucket": [float(v) for v in policy.theta_bucket],
        "theta_category": [float(v) for v in policy.theta_category],
        "theta_fraction": float(policy.theta_fraction),
        "config": {
            "learning_rate": config.learning_rate,
            "episodes": config.episodes,
            "baseline": config.baseline,
            "baseline_momentum": config.baseline_momentum,
            "drop_buckets": config.drop_buckets,
            "seed": config.seed,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_policy(path: str | Path) -> tuple[OrderingPolicy, OrderingAgentConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != POLICY_FORMAT_VERSION:
        raise ValueError(f"unsupported policy format version {payload.get('format_version')}")
    policy = OrderingPolicy(
        num_categories=payload["num_categories"],
        drop_buckets=payload["drop_buckets"],
        theta_bucket=np.array(payload["theta_bucket"]),
        theta_category=np.array(payload["theta_category"]),
        theta_fraction=payload["theta_fraction"],
    )
    cfg = OrderingAgentConfig(**payload["config"])
    return policy, cfg
