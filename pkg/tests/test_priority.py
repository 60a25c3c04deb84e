import math

import numpy as np
import pytest
from scipy.stats import kendalltau

from priodiff.corpus import CorpusStats, TokenSequence
from priodiff.priority import (
    OrderingAgentConfig,
    OrderingPolicy,
    PriorityScores,
    SeparableDecoder,
    dynamic_scores,
    greedy_order_oracle,
    load_policy,
    rollout,
    save_policy,
    static_scores,
    token_entropy,
    train_ordering_agent,
    uniform_scores,
)

# hand evaluation of -p*ln(p) for the two-category worked example
H_A = -0.8 * math.log(0.8)
H_B = -0.2 * math.log(0.2)


def test_token_entropy_worked_example():
    stats = CorpusStats(np.array([8, 2]))
    h = token_entropy(stats)
    assert h[0] == pytest.approx(H_A, abs=1e-12)
    assert h[1] == pytest.approx(H_B, abs=1e-12)
    assert h[0] == pytest.approx(0.17851, abs=1e-5)
    assert h[1] == pytest.approx(0.32189, abs=1e-5)


def test_token_entropy_single_category():
    h = token_entropy(CorpusStats(np.array([10])))
    assert h[0] == 0.0


def test_token_entropy_uniform_equal():
    h = token_entropy(CorpusStats(np.array([5, 5, 5, 5])))
    assert np.allclose(h, h[0])


def test_token_entropy_zero_count_category():
    h = token_entropy(CorpusStats(np.array([5, 0, 5])))
    assert h[1] == 0.0


def test_token_entropy_zero_total_errors():
    with pytest.raises(ValueError, match="zero"):
        token_entropy(CorpusStats(np.array([0, 0])))


def test_static_scores_worked_example():
    seq = TokenSequence((0, 1), 2)
    f = static_scores(seq, np.array([H_A, H_B])).scores
    expected = np.array([2 * H_A, 2 * H_B]) / (H_A + H_B)
    np.testing.assert_allclose(f, expected, rtol=1e-12)
    assert f[0] == pytest.approx(0.71346, abs=1e-4)
    assert f[1] == pytest.approx(1.28654, abs=1e-4)
    assert f.sum() == pytest.approx(2.0, abs=1e-12)


def test_static_scores_equal_entropy_is_uniform():
    seq = TokenSequence((3, 3, 3, 3), 5)
    h = np.zeros(5)
    h[3] = 0.25
    np.testing.assert_allclose(static_scores(seq, h).scores, 1.0)


def test_static_scores_length_one():
    seq = TokenSequence((1,), 3)
    h = np.array([0.1, 0.5, 0.2])
    np.testing.assert_allclose(static_scores(seq, h).scores, [1.0])


def test_static_scores_scale_free():
    seq = TokenSequence((0, 1, 2, 1), 3)
    h = np.array([0.3, 0.1, 0.45])
    a = static_scores(seq, h).scores
    b = static_scores(seq, 17.0 * h).scores
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_static_scores_degenerate_errors():
    seq = TokenSequence((0, 0), 2)
    with pytest.raises(ValueError, match="degenerate"):
        static_scores(seq, np.zeros(2))


def test_priority_scores_validation():
    with pytest.raises(ValueError):
        PriorityScores(np.array([0.5, 2.5]))  # sums to 3, not 2
    with pytest.raises(ValueError):
        PriorityScores(np.array([-0.5, 2.5]))
    assert len(uniform_scores(4)) == 4


def _distinct_decoder(k=6):
    # strictly increasing magnitudes so greedy order is unambiguous
    return SeparableDecoder(np.arange(1.0, k + 1.0))


def test_greedy_oracle_descending_magnitude():
    dec = _distinct_decoder()
    seq = TokenSequence((2, 5, 0, 3), 6)
    order = greedy_order_oracle(seq, dec)
    # contributions 3, 6, 1, 4 -> positions sorted by magnitude descending
    assert list(order) == [1, 3, 0, 2]


def test_greedy_oracle_tie_positional():
    dec = SeparableDecoder(np.array([2.0, 2.0]))
    seq = TokenSequence((0, 1, 0), 2)
    assert list(greedy_order_oracle(seq, dec)) == [0, 1, 2]


def test_greedy_oracle_single_position():
    dec = _distinct_decoder()
    assert list(greedy_order_oracle(TokenSequence((4,), 6), dec)) == [0]


def test_greedy_oracle_is_permutation():
    rng = np.random.default_rng(0)
    dec = _distinct_decoder(8)
    for _ in range(10):
        seq = TokenSequence(tuple(rng.integers(0, 8, size=7)), 8)
        order = greedy_order_oracle(seq, dec)
        assert sorted(order) == list(range(7))


def test_rollout_telescoping():
    dec = _distinct_decoder()
    seq = TokenSequence((1, 4, 2), 6)
    policy = OrderingPolicy(num_categories=6)
    trace = rollout(policy, seq, dec, rng=np.random.default_rng(3))
    assert sorted(trace.picks) == [0, 1, 2]
    assert trace.ret == pytest.approx(trace.errors[0] - trace.errors[-1], rel=1e-12)
    # decoder reproduces the target exactly, so the final error is zero
    assert trace.errors[-1] == pytest.approx(0.0, abs=1e-12)


def test_zero_learning_rate_leaves_policy_unchanged():
    dec = _distinct_decoder()
    corpus = [TokenSequence((0, 3, 5), 6), TokenSequence((2, 1), 6)]
    cfg = OrderingAgentConfig(learning_rate=0.0, episodes=50, seed=4)
    policy, _ = train_ordering_agent(corpus, dec, cfg)
    assert np.all(policy.theta_bucket == 0.0)
    assert np.all(policy.theta_category == 0.0)
    fresh = OrderingPolicy(num_categories=6)
    seq = TokenSequence((5, 0, 2, 3), 6)
    a = rollout(policy, seq, dec, rng=np.random.default_rng(9))
    b = rollout(fresh, seq, dec, rng=np.random.default_rng(9))
    assert np.array_equal(a.picks, b.picks)


def test_training_deterministic():
    dec = _distinct_decoder()
    corpus = [TokenSequence((0, 3, 5, 1), 6), TokenSequence((2, 4, 1), 6)]
    cfg = OrderingAgentConfig(episodes=100, seed=11)
    p1, t1 = train_ordering_agent(corpus, dec, cfg)
    p2, t2 = train_ordering_agent(corpus, dec, cfg)
    np.testing.assert_array_equal(p1.theta_bucket, p2.theta_bucket)
    assert t1 == t2


def test_single_position_return_is_single_drop():
    dec = _distinct_decoder()
    seq = TokenSequence((3,), 6)
    policy = OrderingPolicy(num_categories=6)
    trace = rollout(policy, seq, dec, rng=np.random.default_rng(1))
    assert trace.rewards.size == 1
    assert trace.ret == pytest.approx(16.0)  # magnitude 4 squared


def _benchmark(seed, n, k=8, length=6):
    rng = np.random.default_rng(seed)
    return [
        TokenSequence(tuple(rng.permutation(k)[:length]), k, seq_id=f"b{i}")
        for i in range(n)
    ]


def test_trained_agent_matches_oracle_ordering():
    k = 8
    dec = SeparableDecoder(np.arange(1.0, k + 1.0))
    train = _benchmark(100, 80, k)
    held_out = _benchmark(200, 20, k)
    cfg = OrderingAgentConfig(episodes=1200, seed=0)
    policy, _ = train_ordering_agent(train, dec, cfg)

    taus = []
    for seq in held_out:
        oracle = greedy_order_oracle(seq, dec)
        agent = rollout(policy, seq, dec, greedy=True).picks
        r_oracle = np.empty(len(oracle))
        r_agent = np.empty(len(agent))
        r_oracle[oracle] = np.arange(len(oracle))
        r_agent[agent] = np.arange(len(agent))
        taus.append(kendalltau(r_oracle, r_agent).statistic)
    assert float(np.mean(taus)) >= 0.8


def test_dynamic_scores_rank_map():
    # force a policy whose greedy rollout picks positions left to right
    k = 4
    dec = SeparableDecoder(np.array([4.0, 3.0, 2.0, 1.0]))
    seq = TokenSequence((0, 1, 2), k)
    policy = OrderingPolicy(num_categories=k)
    policy.theta_bucket[0] = 5.0  # always take the largest available drop
    f = dynamic_scores(seq, policy, dec).scores
    np.testing.assert_allclose(f, [0.5, 1.0, 1.5], rtol=1e-12)


def test_dynamic_scores_single_position():
    dec = _distinct_decoder()
    policy = OrderingPolicy(num_categories=6)
    f = dynamic_scores(TokenSequence((2,), 6), policy, dec).scores
    np.testing.assert_allclose(f, [1.0])


def test_dynamic_scores_smallest_on_largest_contribution():
    k = 8
    dec = SeparableDecoder(np.arange(1.0, k + 1.0))
    train = _benchmark(300, 60, k)
    cfg = OrderingAgentConfig(episodes=1000, seed=2)
    policy, _ = train_ordering_agent(train, dec, cfg)
    seq = _benchmark(400, 1, k)[0]
    f = dynamic_scores(seq, policy, dec).scores
    body = seq.body()
    assert int(np.argmin(f)) == int(np.argmax(dec.magnitudes[body]))
    assert f.sum() == pytest.approx(len(f), abs=1e-12)


def test_policy_roundtrip(tmp_path):
    policy = OrderingPolicy(num_categories=5)
    policy.theta_bucket[:3] = [0.5, -0.2, 0.1]
    policy.theta_category[2] = 1.5
    cfg = OrderingAgentConfig(episodes=10, seed=3)
    p = tmp_path / "agent.json"
    save_policy(policy, cfg, p)
    loaded, loaded_cfg = load_policy(p)
    np.testing.assert_array_equal(loaded.theta_bucket, policy.theta_bucket)
    np.testing.assert_array_equal(loaded.theta_category, policy.theta_category)
    assert loaded_cfg == cfg
