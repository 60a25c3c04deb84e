import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priodiff.priority import PriorityScores
from priodiff.schedule import (
    ScheduleTable,
    apply_priority,
    compose_from_steps,
    export_priority_bands_csv,
    export_schedule_csv,
    linear_base_schedule,
    per_step_from_cumulative,
)


def test_linear_base_defaults():
    table = linear_base_schedule(10, 2)
    assert table.num_positions == 1
    assert table.num_steps == 10
    assert table.alpha_bar[0, 10] == pytest.approx(0.0, abs=1e-15)
    assert table.gamma_bar[0, 10] == pytest.approx(0.9)
    assert table.is_fully_corrupting
    mass = table.alpha_bar + 2 * table.beta_bar + table.gamma_bar
    assert np.max(np.abs(mass - 1.0)) < 1e-12


def test_linear_base_single_step():
    table = linear_base_schedule(1, 4)
    assert table.num_steps == 1
    assert table.alpha_bar[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert table.gamma_bar[0, 1] == pytest.approx(0.9)


def test_linear_base_infeasible_targets():
    with pytest.raises(ValueError, match="infeasible"):
        linear_base_schedule(5, 2, gamma_bar_final=0.5, kbeta_bar_final=0.1)
    with pytest.raises(ValueError, match="infeasible"):
        linear_base_schedule(5, 2, gamma_bar_final=1.2, kbeta_bar_final=-0.2)


def test_linear_base_composition_roundtrip():
    table = linear_base_schedule(10, 3)
    ab, bb, gb = compose_from_steps(table.alpha, table.gamma, 3)
    assert np.max(np.abs(ab - table.alpha_bar)) < 1e-9
    assert np.max(np.abs(bb - table.beta_bar)) < 1e-9
    assert np.max(np.abs(gb - table.gamma_bar)) < 1e-9


def test_per_step_constant_retention_is_identity():
    ab = np.ones(6)
    gb = np.zeros(6)
    alpha, gamma = per_step_from_cumulative(ab, gb)
    np.testing.assert_allclose(alpha[0, 1:], 1.0)
    np.testing.assert_allclose(gamma[0, 1:], 0.0)


def test_per_step_terminal_zero_is_legal():
    ab = np.array([1.0, 0.6, 0.0])
    gb = np.array([0.0, 0.3, 0.9])
    alpha, gamma = per_step_from_cumulative(ab, gb)
    assert alpha[0, 2] == pytest.approx(0.0)
    assert alpha[0, 1] == pytest.approx(0.6)


def test_per_step_premature_absorption_errors():
    ab = np.array([1.0, 0.0, 0.0])
    gb = np.array([0.0, 0.5, 0.9])
    with pytest.raises(ValueError, match="premature absorption"):
        per_step_from_cumulative(ab, gb)


def test_schedule_table_validates_mass():
    ab = np.array([[1.0, 0.5]])
    bb = np.array([[0.0, 0.05]])
    gb = np.array([[0.0, 0.3]])  # 0.5 + 2*0.05 + 0.3 = 0.9 != 1
    with pytest.raises(ValueError, match="mass identity"):
        ScheduleTable(ab, bb, gb, 2)


def test_schedule_table_validates_monotone():
    ab = np.array([[1.0, 0.4, 0.5]])
    gb = np.array([[0.0, 0.3, 0.2]])
    bb = (1.0 - ab - gb) / 2
    with pytest.raises(ValueError, match="non-"):
        ScheduleTable(ab, bb, gb, 2)


def _scores(values):
    return PriorityScores(np.asarray(values, dtype=np.float64))


def test_apply_priority_unit_scores_match_base_at_midpoint():
    base = linear_base_schedule(10, 4)
    table = apply_priority(base, _scores([1.0, 1.0, 1.0]))
    # sin(t*pi/T) = 1 at t = T/2, so unit scores reproduce the base there
    for p in range(3):
        assert table.gamma_bar[p, 5] == pytest.approx(base.gamma_bar[0, 5], abs=1e-12)
        assert table.beta_bar[p, 5] == pytest.approx(base.beta_bar[0, 5], abs=1e-12)


def test_apply_priority_direct_substitution():
    # base with gamma_bar_5 = 0.5 and score 0.8: 0.5 * sin(pi/2) * 0.8 = 0.4
    base = linear_base_schedule(10, 2, gamma_bar_final=1.0, kbeta_bar_final=0.0)
    table = apply_priority(base, _scores([0.8, 1.2]))
    assert base.gamma_bar[0, 5] == pytest.approx(0.5)
    assert table.gamma_bar[0, 5] == pytest.approx(0.4, abs=1e-12)


def test_apply_priority_pins_final_step():
    base = linear_base_schedule(8, 3)
    table = apply_priority(base, _scores([0.5, 1.5]))
    np.testing.assert_allclose(table.alpha_bar[:, 8], 0.0, atol=1e-15)
    np.testing.assert_allclose(table.gamma_bar[:, 8], 0.9, atol=1e-12)
    assert table.is_fully_corrupting


def test_apply_priority_rejects_multirow_base():
    base = linear_base_schedule(6, 3)
    per_pos = apply_priority(base, _scores([0.5, 1.5]))
    with pytest.raises(ValueError, match="uniform"):
        apply_priority(per_pos, _scores([1.0]))


def test_apply_priority_extreme_scores_still_valid():
    # large scores trigger the feasibility clamp and the monotone repair
    base = linear_base_schedule(12, 4)
    n = 6
    raw = np.array([8.0, 0.1, 0.3, 0.2, 0.2, 0.2])
    f = _scores(raw * n / raw.sum())
    table = apply_priority(base, f)
    mass = table.alpha_bar + 4 * table.beta_bar + table.gamma_bar
    assert np.max(np.abs(mass - 1.0)) < 1e-9
    assert np.all(np.diff(table.gamma_bar, axis=1) >= -1e-12)
    assert np.all(np.diff(table.alpha_bar, axis=1) <= 1e-12)
    # interior retention never hits zero thanks to the absorption floor
    assert np.all(table.alpha_bar[:, 1:-1] > 0.0)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_apply_priority_ordering_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    raw = rng.lognormal(sigma=0.8, size=n)
    f = raw * n / raw.sum()
    try:
        scores = PriorityScores(f)
    except ValueError:
        return
    base = linear_base_schedule(10, 3)
    table = apply_priority(base, scores)
    order = np.argsort(f, kind="stable")
    for t in range(1, 10):
        col = table.gamma_bar[order, t]
        assert np.all(np.diff(col) >= -1e-12)


def test_apply_priority_mean_over_positions_matches_base_midpoint():
    base = linear_base_schedule(10, 4)
    rng = np.random.default_rng(5)
    raw = rng.uniform(0.6, 1.4, size=8)
    f = _scores(raw * 8 / raw.sum())
    table = apply_priority(base, f)
    mean_gamma = table.gamma_bar[:, 5].mean()
    assert mean_gamma == pytest.approx(base.gamma_bar[0, 5], abs=1e-9)


def test_low_score_positions_corrupt_later_in_expectation():
    # expected first-corruption time is the sum of cumulative retention
    base = linear_base_schedule(10, 4)
    table = apply_priority(base, _scores([0.5, 1.5]))
    expected = table.alpha_bar[:, :-1].sum(axis=1)
    assert expected[0] > expected[1] + 0.5


def test_schedule_csv_roundtrip(tmp_path):
    base = linear_base_schedule(6, 3)
    table = apply_priority(base, _scores([0.8, 1.2]))
    p = tmp_path / "schedule.csv"
    export_schedule_csv(table, p)
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 6
    r = next(r for r in rows if r["position"] == "1" and r["t"] == "3")
    assert float(r["gamma_bar"]) == pytest.approx(table.gamma_bar[1, 3], rel=1e-15)
    assert float(r["alpha"]) == pytest.approx(table.alpha[1, 3], rel=1e-15)


def test_priority_bands_csv(tmp_path):
    base = linear_base_schedule(8, 3)
    rng = np.random.default_rng(9)
    raw = rng.uniform(0.5, 1.5, size=12)
    f = _scores(raw * 12 / raw.sum())
    table = apply_priority(base, f)
    p = tmp_path / "bands.csv"
    export_priority_bands_csv(table, f, p, num_bands=3)
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert {r["band"] for r in rows} == {"0", "1", "2"}
    # lower-score bands accumulate mask mass more slowly mid-schedule
    by_band = {b: [float(r["mean_gamma_bar"]) for r in rows if r["band"] == b]
               for b in ("0", "2")}
    assert by_band["0"][3] < by_band["2"][3]
