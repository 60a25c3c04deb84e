"""Acceptance gate: every criterion at its stated tolerance.

Runs the shipped verification suite once (the same thing
``priodiff verify --preset desk`` executes) and asserts each criterion's
check passed within its runtime budget, printing one line per criterion.
"""

import pytest

from priodiff.verify import run_desk_suite

SUITE_SECONDS_BUDGET = 300.0


@pytest.fixture(scope="module")
def suite():
    results = run_desk_suite(seed=0)
    return {r.name: r for r in results}


def _report(num, result, extra=""):
    mark = "PASS" if result.passed else "FAIL"
    print(f"[{mark}] criterion {num}: {result.name} ({result.seconds:.1f}s) "
          f"{result.detail}{extra}")
    assert result.passed, result.detail


def test_criterion_1_marginal_oracle(suite):
    r = suite["marginal closed form vs matrix product"]
    assert r.seconds < 10.0, f"marginal oracle took {r.seconds:.1f}s (budget 10s)"
    _report(1, r)


def test_criterion_2_posterior_oracle(suite):
    r = suite["posterior vs trajectory enumeration"]
    assert r.seconds < 30.0, f"posterior oracle took {r.seconds:.1f}s (budget 30s)"
    _report(2, r)


def test_criterion_3_vlb_oracle(suite):
    _report(3, suite["variational bound vs trajectory enumeration"])


def test_criterion_4_schedule_validity(suite):
    _report(4, suite["priority schedule validity"])


def test_criterion_5_priority_first_corruption(suite):
    _report(5, suite["low scores corrupt later (Monte Carlo)"])


def test_criterion_6_quantizer(suite):
    for name in ("quantizer argmin vs exhaustive search",
                 "analytic gradients vs finite differences",
                 "orthogonality penalty iff orthonormal"):
        _report(6, suite[name])


def test_criterion_7_codebook_usage(suite):
    _report(7, suite["orthogonality penalty raises codebook usage (5 seeds)"])


def test_criterion_8_static_scores(suite):
    _report(8, suite["static scores worked example and mean-one"])


def test_criterion_9_dynamic_assessor(suite):
    _report(9, suite["ordering agent vs greedy oracle (5 seeds)"])


def test_criterion_10_end_to_end(suite):
    _report(10, suite["end-to-end recovery and priority timing"])
    total = sum(r.seconds for r in suite.values())
    print(f"[INFO] full desk suite: {total:.1f}s (budget {SUITE_SECONDS_BUDGET:.0f}s)")
    assert total < SUITE_SECONDS_BUDGET
