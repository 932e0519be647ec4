from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandit_minimax.batchdp import BatchSchedule, solve_batch_risk
from bandit_minimax.bernoulli import (
    BernoulliModel,
    brute_force_bernoulli,
    continuation_risk,
    default_n0,
    enumerate_stopping_rules,
    log_binom_pmf,
    mapped_model,
    solve_bernoulli_dp,
)
from bandit_minimax.model import REFERENCE_PRIOR, ConfigError, ModelParams


def gaussian_reference(N: int, n0: int) -> float:
    """Gaussian batch recursion with the same forced prefix and one-item steps."""
    sched = BatchSchedule((Fraction(n0, N),) + (Fraction(1, N),) * (N - n0))
    return solve_batch_risk(REFERENCE_PRIOR, ModelParams.for_prior(REFERENCE_PRIOR), sched, force_first=True).origin_value()


def test_all_atoms_better_than_known_arm():
    m = BernoulliModel(0.5, ((0.6, 0.4), (0.8, 0.6)), 50, 5)
    assert solve_bernoulli_dp(m) == 0.0


def test_all_plays_forced():
    m = BernoulliModel(0.5, ((0.7, 0.5), (0.3, 0.5)), 4, 4)
    assert solve_bernoulli_dp(m) == pytest.approx(4 * 0.2 * 0.5, abs=1e-15)
    assert brute_force_bernoulli(m) == pytest.approx(0.4, abs=1e-15)


@pytest.mark.parametrize(
    "p, prior, N, n0",
    [
        (0.5, ((0.7, 0.5), (0.3, 0.5)), 3, 1),
        (0.5, ((0.6, 0.3), (0.45, 0.7)), 4, 2),
    ],
)
def test_dp_matches_brute_force_examples(p, prior, N, n0):
    m = BernoulliModel(p, prior, N, n0)
    assert abs(solve_bernoulli_dp(m) - brute_force_bernoulli(m)) <= 1e-12


@st.composite
def small_models(draw):
    N = draw(st.integers(1, 6))
    n0 = draw(st.integers(1, N))
    p = draw(st.floats(0.05, 0.95))
    k = draw(st.integers(1, 3))
    p2 = [draw(st.floats(0.0, 1.0)) for _ in range(k)]
    w = np.array([draw(st.floats(0.05, 1.0)) for _ in range(k)])
    q = w / w.sum()
    q[-1] = 1.0 - q[:-1].sum()
    return BernoulliModel(p, tuple(zip(p2, q)), N, n0)


@settings(max_examples=150, deadline=None)
@given(small_models())
def test_dp_matches_brute_force_random(model):
    assert abs(solve_bernoulli_dp(model) - brute_force_bernoulli(model)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(small_models().filter(lambda m: m.N <= 4))
def test_stopping_rule_enumeration_matches_tree(model):
    assert abs(enumerate_stopping_rules(model) - brute_force_bernoulli(model)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(small_models())
def test_continuation_non_increasing_in_n0(model):
    vals = [continuation_risk(BernoulliModel(model.p, model.prior, model.N, n0)) for n0 in range(1, model.N + 1)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_oracle_size_limits():
    m = BernoulliModel(0.5, ((0.7, 0.5), (0.3, 0.5)), 7, 1)
    with pytest.raises(ConfigError):
        brute_force_bernoulli(m)
    with pytest.raises(ConfigError):
        enumerate_stopping_rules(BernoulliModel(0.5, ((0.7, 0.5), (0.3, 0.5)), 5, 1))
    with pytest.raises(ConfigError):
        solve_bernoulli_dp(BernoulliModel(0.5, ((0.7, 0.5), (0.3, 0.5)), 6000, 10))


@pytest.mark.parametrize(
    "args",
    [
        (0.0, ((0.5, 1.0),), 10, 1),
        (0.5, ((1.2, 1.0),), 10, 1),
        (0.5, ((0.4, 0.5), (0.6, 0.4)), 10, 1),
        (0.5, ((0.4, 1.0),), 10, 0),
        (0.5, ((0.4, 1.0),), 10, 11),
        (0.5, (), 10, 1),
    ],
)
def test_model_validation(args):
    with pytest.raises(ConfigError):
        BernoulliModel(*args)


def test_log_binomial_against_direct():
    from math import comb, log

    for n, p2 in ((0, 0.3), (5, 0.3), (12, 0.9)):
        X = np.arange(n + 1)
        direct = [log(comb(n, x)) + x * log(p2) + (n - x) * log(1 - p2) for x in X]
        assert log_binom_pmf(X, n, p2) == pytest.approx(direct, abs=1e-12)
    assert log_binom_pmf(np.array([0.0]), 0, 0.3)[0] == 0.0
    edge = log_binom_pmf(np.array([0.0, 2.0]), 2, 0.0)
    assert edge[0] == 0.0 and edge[1] == -np.inf


def test_default_n0_and_mapping():
    assert default_n0(2000) == 45
    m = mapped_model(0.5, REFERENCE_PRIOR, 2000, 40)
    assert m.prior[0][0] == pytest.approx(0.5 + 1.65 * 0.5 / np.sqrt(2000))
    assert m.D == 0.25


def test_convergence_toward_gaussian():
    gaps = []
    for N in (200, 500, 1000, 2000):
        n0 = 40 if N == 2000 else default_n0(N)
        m = mapped_model(0.5, REFERENCE_PRIOR, N, n0)
        gaps.append(abs(m.scale(solve_bernoulli_dp(m)) / gaussian_reference(N, n0) - 1))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.05
