from __future__ import annotations

import numpy as np
import pytest

from bandit_minimax.losses import (
    LossCurve,
    default_d_grid,
    eval_limit_losses,
    eval_with_initial_stage,
    refine_peaks,
    stable_grid,
    sweep_losses,
)
from bandit_minimax.model import REFERENCE_PRIOR, ConfigError, ModelParams
from bandit_minimax.pde import GridSpec, ThresholdStrategy, ci_grid, extract_thresholds, solve_limit_risk

GRID = ci_grid()


@pytest.fixture(scope="module")
def field():
    return solve_limit_risk(REFERENCE_PRIOR, ModelParams.for_prior(REFERENCE_PRIOR), GRID)


@pytest.fixture(scope="module")
def strategy(field):
    return extract_thresholds(field)


def test_prior_mixture_of_losses_is_the_risk(field, strategy):
    l1 = eval_limit_losses(strategy, 1.65, 1.0, 1.0, GRID)
    l2 = eval_limit_losses(strategy, -2.52, 1.0, 1.0, GRID)
    assert 0.38 * l1 + 0.62 * l2 == pytest.approx(field.origin_value(), abs=1e-12)


def test_losses_at_the_atoms(strategy):
    for d in (1.65, -2.52):
        assert eval_limit_losses(strategy, d, 1.0, 1.0, GRID) == pytest.approx(0.37, abs=0.04)


def test_zero_gap_has_zero_loss(strategy):
    assert eval_limit_losses(strategy, 0.0, 1.0, 1.0, GRID) == pytest.approx(0.0, abs=1e-12)


def test_always_unknown_arm_loses_nothing_when_it_is_better():
    s = ThresholdStrategy(GRID.t[:-1], np.full(GRID.nt, GRID.x_min))
    assert eval_limit_losses(s, 2.0, 1.0, 1.0, GRID) == pytest.approx(0.0, abs=1e-12)


def test_mismatched_time_coverage(strategy):
    partial = ThresholdStrategy(strategy.t_grid[100:], strategy.thresholds[100:])
    with pytest.raises(ConfigError):
        eval_limit_losses(partial, 1.0, 1.0, 1.0, GRID)


def test_nonpositive_true_variance(strategy):
    with pytest.raises(ConfigError):
        eval_limit_losses(strategy, 1.0, 1.0, 0.0, GRID)


def test_initial_stage_positive_d_changes_little(strategy):
    unforced = eval_limit_losses(strategy, 1.65, 1.0, 1.0, GRID)
    for arm in (1, 2):
        with_, _ = eval_with_initial_stage(strategy, 1.65, 1.0, GRID, 0.02, forced_arm=arm)
        assert abs(with_ - unforced) <= 0.01


def test_initial_stage_large_negative_d_exceeds_risk(strategy):
    with_, without = eval_with_initial_stage(strategy, -20.0, 1.0, GRID, 0.02)
    assert with_ > 0.37
    assert with_ - without == pytest.approx(20 * 0.02)


def test_initial_stage_zero_gap(strategy):
    assert eval_with_initial_stage(strategy, 0.0, 1.0, GRID, 0.02) == pytest.approx((0.0, 0.0), abs=1e-12)


@pytest.mark.parametrize("eps0, arm", [(0.0, 2), (1.0, 2), (0.5, 3)])
def test_initial_stage_argument_checks(strategy, eps0, arm):
    with pytest.raises(ConfigError):
        eval_with_initial_stage(strategy, 1.0, 1.0, GRID, eps0, forced_arm=arm)


def test_sweep_shape_and_peaks(strategy):
    curve = sweep_losses(strategy, default_d_grid(), 1.0, 1.0, GRID)
    assert curve.d.size == 81
    assert np.all(curve.loss >= -1e-12)
    peaks = curve.interior_maxima()
    assert len(peaks) == 2
    refined = refine_peaks(curve, strategy, GRID)
    locs = sorted(d for d, _ in refined)
    assert locs[0] == pytest.approx(-2.52, abs=0.15)
    assert locs[1] == pytest.approx(1.65, abs=0.1)
    for d, v in refined:
        assert v >= curve.loss[np.argmin(np.abs(curve.d - d))] - 1e-9


def test_sweep_is_thread_count_independent(strategy):
    d = np.linspace(-3, 3, 7)
    a = sweep_losses(strategy, d, 1.0, 1.0, GRID, threads=1)
    b = sweep_losses(strategy, d, 1.0, 1.0, GRID, threads=3)
    assert np.array_equal(a.loss, b.loss)


def test_empty_d_grid(strategy):
    with pytest.raises(ConfigError):
        sweep_losses(strategy, [], 1.0, 1.0, GRID)


def test_stable_grid_widens_dx_only_when_needed():
    grid = GridSpec.symmetric(6, 0.0143, 1 / 5000)
    assert stable_grid(grid, 1.0) is grid
    wide = stable_grid(grid, 1.05)
    wide.check_stable(1.05)
    assert wide.dt == grid.dt and wide.dx == 0.015


def test_curve_csv_round_trip(tmp_path):
    curve = LossCurve(np.array([-1.0, 0.0, 1.0]), np.array([0.1, 0.0, 1 / 3]))
    curve.extra["other"] = np.array([1.0, 2.0, 3.0])
    path = tmp_path / "losses.csv"
    curve.to_csv(path)
    assert path.read_text().splitlines()[0] == "d,loss,other"
    back = LossCurve.from_csv(path)
    assert np.array_equal(back.loss, curve.loss)
