"""Acceptance criteria, each at its stated tolerance.

One test per criterion; the conftest prints a PASS/FAIL line for each.
Expensive artefacts (the worst-prior search and its fine-grid field) are
computed once per module.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from bandit_minimax.batchdp import (
    BatchSchedule,
    check_single_flip,
    solve_batch_risk,
    verify_absorbing,
    verify_batch_equivalence,
    verify_scaling,
)
from bandit_minimax.bernoulli import BernoulliModel, brute_force_bernoulli, mapped_model, solve_bernoulli_dp
from bandit_minimax.invariants import check_limit_field, check_step_field
from bandit_minimax.losses import eval_limit_losses, refine_peaks, stable_grid, sweep_losses, default_d_grid
from bandit_minimax.mcsim import SimConfig, simulate
from bandit_minimax.model import REFERENCE_PRIOR, ModelParams, PriorSpec
from bandit_minimax.pde import ci_grid, extract_thresholds, production_grid, solve_limit_risk
from bandit_minimax.worstprior import SearchBox, find_worst_prior

criterion = pytest.mark.criterion


def detail(request, text: str) -> None:
    request.node.user_properties.append(("detail", text))


@pytest.fixture(scope="module")
def worst():
    return find_worst_prior(ModelParams(D=1.0), ci_grid(), SearchBox(), production_grid())


@pytest.fixture(scope="module")
def worst_params(worst):
    return ModelParams.for_prior(worst.prior, 1.0)


@pytest.fixture(scope="module")
def fine_field(worst, worst_params):
    return solve_limit_risk(worst.prior, worst_params, production_grid())


@pytest.fixture(scope="module")
def minimax(fine_field):
    return extract_thresholds(fine_field)


@pytest.fixture(scope="module")
def base_curve(minimax):
    return sweep_losses(minimax, default_d_grid(), 1.0, 1.0, production_grid())


def peak(curve, strategy, grid) -> float:
    refined = [v for _, v in refine_peaks(curve, strategy, grid)]
    return max([float(curve.loss.max()), *refined])


@criterion(1, "worst-prior search")
def test_c01_worst_prior(request, worst):
    detail(request, f"d1={worst.d1:.4f} d2={worst.d2:.4f} rho={worst.rho:.4f} risk={worst.risk:.5f}")
    assert 1.55 <= worst.d1 <= 1.75
    assert 2.37 <= worst.d2 <= 2.67
    assert 0.34 <= worst.rho <= 0.42
    assert 0.35 <= worst.risk <= 0.39
    assert not worst.at_boundary


@criterion(2, "loss curve maxima and equalizer")
def test_c02_loss_curve(request, worst, minimax, base_curve):
    grid = production_grid()
    peaks = sorted(refine_peaks(base_curve, minimax, grid))
    sweep_max = float(base_curve.loss.max())
    detail(request, "peaks " + ", ".join(f"({d:.3f}, {v:.4f})" for d, v in peaks)
           + f"; sweep max {sweep_max:.4f} vs risk {worst.risk:.4f}")
    assert len(peaks) == 2
    (dn, vn), (dp, vp) = peaks
    assert abs(dp - 1.65) <= 0.1 and abs(vp - 0.37) <= 0.02
    assert abs(dn + 2.52) <= 0.15 and abs(vn - 0.37) <= 0.02
    assert sweep_max <= worst.risk + 0.02


@criterion(3, "batch DP with 50 batches against the limit")
def test_c03_batch_vs_limit(request, worst, worst_params, fine_field):
    ratios = []
    for prior, field in ((worst.prior, fine_field), (REFERENCE_PRIOR, None)):
        params = ModelParams.for_prior(prior)
        limit = field.origin_value() if field is not None else solve_limit_risk(prior, params, production_grid()).origin_value()
        r50 = solve_batch_risk(prior, params, BatchSchedule.uniform(50)).origin_value()
        ratios.append(r50 / limit)
    detail(request, "ratios " + ", ".join(f"{r:.4f}" for r in ratios))
    assert all(1.0 <= r <= 1.05 for r in ratios)


@criterion(4, "scaling identity and batch-vs-single equality")
def test_c04_scaling(request):
    params = ModelParams.for_prior(REFERENCE_PRIOR)
    scaling = verify_scaling(REFERENCE_PRIOR, params, BatchSchedule.uniform(10), 4.0)
    equiv = verify_batch_equivalence(REFERENCE_PRIOR, 1.0, 10, 5)
    detail(request, f"ratio {scaling.ratio:.12f}; batch {equiv.batch_scaled:.12f} single {equiv.single_scaled:.12f}")
    assert abs(scaling.ratio - 2.0) <= 1e-6
    assert equiv.error <= 1e-6


@criterion(5, "absorbing reduction against the full-history recursion")
def test_c05_absorbing(request):
    rng = np.random.default_rng(20240501)
    cases = [(REFERENCE_PRIOR, 4), (PriorSpec.two_point(1.0, 1.0, 0.5), 4)]
    for _ in range(24):
        prior = PriorSpec.two_point(rng.uniform(0.3, 3.0), rng.uniform(0.3, 3.0), rng.uniform(0.05, 0.95))
        cases.append((prior, int(rng.integers(1, 5))))
    worst_err, violations = 0.0, 0
    for prior, K in cases:
        rep = verify_absorbing(prior, ModelParams.for_prior(prior), K)
        worst_err = max(worst_err, rep.error)
        violations += rep.violations
    detail(request, f"{len(cases)} priors, max |full - reduced| = {worst_err:.2e}, violations {violations}")
    assert worst_err <= 1e-9
    assert violations == 0


@criterion(6, "Bernoulli DP against brute force")
def test_c06_bernoulli_brute_force(request):
    rng = np.random.default_rng(6)
    worst_err = 0.0
    n = 120
    for _ in range(n):
        N = int(rng.integers(1, 7))
        n0 = int(rng.integers(1, N + 1))
        k = int(rng.integers(1, 4))
        q = rng.dirichlet(np.ones(k))
        q[-1] = 1.0 - q[:-1].sum()
        model = BernoulliModel(float(rng.uniform(0.05, 0.95)), tuple(zip(rng.uniform(0, 1, k), q)), N, n0)
        worst_err = max(worst_err, abs(solve_bernoulli_dp(model) - brute_force_bernoulli(model)))
    detail(request, f"{n} instances, max |DP - brute force| = {worst_err:.2e}")
    assert worst_err <= 1e-12


@criterion(7, "Bernoulli scaled risk against the Gaussian batch DP")
def test_c07_cross_model(request):
    N, n0 = 2000, 40
    model = mapped_model(0.5, REFERENCE_PRIOR, N, n0)
    bern = model.scale(solve_bernoulli_dp(model))
    sched = BatchSchedule((Fraction(n0, N),) + (Fraction(1, N),) * (N - n0))
    gauss = solve_batch_risk(REFERENCE_PRIOR, ModelParams.for_prior(REFERENCE_PRIOR), sched, force_first=True).origin_value()
    detail(request, f"Bernoulli {bern:.5f} Gaussian {gauss:.5f} rel gap {abs(bern / gauss - 1):.4%}")
    assert abs(bern / gauss - 1) <= 0.05


@criterion(8, "Monte Carlo batch processing")
def test_c08_monte_carlo(request, worst, worst_params, minimax):
    uniform = BatchSchedule.parse("50x100")
    variable = BatchSchedule.parse("8x25,48x100")
    res = {}
    for name, sched in (("uniform", uniform), ("variable", variable)):
        strat = solve_batch_risk(worst.prior, worst_params, sched).thresholds()
        res[name] = simulate(SimConfig(5000, sched, 0.5, (1.65, -10.0), 10_000, 42), strat)
    limit = eval_limit_losses(minimax, 1.65, 1.0, 1.0, production_grid())
    m, se = res["uniform"].at(1.65)
    mu, su = res["uniform"].at(-10.0)
    mv, sv = res["variable"].at(-10.0)
    comb = math.hypot(su, sv)
    detail(request, f"d=1.65 MC {m:.4f}+-{se:.4f} vs limit {limit:.4f}; "
                    f"d=-10 uniform {mu:.4f} variable {mv:.4f} combined SE {comb:.4f}")
    assert abs(m - limit) <= 3 * se
    assert mv < mu - 3 * comb


@criterion(9, "variance robustness sweeps")
def test_c09_robustness(request, minimax, base_curve):
    grid = production_grid()
    dg = default_d_grid()
    base_peak = peak(base_curve, minimax, grid)
    parts = []
    ok = True
    for D in (0.95, 1.05):
        g = stable_grid(grid, D)
        ref = base_curve if g is grid else sweep_losses(minimax, dg, 1.0, 1.0, g)
        delta = float(np.max(np.abs(sweep_losses(minimax, dg, 1.0, D, g).loss - ref.loss)))
        parts.append(f"D={D} max|diff|={delta:.4f}")
        ok &= delta <= 0.05
    for D in (0.75, 0.5, 0.25):
        curve = sweep_losses(minimax, dg, 1.0, D, grid)
        p = peak(curve, minimax, grid)
        parts.append(f"D={D} peak={p:.4f}")
        ok &= p <= base_peak + 0.02
    detail(request, f"base peak {base_peak:.4f}; " + ", ".join(parts))
    assert ok


@criterion(10, "invariant suite on every solve of criteria 1 to 3")
def test_c10_invariants(request, worst, worst_params, fine_field):
    failures: list[str] = []
    checked = 0
    grid = ci_grid()
    for d1, d2, rho, _ in worst.trace:
        prior = PriorSpec.two_point(d1, d2, rho)
        params = ModelParams.for_prior(prior)
        rep = check_limit_field(solve_limit_risk(prior, params, grid, allow_degenerate=True), prior, params)
        checked += 1
        failures += [f"search {d1:.3f},{d2:.3f},{rho:.3f}: {n}" for n in rep.failed()]
    for prior in (worst.prior, REFERENCE_PRIOR):
        params = ModelParams.for_prior(prior)
        field = fine_field if prior is worst.prior else solve_limit_risk(prior, params, production_grid())
        rep = check_limit_field(field, prior, params)
        failures += [f"fine: {n}" for n in rep.failed()]
        batch = solve_batch_risk(prior, params, BatchSchedule.uniform(50))
        check_single_flip(batch)
        failures += [f"batch: {n}" for n in check_step_field(batch, prior, params).failed()]
        checked += 2
    detail(request, f"{checked} fields checked, {len(failures)} failures")
    assert not failures, failures[:5]
