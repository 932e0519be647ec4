from __future__ import annotations

import json
import math

import pytest

from bandit_minimax.model import ModelParams
from bandit_minimax.pde import GridSpec
from bandit_minimax.worstprior import SearchBox, find_worst_prior, two_point_risk

# cheap grid: dt/dx^2 = 0.8
TOY = GridSpec.symmetric(6, 0.05, 1 / 500)


@pytest.fixture(scope="module")
def toy_result():
    return find_worst_prior(ModelParams(), TOY, SearchBox(), fine_grid=TOY)


def test_single_positive_atom_has_zero_risk():
    assert two_point_risk(1.5, 2.0, 1.0, 1.0, TOY) == 0.0
    box = SearchBox(rho=(1.0, 1.0), lattice=3, sweeps=1)
    with pytest.warns(RuntimeWarning):
        res = find_worst_prior(ModelParams(), TOY, box, fine_grid=TOY)
    assert res.risk == 0.0


def test_refined_dominates_lattice(toy_result):
    # the nearest lattice rho sits 0.1 from the optimum, which costs about 0.012
    gap = toy_result.search_risk - toy_result.lattice_best[3]
    assert 0 <= gap <= 0.015


def test_result_dominates_trace(toy_result):
    assert all(toy_result.search_risk >= r for *_, r in toy_result.trace)
    assert len(toy_result.trace) >= 125


def test_result_in_range(toy_result):
    r = toy_result
    assert 0 < r.risk <= 0.752
    assert r.d1 == pytest.approx(1.65, abs=0.15)
    assert r.d2 == pytest.approx(2.52, abs=0.2)
    assert r.rho == pytest.approx(0.38, abs=0.05)
    assert not r.at_boundary


def test_boundary_flag_for_small_box():
    box = SearchBox(d1=(0.5, 1.0), d2=(1.0, 1.5), rho=(0.3, 0.5), lattice=3, sweeps=1)
    with pytest.warns(RuntimeWarning, match="boundary"):
        res = find_worst_prior(ModelParams(), TOY, box, fine_grid=TOY)
    assert res.at_boundary


def test_search_scales_with_variance(toy_result):
    k = 4.0
    s = math.sqrt(k)
    grid = GridSpec.symmetric(6 * s, 0.05 * s, 1 / 500)
    box = SearchBox(d1=(0.5 * s, 3 * s), d2=(1 * s, 4 * s), tol=1e-3 * s)
    res = find_worst_prior(ModelParams(D=k), grid, box, fine_grid=grid)
    assert res.search_risk == pytest.approx(s * toy_result.search_risk, rel=1e-3)
    assert res.d1 == pytest.approx(s * toy_result.d1, rel=0.02)


def test_json_output(tmp_path, toy_result):
    path = tmp_path / "worst.json"
    toy_result.to_json(path)
    data = json.loads(path.read_text())
    assert set(data) >= {"d1", "d2", "rho", "risk"} and "trace" not in data
    toy_result.to_json(path, include_trace=True)
    assert len(json.loads(path.read_text())["trace"]) == len(toy_result.trace)


@pytest.mark.parametrize("kw", [dict(d1=(-1.0, 2.0)), dict(rho=(0.0, 0.5)), dict(rho=(0.5, 1.2)), dict(lattice=0)])
def test_search_box_validation(kw):
    from bandit_minimax.model import ConfigError

    with pytest.raises(ConfigError):
        SearchBox(**kw)
