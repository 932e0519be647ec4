"""Search over two-point priors for the one with the largest Bayesian risk.

The maximiser is the worst-case prior; its Bayes strategy is minimax and its
risk is the minimax risk.  The search is deterministic: a coarse lattice over
(d1, d2, rho) followed by coordinate-wise golden-section sweeps, then a single
re-score of the winner on a finer grid.
"""
from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._golden import golden_section_max
from ._threads import pmap
from .model import ConfigError, ModelParams, PriorSpec
from .pde import GridSpec, ci_grid, production_grid, risk_at_origin


@dataclass(frozen=True)
class SearchBox:
    d1: tuple[float, float] = (0.5, 3.0)
    d2: tuple[float, float] = (1.0, 4.0)
    rho: tuple[float, float] = (0.1, 0.9)
    lattice: int = 5
    sweeps: int = 4
    tol: float = 1e-3

    def __post_init__(self):
        for name in ("d1", "d2"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"search range for {name} must be positive, got {(lo, hi)}")
        lo, hi = self.rho
        if not 0 < lo <= hi <= 1:
            raise ConfigError(f"search range for rho must lie in (0, 1], got {(lo, hi)}")
        if self.lattice < 1:
            raise ConfigError("lattice needs at least one point per axis")

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, self.lattice) for lo, hi in (self.d1, self.d2, self.rho)]

    def bounds(self) -> list[tuple[float, float]]:
        return [self.d1, self.d2, self.rho]


@dataclass
class WorstPriorResult:
    d1: float
    d2: float
    rho: float
    risk: float
    search_risk: float  # value on the search grid
    lattice_best: tuple[float, float, float, float]
    at_boundary: bool
    trace: list[tuple[float, float, float, float]] = field(default_factory=list)

    @property
    def prior(self) -> PriorSpec:
        return PriorSpec.two_point(self.d1, self.d2, self.rho)

    def to_json(self, path: str | Path, include_trace: bool = False) -> None:
        data = asdict(self)
        if not include_trace:
            data.pop("trace")
        Path(path).write_text(json.dumps(data, indent=2))


def two_point_risk(d1: float, d2: float, rho: float, D: float, grid: GridSpec) -> float:
    """r(0, 0) for mass rho at d1 and 1 - rho at -d2; one-sided priors give 0."""
    prior = PriorSpec.two_point(d1, d2, rho)
    params = ModelParams.for_prior(prior, D)
    return risk_at_origin(prior, params, grid, allow_degenerate=True)


def find_worst_prior(
    params: ModelParams = ModelParams(),
    grid: GridSpec | None = None,
    search: SearchBox = SearchBox(),
    fine_grid: GridSpec | None = None,
    threads: int | None = None,
) -> WorstPriorResult:
    """Maximise r(0, 0) over two-point priors inside ``search``.

    ``grid`` drives the search (default: the coarse test grid); the winner is
    re-scored on ``fine_grid`` (default: the production grid).  Pass
    ``fine_grid=grid`` to skip the re-score.
    """
    grid = grid or ci_grid()
    fine_grid = fine_grid or production_grid()
    D = params.D
    trace: list[tuple[float, float, float, float]] = []

    def score(v) -> float:
        r = two_point_risk(v[0], v[1], v[2], D, grid)
        trace.append((float(v[0]), float(v[1]), float(v[2]), r))
        return r

    lattice = list(itertools.product(*search.axes()))
    values = pmap(lambda v: two_point_risk(v[0], v[1], v[2], D, grid), lattice, threads)
    trace.extend((float(a), float(b), float(c), r) for (a, b, c), r in zip(lattice, values))
    k = int(np.argmax(values))
    best = list(lattice[k])
    best_val = values[k]
    lattice_best = (*map(float, best), float(best_val))

    bounds = search.bounds()
    steps = [(hi - lo) / max(search.lattice - 1, 1) for lo, hi in bounds]
    for _ in range(search.sweeps):
        before = best_val
        for j in range(3):
            lo = max(bounds[j][0], best[j] - steps[j])
            hi = min(bounds[j][1], best[j] + steps[j])
            if hi - lo < 1e-12:
                continue

            def along(v, j=j):
                cand = list(best)
                cand[j] = v
                return score(cand)

            arg, val = golden_section_max(along, lo, hi, tol=search.tol)
            if val > best_val:
                best[j], best_val = arg, val
        steps = [s / 2 for s in steps]
        if best_val - before < 1e-7:
            break

    at_boundary = any(
        (abs(best[j] - bounds[j][0]) < search.tol or abs(best[j] - bounds[j][1]) < search.tol)
        and bounds[j][0] < bounds[j][1]
        for j in range(3)
    )
    if at_boundary:
        warnings.warn("worst-prior search stopped on the search-box boundary; widen the box",
                      RuntimeWarning, stacklevel=2)
    fine = best_val if fine_grid == grid else two_point_risk(*best, D, fine_grid)
    return WorstPriorResult(
        float(best[0]), float(best[1]), float(best[2]), float(fine), float(best_val),
        lattice_best, at_boundary, trace,
    )
