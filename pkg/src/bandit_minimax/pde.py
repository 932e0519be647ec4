"""Explicit finite-difference solver for the limiting free-boundary problem.

The scaled Bayesian risk r(x, t) satisfies

    min((1 - t) g1 - r,  r_t + D/2 r_xx + g2) = 0,   r(x, 1) = 0,

with r -> 0 as |x| -> inf.  It is marched backward from t = 1 with

    r1 = (1 - t) g1(x, t)
    r2 = r(x, t + dt) + dt * (D/2 * lap r(x, t + dt) + g2(x, t))
    r  = min(r1, r2)

Action 1 (known arm, absorbing) is recorded where r1 <= r2.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ConfigError, IntegrityError, ModelParams, PriorSpec, g_arrays

_INT_TOL = 1e-9


class UnstableGridError(ConfigError):
    pass


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    dx: float
    dt: float

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0):
            raise ConfigError("dx and dt must be positive")
        if not (self.x_min < 0 < self.x_max):
            raise ConfigError(f"need x_min < 0 < x_max, got [{self.x_min}, {self.x_max}]")
        ratio = self.dt / self.dx**2
        if not ratio < 1:
            raise UnstableGridError(
                f"explicit scheme requires dt/dx^2 < 1, got dt/dx^2 = {ratio:.6g}"
            )
        nx = (self.x_max - self.x_min) / self.dx
        if abs(nx - round(nx)) > _INT_TOL * max(1.0, nx):
            raise ConfigError(f"(x_max - x_min)/dx must be an integer, got {nx!r}")
        nt = 1.0 / self.dt
        if abs(nt - round(nt)) > _INT_TOL * max(1.0, nt):
            raise ConfigError(f"1/dt must be an integer, got {nt!r}")

    @classmethod
    def symmetric(cls, half_width: float, dx: float, dt: float) -> "GridSpec":
        """[-L, L] with L the nearest multiple of dx to ``half_width``, so x=0 is a node."""
        n = max(1, round(half_width / dx))
        return cls(-n * dx, n * dx, dx, dt)

    @property
    def nx(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    @property
    def nt(self) -> int:
        return int(round(1.0 / self.dt))

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)

    def check_stable(self, D: float) -> None:
        ratio = D * self.dt / self.dx**2
        if not ratio < 1:
            raise UnstableGridError(
                f"explicit scheme requires D*dt/dx^2 < 1, got {ratio:.6g} (D={D})"
            )

    def with_dt(self, dt: float) -> "GridSpec":
        return GridSpec(self.x_min, self.x_max, self.dx, dt)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "dx": self.dx, "dt": self.dt}


def production_grid(half_width: float = 6.0) -> GridSpec:
    return GridSpec.symmetric(half_width, 0.0143, 1 / 5000)


def ci_grid(half_width: float = 6.0) -> GridSpec:
    return GridSpec.symmetric(half_width, 0.025, 1 / 2000)


@dataclass
class RiskField:
    grid: GridSpec
    values: np.ndarray  # (nt + 1, nx); last row is t = 1
    actions: np.ndarray  # (nt, nx) in {1, 2}
    gap: np.ndarray  # (nt, nx) r1 - r2

    def value(self, x: float = 0.0, row: int = 0) -> float:
        return float(np.interp(x, self.grid.x, self.values[row]))

    def origin_value(self) -> float:
        return self.value(0.0, 0)


def laplacian(r: np.ndarray, dx: float) -> np.ndarray:
    """Three-point second difference with zero values outside the grid."""
    lap = -2.0 * r
    lap[1:] += r[:-1]
    lap[:-1] += r[1:]
    return lap / dx**2


def _clamp_edges(r: np.ndarray, stop: np.ndarray) -> None:
    """Edge nodes on the continuation side are held at 0 (decay condition).

    An edge node on the stopping side keeps its closed-form value (1 - t) g1,
    which needs no neighbours; zeroing it would put an artificial kink into
    the field when the prior's atoms are small and g1 has not yet decayed.
    """
    if not stop[0]:
        r[0] = 0.0
    if not stop[-1]:
        r[-1] = 0.0


def _sweep(prior: PriorSpec, D: float, grid: GridSpec, store: bool):
    x = grid.x
    nt, dt = grid.nt, grid.dt
    r = np.zeros_like(x)
    if store:
        values = np.empty((nt + 1, x.size))
        values[nt] = 0.0
        actions = np.empty((nt, x.size), dtype=np.int8)
        gap = np.empty((nt, x.size))
    half_d = 0.5 * D
    for i in range(nt - 1, -1, -1):
        t = i * dt
        g1, g2 = g_arrays(prior, D, x, t)
        r1 = (1.0 - t) * g1
        r2 = r + dt * (half_d * laplacian(r, grid.dx) + g2)
        diff = r1 - r2
        r = np.where(diff <= 0, r1, r2)
        _clamp_edges(r, diff <= 0)
        if store:
            values[i] = r
            gap[i] = diff
            actions[i] = np.where(diff <= 0, 1, 2)
    if store:
        return values, actions, gap
    return r


def _check_inputs(prior: PriorSpec, params: ModelParams, grid: GridSpec, allow_degenerate: bool):
    if not allow_degenerate:
        prior.require_two_sided()
    grid.check_stable(params.D)


def solve_limit_risk(
    prior: PriorSpec,
    params: ModelParams,
    grid: GridSpec,
    allow_degenerate: bool = False,
) -> RiskField:
    """Backward sweep of the difference scheme; returns every time row.

    ``allow_degenerate`` admits one-sided priors (loss evaluation use).
    """
    _check_inputs(prior, params, grid, allow_degenerate)
    values, actions, gap = _sweep(prior, params.D, grid, store=True)
    return RiskField(grid, values, actions, gap)


def risk_at_origin(
    prior: PriorSpec, params: ModelParams, grid: GridSpec, allow_degenerate: bool = False
) -> float:
    """r(0, 0) without keeping the full field (for prior searches)."""
    _check_inputs(prior, params, grid, allow_degenerate)
    r = _sweep(prior, params.D, grid, store=False)
    return float(np.interp(0.0, grid.x, r))


@dataclass
class ThresholdStrategy:
    """Play the known arm for good once x <= T(t); otherwise keep the unknown arm.

    ``thresholds[i]`` applies on [t_grid[i], t_grid[i+1]).
    """

    t_grid: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        if self.t_grid.shape != self.thresholds.shape or self.t_grid.ndim != 1:
            raise ConfigError("t_grid and thresholds must be 1-D arrays of equal length")
        if self.t_grid.size == 0:
            raise ConfigError("empty threshold strategy")
        if np.any(np.diff(self.t_grid) <= 0):
            raise ConfigError("threshold t_grid must be strictly increasing")

    @property
    def step(self) -> float:
        if self.t_grid.size > 1:
            return float(self.t_grid[1] - self.t_grid[0])
        return 1.0 - float(self.t_grid[0])

    def covers(self, t0: float, t1: float) -> bool:
        return self.t_grid[0] <= t0 + _INT_TOL and t1 < self.t_grid[-1] + self.step + _INT_TOL

    def row_index(self, t):
        """Nearest-not-after row for time(s) t."""
        idx = np.searchsorted(self.t_grid, np.asarray(t) + _INT_TOL, side="right") - 1
        if np.any(idx < 0):
            raise ConfigError(f"threshold undefined before t={self.t_grid[0]}")
        return idx

    def threshold_at(self, t):
        return self.thresholds[self.row_index(t)]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "T"])
            for t, T in zip(self.t_grid, self.thresholds):
                w.writerow([repr(float(t)), repr(float(T))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ThresholdStrategy":
        try:
            with open(path, newline="") as fh:
                rows = list(csv.DictReader(fh))
            t = [float(r["t"]) for r in rows]
            T = [float(r["T"]) for r in rows]
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read threshold file {path}: {exc}") from exc
        return cls(np.array(t), np.array(T))


def threshold_from_gap_row(x: np.ndarray, gap: np.ndarray) -> float:
    """Flip point of one row of r1 - r2 (action 1 where gap <= 0).

    Rows that are all action 1 report x[-1]; all action 2 report x[0].
    """
    act1 = gap <= 0
    changes = np.flatnonzero(act1[1:] != act1[:-1])
    if changes.size == 0:
        return float(x[-1] if act1[0] else x[0])
    if changes.size > 1 or not act1[0]:
        raise IntegrityError(
            f"threshold row has {changes.size} action flips (expected a single 1->2 flip)"
        )
    i = changes[0]
    g0, g1 = gap[i], gap[i + 1]
    return float(x[i] + (x[i + 1] - x[i]) * (-g0) / (g1 - g0))


def extract_thresholds(field: RiskField) -> ThresholdStrategy:
    x = field.grid.x
    T = np.array([threshold_from_gap_row(x, row) for row in field.gap])
    return ThresholdStrategy(field.grid.t[:-1].copy(), T)


def write_risk_csv(field: RiskField, path: str | Path, every: int = 1) -> None:
    """Rows t,x,r,action; the terminal row carries action 0 (no decision)."""
    g = field.grid
    x = g.x
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "r", "action"])
        for i in range(0, g.nt + 1, every):
            t = repr(float(i * g.dt))
            acts = field.actions[i] if i < g.nt else np.zeros(x.size, dtype=np.int8)
            for xv, rv, a in zip(x, field.values[i], acts):
                w.writerow([t, repr(float(xv)), repr(float(rv)), int(a)])


def upper_bound_violation(field: RiskField, prior: PriorSpec, params: ModelParams) -> float:
    """max over nodes of r - (1 - t) min(g1, g2)."""
    g = field.grid
    worst = -math.inf
    for i, t in enumerate(g.t[:-1]):
        g1, g2 = g_arrays(prior, params.D, g.x, t)
        worst = max(worst, float(np.max(field.values[i] - (1 - t) * np.minimum(g1, g2))))
    return worst
