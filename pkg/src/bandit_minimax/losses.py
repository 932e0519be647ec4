"""Limiting expected losses of a frozen threshold strategy.

For a true scaled mean d the loss l(x, t) solves the same explicit scheme as
the risk, except that the branch is dictated by the strategy instead of the
minimum:

    l = l1 = (1 - t) g1       where x <= T(t)
    l = l2 = l(t + dt) + dt (D/2 lap l(t + dt) + g2)   elsewhere

with g1, g2 built from the one-atom prior at d.  The thresholds may have been
computed under a different variance than the one used for evaluation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from ._golden import golden_section_max
from ._threads import pmap
from .model import ConfigError, PriorSpec, g_arrays
from .pde import GridSpec, ThresholdStrategy, _clamp_edges, laplacian


def _threshold_rows(strategy: ThresholdStrategy, grid: GridSpec) -> np.ndarray:
    t = grid.t[:-1]
    if not strategy.covers(float(t[0]), float(t[-1])):
        raise ConfigError(
            f"strategy covers t in [{strategy.t_grid[0]:g}, {strategy.t_grid[-1] + strategy.step:g}) "
            f"but the grid needs [0, {t[-1]:g}]"
        )
    return strategy.threshold_at(t)


def loss_sweep(
    strategy: ThresholdStrategy,
    d: float,
    D_true: float,
    grid: GridSpec,
    keep_rows: Sequence[int] = (),
) -> tuple[float, dict[int, np.ndarray]]:
    """Backward sweep; returns l(0, 0) and copies of the requested time rows."""
    grid.check_stable(D_true)
    prior = PriorSpec.point(d)
    thresholds = _threshold_rows(strategy, grid)
    x, dt = grid.x, grid.dt
    keep = set(keep_rows)
    kept: dict[int, np.ndarray] = {}
    l = np.zeros_like(x)
    if grid.nt in keep:
        kept[grid.nt] = l.copy()
    half_d = 0.5 * D_true
    for i in range(grid.nt - 1, -1, -1):
        t = i * dt
        g1, g2 = g_arrays(prior, D_true, x, t)
        l2 = l + dt * (half_d * laplacian(l, grid.dx) + g2)
        stop = x <= thresholds[i]
        l = np.where(stop, (1.0 - t) * g1, l2)
        _clamp_edges(l, stop)
        if i in keep:
            kept[i] = l.copy()
    return float(np.interp(0.0, x, l)), kept


def eval_limit_losses(
    strategy: ThresholdStrategy,
    d: float,
    D_design: float,
    D_true: float,
    grid: GridSpec,
) -> float:
    """Scaled expected loss l(sigma; 0, 0) at true mean d.

    ``D_design`` is the variance the thresholds were computed for; it only
    labels the result.  Likelihood weights and diffusion use ``D_true``.
    """
    if not D_true > 0:
        raise ConfigError(f"true variance must be positive, got {D_true}")
    return loss_sweep(strategy, d, D_true, grid)[0]


def eval_with_initial_stage(
    strategy: ThresholdStrategy,
    d: float,
    D: float,
    grid: GridSpec,
    eps0: float,
    forced_arm: int = 2,
) -> tuple[float, float]:
    """Losses when the first ``eps0`` of the horizon is forced onto one arm.

    Returns ``(loss_with_initial, loss_without_initial)``.  With the unknown
    arm forced (``forced_arm=2``, the default) these are
    ``|d| eps0 [d < 0] + (l(., eps0) * f_{eps0 D})(0)`` and the convolution term
    alone.  With the known arm forced no information is gained, so the
    continuation is ``l(0, eps0)`` and the initial cost is ``d eps0 [d > 0]``.
    ``eps0`` is rounded to the nearest time row of ``grid``.
    """
    if not 0 < eps0 < 1:
        raise ConfigError(f"initial fraction must lie in (0, 1), got {eps0}")
    if forced_arm not in (1, 2):
        raise ConfigError(f"forced arm must be 1 or 2, got {forced_arm}")
    row = int(round(eps0 / grid.dt))
    row = min(max(row, 1), grid.nt - 1)
    eps = row * grid.dt
    _, kept = loss_sweep(strategy, d, D, grid, keep_rows=(row,))
    l_row = kept[row]
    x = grid.x
    if forced_arm == 2:
        density = np.exp(-0.5 * x * x / (eps * D)) / math.sqrt(2 * math.pi * eps * D)
        rest = float(trapezoid(l_row * density, x))
        initial = abs(d) * eps if d < 0 else 0.0
    else:
        rest = float(np.interp(0.0, x, l_row))
        initial = d * eps if d > 0 else 0.0
    return initial + rest, rest


@dataclass
class LossCurve:
    d: np.ndarray
    loss: np.ndarray
    strategy_id: str = ""
    D_design: float = 1.0
    D_true: float = 1.0
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.d.tolist(), self.loss.tolist()))

    def interior_maxima(self) -> list[int]:
        """Indices strictly above the left neighbour and not below the right one."""
        y = self.loss
        return [i for i in range(1, y.size - 1) if y[i] > y[i - 1] and y[i] >= y[i + 1]]

    def to_csv(self, path: str | Path) -> None:
        cols = ["d", "loss", *self.extra]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for i in range(self.d.size):
                row = [self.d[i], self.loss[i], *(self.extra[k][i] for k in self.extra)]
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "LossCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        d = np.array([float(r["d"]) for r in rows])
        loss = np.array([float(r["loss"]) for r in rows])
        return cls(d, loss)


def sweep_losses(
    strategy: ThresholdStrategy,
    d_grid: Sequence[float],
    D_design: float,
    D_true: float,
    grid: GridSpec,
    threads: int | None = None,
    strategy_id: str = "",
) -> LossCurve:
    d_grid = np.asarray(d_grid, dtype=float)
    if d_grid.size == 0:
        raise ConfigError("d grid is empty")
    losses = pmap(lambda d: eval_limit_losses(strategy, d, D_design, D_true, grid), d_grid, threads)
    return LossCurve(d_grid, np.array(losses), strategy_id, D_design, D_true)


def stable_grid(grid: GridSpec, D: float) -> GridSpec:
    """``grid`` itself if stable for variance D, else the same dt and range with dx widened."""
    if D * grid.dt / grid.dx**2 < 0.99:
        return grid
    dx = math.ceil(math.sqrt(D * grid.dt / 0.95) * 1000) / 1000
    return GridSpec.symmetric(grid.x_max, dx, grid.dt)


def default_d_grid(d_min: float = -8.0, d_max: float = 8.0, points: int = 81) -> np.ndarray:
    if points < 1:
        raise ConfigError("need at least one d point")
    return np.linspace(d_min, d_max, points)


def refine_peaks(
    curve: LossCurve,
    strategy: ThresholdStrategy,
    grid: GridSpec,
    tol: float = 1e-3,
) -> list[tuple[float, float]]:
    """Golden-section refinement of each interior local maximum of a sweep."""
    out = []
    for i in curve.interior_maxima():
        lo, hi = float(curve.d[i - 1]), float(curve.d[i + 1])
        out.append(golden_section_max(
            lambda d: eval_limit_losses(strategy, d, curve.D_design, curve.D_true, grid), lo, hi, tol
        ))
    return out
