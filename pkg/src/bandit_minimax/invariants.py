"""Structural checks that every risk field should satisfy.

Each check returns a margin: the largest amount by which the field exceeds
the bound (<= 0 means the bound holds).  ``check_field`` bundles them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import IntegrityError, ModelParams, PriorSpec, g_arrays
from .pde import threshold_from_gap_row

RISK_CAP = 0.752  # r(0, 0) <= RISK_CAP * sqrt(D)


@dataclass
class InvariantReport:
    margins: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(m <= 0 for m in self.margins.values())

    def failed(self) -> list[str]:
        return [k for k, m in self.margins.items() if m > 0]


def _min_g(prior: PriorSpec, D: float, x: np.ndarray, t: float) -> np.ndarray:
    g1, g2 = g_arrays(prior, D, x, t)
    return np.minimum(g1, g2)


def check_field(
    x: np.ndarray,
    t: np.ndarray,
    values: np.ndarray,
    gap: np.ndarray,
    prior: PriorSpec,
    params: ModelParams,
    dt_tol: float,
    dx_tol: float,
) -> InvariantReport:
    """Run the invariant suite on rows ``values[i]`` at times ``t[i]`` (last row t = 1).

    ``dt_tol`` and ``dx_tol`` are the scheme slacks added to the upper bound
    and the derivative bound respectively.
    """
    c, D = params.c, params.D
    cp = c / D
    rep = InvariantReport()
    rep.margins["terminal_zero"] = float(np.max(np.abs(values[-1])))
    rep.margins["non_negative"] = float(-np.min(values))

    upper = -math.inf
    for i in range(len(t) - 1):
        bound = (1 - t[i]) * _min_g(prior, D, x, t[i]) + dt_tol
        upper = max(upper, float(np.max(values[i] - bound)))
    rep.margins["upper_bound"] = upper

    dx = float(x[1] - x[0])
    deriv = (values[:, 2:] - values[:, :-2]) / (2 * dx)
    rep.margins["derivative_bound"] = float(np.max(np.abs(deriv) - cp * values[:, 1:-1] - dx_tol))

    growth = np.exp(c * np.abs(x) / D)
    lip = -math.inf
    for i in range(len(t) - 1):
        delta = t[i + 1] - t[i]
        bound = delta * c * (0.5 * c * cp * (1 - t[i] - delta) + 1) * growth + dt_tol
        lip = max(lip, float(np.max(np.abs(values[i] - values[i + 1]) - bound)))
    rep.margins["time_lipschitz"] = lip

    r00 = float(np.interp(0.0, x, values[0]))
    rep.margins["risk_cap"] = r00 - RISK_CAP * math.sqrt(D)

    flips = 0.0
    for row in gap:
        try:
            threshold_from_gap_row(x, row)
        except IntegrityError:
            flips += 1
    rep.margins["single_flip"] = flips
    return rep


def check_limit_field(field, prior: PriorSpec, params: ModelParams) -> InvariantReport:
    g = field.grid
    return check_field(g.x, g.t, field.values, field.gap, prior, params, 10 * g.dt, 10 * g.dx)


def check_step_field(field, prior: PriorSpec, params: ModelParams) -> InvariantReport:
    """Invariant-unit batch fields; the upper bound is exact there, so only rounding slack."""
    dx = float(field.x[1] - field.x[0])
    return check_field(field.x, field.t, field.values, field.gap, prior, params, 1e-12, 10 * dx)
