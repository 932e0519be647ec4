"""Statistical model of the Gaussian one-armed bandit in invariant coordinates.

The unknown arm has scaled mean ``w`` (known arm has mean 0), one-step
variance ``D``.  A prior is a finite list of atoms ``(w, p)``.  After a
scaled amount ``t`` of plays of the unknown arm with scaled cumulative
income ``x`` the likelihood ratio of ``w`` against ``w = 0`` is

    h(w, x, t) = exp((x*w - 0.5*t*w**2) / D)

and the two weights driving every recursion are

    g1(x, t) = sum_{w>0} w * h(w, x, t) * p
    g2(x, t) = sum_{w<0} |w| * h(w, x, t) * p
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

MASS_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid user input: bad config, unstable grid, degenerate prior."""


class DegeneratePriorError(ConfigError):
    pass


class IntegrityError(RuntimeError):
    """A computed object violates a structural property it must have."""


@dataclass(frozen=True)
class ModelParams:
    D: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.D) and self.D > 0):
            raise ConfigError(f"variance D must be positive and finite, got {self.D}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ConfigError(f"parameter bound c must be positive and finite, got {self.c}")

    @classmethod
    def for_prior(cls, prior: "PriorSpec", D: float = 1.0) -> "ModelParams":
        # c defaults to the largest atom magnitude
        c = max((abs(w) for w, _ in prior.atoms), default=0.0)
        return cls(D=D, c=c if c > 0 else 1.0)

    @property
    def c_prime(self) -> float:
        return self.c / self.D


@dataclass(frozen=True)
class PriorSpec:
    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(w), float(p)) for w, p in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms:
            raise ConfigError("prior needs at least one atom")
        for w, p in atoms:
            if not math.isfinite(w):
                raise ConfigError(f"atom location must be finite, got {w}")
            if not (p >= 0):
                raise ConfigError(f"atom mass must be non-negative, got {p}")
        total = sum(p for _, p in atoms)
        if abs(total - 1.0) > MASS_TOL:
            raise ConfigError(f"prior masses must sum to 1, got {total!r}")

    @classmethod
    def two_point(cls, d1: float, d2: float, rho: float) -> "PriorSpec":
        """Mass ``rho`` at ``+d1`` and ``1 - rho`` at ``-d2``."""
        return cls(((d1, rho), (-d2, 1.0 - rho)))

    @classmethod
    def point(cls, d: float) -> "PriorSpec":
        return cls(((d, 1.0),))

    @property
    def locations(self) -> np.ndarray:
        return np.array([w for w, _ in self.atoms])

    @property
    def masses(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def is_two_sided(self) -> bool:
        pos = any(w > 0 and p > 0 for w, p in self.atoms)
        neg = any(w < 0 and p > 0 for w, p in self.atoms)
        return pos and neg

    def require_two_sided(self) -> None:
        if not self.is_two_sided():
            raise DegeneratePriorError(
                "degenerate prior: risk solving needs positive mass on both w > 0 and w < 0"
            )

    def check_support(self, params: ModelParams) -> None:
        for w, _ in self.atoms:
            if abs(w) > params.c * (1 + 1e-12):
                raise ConfigError(f"atom w={w} lies outside [-c, c] with c={params.c}")

    def scaled(self, k: float) -> "PriorSpec":
        """Atoms moved to ``sqrt(k) * w``, masses unchanged."""
        s = math.sqrt(k)
        return PriorSpec(tuple((s * w, p) for w, p in self.atoms))

    def to_dict(self) -> dict:
        return {"atoms": [{"w": w, "p": p} for w, p in self.atoms]}


class GPair(NamedTuple):
    g1: float
    g2: float


def log_kernel(w, x, t, D: float):
    return (np.multiply(x, w) - 0.5 * t * np.square(w)) / D


def likelihood_kernel(w, x, t, D: float):
    """h(w, x, t); evaluated as a single exp of the log-ratio."""
    return np.exp(log_kernel(w, x, t, D))


def g_arrays(prior: PriorSpec, D: float, x, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (g1, g2) over an array of x at a single t."""
    x = np.asarray(x, dtype=float)
    g1 = np.zeros_like(x)
    g2 = np.zeros_like(x)
    for w, p in prior.atoms:
        if w == 0.0 or p == 0.0:
            continue
        term = abs(w) * p * np.exp(log_kernel(w, x, t, D))
        if w > 0:
            g1 += term
        else:
            g2 += term
    return g1, g2


def g_pair(prior: PriorSpec, params: ModelParams, x: float, t: float) -> GPair:
    if not math.isfinite(x):
        raise ValueError(f"x must be finite, got {x}")
    if not (t >= 0):
        raise ValueError(f"t must be non-negative, got {t}")
    g1, g2 = g_arrays(prior, params.D, np.array([x]), t)
    return GPair(float(g1[0]), float(g2[0]))


def prior_from_dict(data: dict) -> PriorSpec:
    try:
        atoms = [(float(a["w"]), float(a["p"])) for a in data["atoms"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed prior atoms: {exc}") from exc
    return PriorSpec(tuple(atoms))


def load_config(path: str | Path) -> tuple[PriorSpec, ModelParams, dict]:
    """Read ``{"atoms": [{"w":..,"p":..}], "D": .., "c": ..}``.

    Extra top-level keys (grid settings etc.) are returned untouched.
    ``c`` is optional and defaults to the largest atom magnitude.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict) or "atoms" not in data:
        raise ConfigError(f"config {path} must be an object with an 'atoms' list")
    prior = prior_from_dict(data)
    D = float(data.get("D", 1.0))
    if "c" in data and data["c"] is not None:
        params = ModelParams(D=D, c=float(data["c"]))
    else:
        params = ModelParams.for_prior(prior, D)
    prior.check_support(params)
    extra = {k: v for k, v in data.items() if k not in ("atoms", "D", "c")}
    return prior, params, extra


REFERENCE_PRIOR = PriorSpec.two_point(1.65, 2.52, 0.38)
