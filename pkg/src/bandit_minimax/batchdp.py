"""Exact batch recursions with Gaussian convolution by trapezoid quadrature.

With horizon H (1 in invariant units, N in absolute units), stage start t and
stage size e:

    r1(x, t) = (H - t) g1(x, t)
    r2(x, t) = e g2(x, t) + (r(., t + e) * f_{eD})(x)
    r(x, t)  = min(r1, r2)

Action 1 is absorbing, so the full-history state (s, x, t) collapses to (x, t).
``solve_full_history`` keeps the s coordinate and serves as the oracle for that
reduction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence, Union

import numpy as np

from .model import ConfigError, ModelParams, PriorSpec, g_arrays
from .pde import ThresholdStrategy, threshold_from_gap_row

KERNEL_SIGMAS = 6.0


@dataclass(frozen=True)
class BatchSchedule:
    """Batch sizes; ``fractions`` are the sizes normalised by their total."""

    sizes: tuple[Fraction, ...]

    def __post_init__(self):
        sizes = tuple(Fraction(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not sizes:
            raise ConfigError("empty batch schedule")
        if any(s <= 0 for s in sizes):
            raise ConfigError("batch sizes must be positive")

    @classmethod
    def uniform(cls, K: int) -> "BatchSchedule":
        if K < 1:
            raise ConfigError(f"need at least one batch, got {K}")
        return cls((Fraction(1, K),) * K)

    @classmethod
    def from_fractions(cls, fractions: Sequence[float | Fraction]) -> "BatchSchedule":
        fr = [Fraction(f).limit_denominator(10**12) if isinstance(f, float) else Fraction(f)
              for f in fractions]
        total = sum(fr)
        if abs(float(total) - 1.0) > 1e-12:
            raise ConfigError(f"batch fractions must sum to 1, got {float(total)!r}")
        return cls(tuple(fr))

    @classmethod
    def parse(cls, text: str) -> "BatchSchedule":
        """Parse ``"50"`` (50 equal batches) or ``"8x25,48x100"`` / ``"8x1/200,48x1/50"``.

        Items are ``COUNTxSIZE`` or ``SIZE``.  Sizes above 1 are item counts and
        the schedule is normalised by their total; otherwise they are horizon
        fractions and must sum to 1.
        """
        text = text.strip()
        if not text:
            raise ConfigError("empty schedule string")
        if text.isdigit():
            return cls.uniform(int(text))
        sizes: list[Fraction] = []
        try:
            for item in text.split(","):
                item = item.strip()
                if "x" in item:
                    count_s, size_s = item.split("x", 1)
                    count = int(count_s)
                else:
                    count, size_s = 1, item
                if count < 1:
                    raise ValueError(f"bad repeat count in {item!r}")
                sizes.extend([Fraction(size_s.strip())] * count)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot parse schedule {text!r}: {exc}") from exc
        sched = cls(tuple(sizes))
        counts = [s > 1 for s in sizes]
        if any(counts) and not all(counts):
            raise ConfigError("schedule mixes item counts and fractions")
        if not any(counts) and sched.total != 1:
            raise ConfigError(f"batch fractions must sum to 1, got {float(sched.total)!r}")
        return sched

    @property
    def total(self) -> Fraction:
        return sum(self.sizes, Fraction(0))

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def fractions(self) -> np.ndarray:
        tot = self.total
        return np.array([float(s / tot) for s in self.sizes])

    @property
    def starts(self) -> np.ndarray:
        """Stage start times as horizon fractions (length K + 1, last = 1)."""
        tot = self.total
        acc, out = Fraction(0), [0.0]
        for s in self.sizes:
            acc += s
            out.append(float(acc / tot))
        return np.array(out)

    def item_counts(self) -> list[int]:
        if any(s.denominator != 1 for s in self.sizes):
            raise ConfigError("schedule is not in whole item counts")
        return [int(s) for s in self.sizes]

    def __str__(self) -> str:
        parts: list[str] = []
        prev, n = None, 0
        for s in list(self.sizes) + [None]:
            if s == prev:
                n += 1
                continue
            if prev is not None:
                parts.append(f"{n}x{prev}")
            prev, n = s, 1
        return ",".join(parts)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform nodes on [-half_width, half_width] including 0."""

    half_width: float = 6.0
    dx: float = 0.005

    def __post_init__(self):
        if not (self.dx > 0 and self.half_width > self.dx):
            raise ConfigError("quadrature grid needs 0 < dx < half_width")

    @property
    def n_half(self) -> int:
        return int(round(self.half_width / self.dx))

    @property
    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(-self.n_half, self.n_half + 1)

    def scaled(self, k: float) -> "QuadratureGrid":
        s = math.sqrt(k)
        return QuadratureGrid(self.half_width * s, self.dx * s)


def gaussian_kernel(variance: float, dx: float, n_half: int, sigmas: float = KERNEL_SIGMAS) -> np.ndarray:
    """Trapezoid weights of the N(0, variance) density on nodes j*dx, |j*dx| <= sigmas*sd."""
    sd = math.sqrt(variance)
    if sd < dx:
        raise ConfigError(
            f"quadrature step {dx:g} is coarser than the kernel scale {sd:g}; refine the grid"
        )
    m = int(math.ceil(sigmas * sd / dx - 1e-9))
    if m > n_half:
        raise ConfigError(
            f"quadrature grid half-width {n_half * dx:g} is narrower than the "
            f"convolution support {sigmas:g} sd = {sigmas * sd:g}"
        )
    y = dx * np.arange(-m, m + 1)
    w = np.exp(-0.5 * y * y / variance) / math.sqrt(2 * math.pi * variance) * dx
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def convolve(r: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """(r * kernel) on the same nodes, r taken as 0 off the grid."""
    if not r.any():
        return np.zeros_like(r)
    return np.convolve(r, kernel, mode="same")


@dataclass
class StepRiskField:
    x: np.ndarray
    t: np.ndarray  # stage start times, length K + 1 (last is the horizon)
    values: np.ndarray  # (K + 1, nx)
    actions: np.ndarray  # (K, nx)
    gap: np.ndarray  # (K, nx) r1 - r2; zeros where a policy was imposed
    horizon: float = 1.0

    def value(self, x: float = 0.0, stage: int = 0) -> float:
        return float(np.interp(x, self.x, self.values[stage]))

    def origin_value(self) -> float:
        return self.value(0.0, 0)

    def thresholds(self) -> ThresholdStrategy:
        T = [threshold_from_gap_row(self.x, row) for row in self.gap]
        return ThresholdStrategy(self.t[:-1].copy(), np.array(T))


ActionRule = Union[ThresholdStrategy, Callable[[int, float, np.ndarray], np.ndarray], int]


def _policy_actions(rule: ActionRule, stage: int, t: float, x: np.ndarray) -> np.ndarray:
    if isinstance(rule, ThresholdStrategy):
        return np.where(x <= rule.threshold_at(t), 1, 2)
    if isinstance(rule, (int, np.integer)):
        if rule not in (1, 2):
            raise ConfigError(f"constant action must be 1 or 2, got {rule}")
        return np.full(x.size, int(rule))
    a = np.asarray(rule(stage, t, x))
    if a.shape != x.shape or not np.isin(a, (1, 2)).all():
        raise ConfigError(f"action rule undefined or invalid at stage {stage}")
    return a


def _recursion(
    prior: PriorSpec,
    D: float,
    stage_starts: np.ndarray,
    horizon: float,
    x: np.ndarray,
    dx: float,
    rule: ActionRule | None = None,
    force_first: bool = False,
    sigmas: float = KERNEL_SIGMAS,
) -> StepRiskField:
    K = stage_starts.size - 1
    n_half = (x.size - 1) // 2
    values = np.zeros((K + 1, x.size))
    actions = np.empty((K, x.size), dtype=np.int8)
    gap = np.zeros((K, x.size))
    kernels: dict[float, np.ndarray] = {}
    r = values[K]
    for i in range(K - 1, -1, -1):
        t = stage_starts[i]
        size = stage_starts[i + 1] - t
        key = round(size, 15)
        if key not in kernels:
            kernels[key] = gaussian_kernel(size * D, dx, n_half, sigmas)
        g1, g2 = g_arrays(prior, D, x, t)
        r1 = (horizon - t) * g1
        r2 = size * g2 + convolve(r, kernels[key])
        if force_first and i == 0:
            act = np.full(x.size, 2)
        elif rule is not None:
            act = _policy_actions(rule, i, t / horizon, x)
        else:
            diff = r1 - r2
            gap[i] = diff
            act = np.where(diff <= 0, 1, 2)
        r = np.where(act == 1, r1, r2)
        values[i] = r
        actions[i] = act
    return StepRiskField(x, stage_starts.copy(), values, actions, gap, horizon)


def solve_batch_risk(
    prior: PriorSpec,
    params: ModelParams,
    schedule: BatchSchedule,
    xgrid: QuadratureGrid = QuadratureGrid(),
    allow_degenerate: bool = False,
    force_first: bool = False,
    sigmas: float = KERNEL_SIGMAS,
) -> StepRiskField:
    """Scaled Bayesian risk of batch processing; ``origin_value()`` is r_eps(0, 0).

    ``force_first`` makes the first batch use the unknown arm regardless.
    """
    if not allow_degenerate:
        prior.require_two_sided()
    return _recursion(
        prior, params.D, schedule.starts, 1.0, xgrid.nodes, xgrid.dx,
        force_first=force_first, sigmas=sigmas,
    )


def solve_batch_losses(
    strategy: ActionRule,
    prior: PriorSpec,
    params: ModelParams,
    schedule: BatchSchedule,
    xgrid: QuadratureGrid = QuadratureGrid(),
    force_first: bool = False,
    sigmas: float = KERNEL_SIGMAS,
) -> StepRiskField:
    """Expected losses of a fixed rule; action 1 is treated as permanent.

    ``strategy`` is a ThresholdStrategy (thresholds looked up at the stage start),
    a constant action, or ``rule(stage, t, x) -> actions``.
    """
    if isinstance(strategy, ThresholdStrategy) and not strategy.covers(0.0, float(schedule.starts[-2])):
        raise ConfigError("threshold strategy does not cover the schedule's stage times")
    return _recursion(
        prior, params.D, schedule.starts, 1.0, xgrid.nodes, xgrid.dx,
        rule=strategy, force_first=force_first, sigmas=sigmas,
    )


def batch_initial_stage_losses(
    strategy: ActionRule,
    d: float,
    params: ModelParams,
    schedule: BatchSchedule,
    xgrid: QuadratureGrid = QuadratureGrid(),
) -> tuple[float, float]:
    """(|d| e1 [d<0] + (l(., e1) * f)(0),  (l(., e1) * f)(0)) with the first batch on arm 2."""
    field = solve_batch_losses(strategy, PriorSpec.point(d), params, schedule, xgrid, force_first=True)
    with_initial = field.origin_value()
    e1 = float(schedule.starts[1])
    initial = e1 * abs(d) if d < 0 else 0.0
    return with_initial, with_initial - initial


def solve_absolute_risk(
    prior_m: PriorSpec,
    D: float,
    batch_sizes: Sequence[int],
    xgrid: QuadratureGrid,
) -> float:
    """R(0, 0) in absolute units: atoms are per-item means m, horizon N = sum of sizes."""
    prior_m.require_two_sided()
    starts = np.concatenate([[0.0], np.cumsum(np.asarray(batch_sizes, dtype=float))])
    field = _recursion(prior_m, D, starts, float(starts[-1]), xgrid.nodes, xgrid.dx)
    return field.origin_value()


@dataclass
class ScalingReport:
    risk: float
    risk_transformed: float
    ratio: float
    expected_ratio: float

    @property
    def error(self) -> float:
        return abs(self.ratio - self.expected_ratio)


def verify_scaling(
    prior: PriorSpec,
    params: ModelParams,
    schedule: BatchSchedule,
    k: float,
    xgrid: QuadratureGrid = QuadratureGrid(),
) -> ScalingReport:
    """Solve with D -> kD, w -> sqrt(k) w, x-grid -> sqrt(k) x-grid and compare."""
    if not k > 0:
        raise ConfigError(f"scale factor must be positive, got {k}")
    base = solve_batch_risk(prior, params, schedule, xgrid).origin_value()
    params_k = ModelParams(D=k * params.D, c=math.sqrt(k) * params.c)
    scaled = solve_batch_risk(prior.scaled(k), params_k, schedule, xgrid.scaled(k)).origin_value()
    return ScalingReport(base, scaled, scaled / base, math.sqrt(k))


@dataclass
class BatchEquivalenceReport:
    batch_scaled: float  # N^{-1/2} R for K batches of M items
    single_scaled: float  # K^{-1/2} R for K single items

    @property
    def error(self) -> float:
        return abs(self.batch_scaled - self.single_scaled)


def verify_batch_equivalence(
    prior: PriorSpec,
    D: float,
    K: int,
    M: int,
    xgrid: QuadratureGrid = QuadratureGrid(),
) -> BatchEquivalenceReport:
    """K batches of M items on |m| <= C/sqrt(M) against K single items on |m| <= C.

    ``prior`` is given in invariant units; the one-by-one problem uses atoms
    w/sqrt(K), the batch problem w/sqrt(KM).  Grids are mapped accordingly.
    """
    single_prior = prior.scaled(1.0 / K)
    batch_prior = single_prior.scaled(1.0 / M)
    grid_single = xgrid.scaled(K)
    grid_batch = grid_single.scaled(M)
    r_single = solve_absolute_risk(single_prior, D, [1] * K, grid_single)
    r_batch = solve_absolute_risk(batch_prior, D, [M] * K, grid_batch)
    return BatchEquivalenceReport(r_batch / math.sqrt(K * M), r_single / math.sqrt(K))


@dataclass
class FullHistorySolution:
    K: int
    x: np.ndarray
    values: dict[tuple[int, int], np.ndarray]  # (s_index, t_index) -> r over x
    actions: dict[tuple[int, int], np.ndarray]
    gap: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def origin_value(self) -> float:
        return float(np.interp(0.0, self.x, self.values[(0, 0)]))


MAX_FULL_K = 6


def solve_full_history(
    prior: PriorSpec,
    params: ModelParams,
    K: int,
    xgrid: QuadratureGrid = QuadratureGrid(),
    sigmas: float = KERNEL_SIGMAS,
) -> FullHistorySolution:
    """Recursion over (s, x, t) with uniform batches 1/K; s counts known-arm batches."""
    if not 1 <= K <= MAX_FULL_K:
        raise ConfigError(f"full-history solver is limited to 1 <= K <= {MAX_FULL_K}, got {K}")
    prior.require_two_sided()
    x, dx = xgrid.nodes, xgrid.dx
    eps = 1.0 / K
    kernel = gaussian_kernel(eps * params.D, dx, xgrid.n_half, sigmas)
    zero = np.zeros_like(x)
    values: dict[tuple[int, int], np.ndarray] = {}
    actions: dict[tuple[int, int], np.ndarray] = {}
    gaps: dict[tuple[int, int], np.ndarray] = {}
    for total in range(K - 1, -1, -1):
        for s in range(total + 1):
            ti = total - s
            t = ti * eps
            g1, g2 = g_arrays(prior, params.D, x, t)
            nxt_1 = values.get((s + 1, ti), zero)
            nxt_2 = values.get((s, ti + 1), zero)
            r1 = eps * g1 + nxt_1
            r2 = eps * g2 + convolve(nxt_2, kernel)
            diff = r1 - r2
            values[(s, ti)] = np.where(diff <= 0, r1, r2)
            actions[(s, ti)] = np.where(diff <= 0, 1, 2).astype(np.int8)
            gaps[(s, ti)] = diff
    return FullHistorySolution(K, x, values, actions, gaps)


@dataclass
class AbsorbingReport:
    full: float
    reduced: float
    violations: int  # nodes where action 1 is followed by a strict preference for action 2
    worst_violation: float  # largest r1 - r2 at such nodes

    @property
    def error(self) -> float:
        return abs(self.full - self.reduced)


def verify_absorbing(
    prior: PriorSpec,
    params: ModelParams,
    K: int,
    xgrid: QuadratureGrid = QuadratureGrid(),
    sigmas: float = KERNEL_SIGMAS,
    tie_tol: float = 1e-12,
) -> AbsorbingReport:
    """Compare the full-history and reduced recursions; count non-absorbing nodes.

    A violation is a node where action 1 is optimal but after one more
    known-arm batch action 2 is better by more than ``tie_tol`` (relative).
    """
    full = solve_full_history(prior, params, K, xgrid, sigmas)
    reduced = _recursion(prior, params.D, BatchSchedule.uniform(K).starts, 1.0, xgrid.nodes, xgrid.dx,
                         sigmas=sigmas)
    violations, worst = 0, 0.0
    for (s, ti), act in full.actions.items():
        nxt = (s + 1, ti)
        if nxt not in full.actions:
            continue
        gap_next = full.gap[nxt]
        scale = np.maximum(np.abs(full.values[nxt]), 1e-300)
        bad = (act == 1) & (gap_next > tie_tol * scale)
        if bad.any():
            violations += int(bad.sum())
            worst = max(worst, float(gap_next[bad].max()))
    return AbsorbingReport(full.origin_value(), reduced.origin_value(), violations, worst)


def c16_bound(prior: PriorSpec, params: ModelParams, eps: float, xgrid: QuadratureGrid) -> float:
    """eps g2(0,0) + (1 - eps) (min(g1, g2)(., eps) * f_{eps D})(0)."""
    x = xgrid.nodes
    g1, g2 = g_arrays(prior, params.D, x, eps)
    kernel = gaussian_kernel(eps * params.D, xgrid.dx, xgrid.n_half)
    smoothed = convolve(np.minimum(g1, g2), kernel)
    _, g2_0 = g_arrays(prior, params.D, np.array([0.0]), 0.0)
    return float(eps * g2_0[0] + (1 - eps) * np.interp(0.0, x, smoothed))


def check_single_flip(field: StepRiskField) -> None:
    for row in field.gap:
        threshold_from_gap_row(field.x, row)

