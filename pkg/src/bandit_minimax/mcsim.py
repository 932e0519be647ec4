"""Monte-Carlo batch processing of Bernoulli items under a threshold strategy.

Items are processed in batches by one method per batch.  Method 1 succeeds with
known probability p, method 2 with p2 = p + d sqrt(D/T), D = p(1-p).  After each
method-2 batch the strategy sees

    x = (T D)^{-1/2} * sum over method-2 items of (zeta - p),   t = items done / T

and switches to method 1 for good once x <= T(t).  The scaled loss of a run is
(D T)^{-1/2} (T max(p, p2) - total successes).

The default ``conditional`` estimator replaces each batch's realised successes
by their expectation m * p_arm given the arm actually used.  It is unbiased for
the same quantity and removes the binomial noise of the processed items, so only
the randomness of the switching time remains.  ``incomes`` uses the raw counts.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._threads import pmap
from .batchdp import BatchSchedule
from .model import ConfigError
from .pde import ThresholdStrategy

BLOCK = 2500  # replications per random stream
ESTIMATORS = ("conditional", "incomes")


@dataclass(frozen=True)
class SimConfig:
    T: int
    schedule: BatchSchedule
    p: float
    d_grid: tuple[float, ...]
    reps: int = 10_000
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "d_grid", tuple(float(d) for d in self.d_grid))
        counts = self.schedule.item_counts()
        if sum(counts) != self.T:
            raise ConfigError(f"schedule covers {sum(counts)} items, expected T={self.T}")
        if self.reps < 1:
            raise ConfigError("need at least one replication")
        if not 0 < self.p < 1:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if not self.d_grid:
            raise ConfigError("d grid is empty")

    @property
    def D(self) -> float:
        return self.p * (1 - self.p)

    def p2(self, d: float) -> float:
        p2 = self.p + d * math.sqrt(self.D / self.T)
        if not 0 <= p2 <= 1:
            raise ConfigError(f"d={d} gives p2={p2} outside [0, 1]")
        return p2


@dataclass
class SimResult:
    d: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    reps: np.ndarray

    def at(self, d: float) -> tuple[float, float]:
        i = int(np.argmin(np.abs(self.d - d)))
        if abs(self.d[i] - d) > 1e-9:
            raise KeyError(f"d={d} not simulated")
        return float(self.mean[i]), float(self.se[i])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["d", "mean", "se", "reps"])
            for d, m, s, n in zip(self.d, self.mean, self.se, self.reps):
                w.writerow([repr(float(d)), repr(float(m)), repr(float(s)), int(n)])


def loss_estimator(paths, config: SimConfig, d: float) -> np.ndarray:
    """Scaled loss per path from its incomes (1-D totals or 2-D per-batch/per-item)."""
    incomes = np.asarray(paths, dtype=float)
    totals = incomes.sum(axis=-1) if incomes.ndim > 1 else incomes
    best = max(config.p, config.p2(d))
    return (config.T * best - totals) / math.sqrt(config.D * config.T)


def _block_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _batch_thresholds(strategy: ThresholdStrategy, counts: Sequence[int], T: int) -> np.ndarray:
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]) / T
    if not strategy.covers(float(starts[0]), float(starts[-1])):
        raise ConfigError("strategy threshold is undefined at some batch boundary")
    return strategy.threshold_at(starts)


def simulate_paths(
    config: SimConfig,
    strategy: ThresholdStrategy,
    d: float,
    block: int,
    size: int,
    expected: bool = False,
) -> np.ndarray:
    """Per-batch incomes (size x K) for one block of replications.

    With ``expected=True`` each entry is m * p_arm for the arm used instead of
    the realised count; the paths themselves are identical.
    """
    counts = config.schedule.item_counts()
    thresholds = _batch_thresholds(strategy, counts, config.T)
    p, p2 = config.p, config.p2(d)
    rng = _block_stream(config.seed, block)
    norm = 1.0 / math.sqrt(config.T * config.D)
    x = np.zeros(size)
    on_known = np.zeros(size, dtype=bool)
    incomes = np.empty((size, len(counts)))
    for k, m in enumerate(counts):
        # both draws are always made so the stream layout does not depend on the path
        s1 = rng.binomial(m, p, size)
        s2 = rng.binomial(m, p2, size)
        on_known |= x <= thresholds[k]
        if expected:
            incomes[:, k] = np.where(on_known, m * p, m * p2)
        else:
            incomes[:, k] = np.where(on_known, s1, s2)
        x = np.where(on_known, x, x + norm * (s2 - m * p))
    return incomes


def _simulate_d(
    config: SimConfig, strategy: ThresholdStrategy, d: float, estimator: str
) -> tuple[float, float]:
    expected = estimator == "conditional"
    samples = []
    for block, start in enumerate(range(0, config.reps, BLOCK)):
        size = min(BLOCK, config.reps - start)
        paths = simulate_paths(config, strategy, d, block, size, expected=expected)
        samples.append(loss_estimator(paths, config, d))
    s = np.concatenate(samples)
    se = float(s.std(ddof=1) / math.sqrt(s.size)) if s.size > 1 else math.nan
    return float(s.mean()), se


def simulate(
    config: SimConfig,
    strategy: ThresholdStrategy,
    threads: int | None = None,
    estimator: str = "conditional",
) -> SimResult:
    """Mean scaled loss and its standard error at every d of the config.

    Replication block b always draws from the stream keyed by (seed, b), so
    results do not depend on thread count or evaluation order.
    """
    if estimator not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    stats = pmap(lambda d: _simulate_d(config, strategy, d, estimator), config.d_grid, threads)
    d = np.array(config.d_grid)
    return SimResult(
        d,
        np.array([m for m, _ in stats]),
        np.array([s for _, s in stats]),
        np.full(d.size, config.reps),
    )
