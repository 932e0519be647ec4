"""Exact Bayesian dynamic programming for the Bernoulli one-armed bandit.

The known arm succeeds with probability p; the unknown arm's success
probability p2 has a finite prior.  The first ``n0`` plays use the unknown arm.
Working with the unnormalised risk R~(X, n) = R(X, n) P(X, n):

    R~1 = (N - n) g~1(X, n)
    R~2 = g~2(X, n) + R~(X, n+1) (n+1-X)/(n+1) + R~(X+1, n+1) (X+1)/(n+1)
    R~  = min(R~1, R~2)

    risk = n0 * sum_{p2<p} (p - p2) q  +  sum_X R~(X, n0)

``brute_force_bernoulli`` is an independent check: it minimises the Bayes
loss over every deterministic strategy on the full history tree, with the
known arm allowed at any time.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .model import ConfigError, PriorSpec

DEFAULT_MAX_N = 5000
BRUTE_FORCE_MAX_N = 6


@dataclass(frozen=True)
class BernoulliModel:
    p: float
    prior: tuple[tuple[float, float], ...]  # (p2, mass)
    N: int
    n0: int

    def __post_init__(self):
        prior = tuple((float(a), float(b)) for a, b in self.prior)
        object.__setattr__(self, "prior", prior)
        if not 0 < self.p < 1:
            raise ConfigError(f"p must lie in (0, 1), got {self.p}")
        if not prior:
            raise ConfigError("prior needs at least one atom")
        for p2, q in prior:
            if not 0 <= p2 <= 1:
                raise ConfigError(f"p2 must lie in [0, 1], got {p2}")
            if q < 0:
                raise ConfigError(f"prior mass must be non-negative, got {q}")
        if abs(sum(q for _, q in prior) - 1) > 1e-12:
            raise ConfigError("prior masses must sum to 1")
        if not 1 <= self.n0 <= self.N:
            raise ConfigError(f"need 1 <= n0 <= N, got n0={self.n0}, N={self.N}")

    @property
    def D(self) -> float:
        return self.p * (1 - self.p)

    @property
    def forced_loss(self) -> float:
        return self.n0 * sum((self.p - p2) * q for p2, q in self.prior if p2 < self.p)

    def scale(self, risk: float) -> float:
        """(D N)^{-1/2} risk."""
        return risk / math.sqrt(self.D * self.N)


def default_n0(N: int) -> int:
    return math.ceil(math.sqrt(N))


def mapped_model(p: float, prior_w: PriorSpec, N: int, n0: int | None = None) -> BernoulliModel:
    """Map a unit-variance Gaussian prior on w to p2 = p + w sqrt(p(1-p)/N)."""
    scale = math.sqrt(p * (1 - p) / N)
    atoms = tuple((p + w * scale, m) for w, m in prior_w.atoms)
    return BernoulliModel(p, atoms, N, default_n0(N) if n0 is None else n0)


def log_binom_pmf(X: np.ndarray, n: int, p2: float) -> np.ndarray:
    """log B(X, n | p2) by log-gamma; B(0, 0 | p2) = 1."""
    X = np.asarray(X, dtype=float)
    out = gammaln(n + 1) - gammaln(X + 1) - gammaln(n - X + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if p2 > 0:
            out = out + X * math.log(p2)
        else:
            out = np.where(X > 0, -np.inf, out)
        if p2 < 1:
            out = out + (n - X) * math.log1p(-p2)
        else:
            out = np.where(X < n, -np.inf, out)
    return out


def _weights(model: BernoulliModel, X: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    g1 = np.zeros(X.size)
    g2 = np.zeros(X.size)
    for p2, q in model.prior:
        if q == 0 or p2 == model.p:
            continue
        term = abs(p2 - model.p) * q * np.exp(log_binom_pmf(X, n, p2))
        if p2 > model.p:
            g1 += term
        else:
            g2 += term
    return g1, g2


@dataclass
class BernoulliRiskTable:
    model: BernoulliModel
    table: list[np.ndarray]  # table[n - n0][X] = R~(X, n), n = n0..N
    actions: list[np.ndarray]

    def at(self, X: int, n: int) -> float:
        return float(self.table[n - self.model.n0][X])


def solve_bernoulli_table(model: BernoulliModel, max_N: int = DEFAULT_MAX_N) -> BernoulliRiskTable:
    if model.N > max_N:
        raise ConfigError(f"N={model.N} exceeds the exact-table cap {max_N}")
    N, n0 = model.N, model.n0
    r_next = np.zeros(N + 1)
    table: list[np.ndarray] = [r_next]
    actions: list[np.ndarray] = [np.zeros(N + 1, dtype=np.int8)]
    for n in range(N - 1, n0 - 1, -1):
        X = np.arange(n + 1, dtype=float)
        g1, g2 = _weights(model, X, n)
        r1 = (N - n) * g1
        r2 = g2 + r_next[: n + 1] * (n + 1 - X) / (n + 1) + r_next[1 : n + 2] * (X + 1) / (n + 1)
        act = np.where(r1 <= r2, 1, 2).astype(np.int8)
        r_next = np.where(act == 1, r1, r2)
        table.append(r_next)
        actions.append(act)
    table.reverse()
    actions.reverse()
    return BernoulliRiskTable(model, table, actions)


def solve_bernoulli_dp(model: BernoulliModel, max_N: int = DEFAULT_MAX_N) -> float:
    """Bayesian risk in absolute units (expected number of lost successes)."""
    tab = solve_bernoulli_table(model, max_N)
    return model.forced_loss + float(tab.table[0].sum())


def continuation_risk(model: BernoulliModel, max_N: int = DEFAULT_MAX_N) -> float:
    """Second summand of the risk: expected loss after the forced prefix."""
    return float(solve_bernoulli_table(model, max_N).table[0].sum())


def brute_force_bernoulli(model: BernoulliModel) -> float:
    """Minimum Bayes loss over all deterministic history-dependent strategies.

    The history records every arm played and every outcome, known arm
    included; no structural property of the optimal strategy is assumed.
    """
    if model.N > BRUTE_FORCE_MAX_N:
        raise ConfigError(f"brute force is limited to N <= {BRUTE_FORCE_MAX_N}, got {model.N}")
    p = model.p
    p2 = np.array([a for a, _ in model.prior])
    mass = np.array([q for _, q in model.prior])
    best = np.maximum(p, p2)
    cost1 = best - p
    cost2 = best - p2

    def value(step: int, weights: np.ndarray) -> float:
        # weights[j] = prior mass times probability of the history under atom j
        if step == model.N:
            return 0.0
        v2 = float(weights @ cost2)
        v2 += value(step + 1, weights * p2) + value(step + 1, weights * (1 - p2))
        if step < model.n0:
            return v2
        v1 = float(weights @ cost1)
        v1 += value(step + 1, weights * p) + value(step + 1, weights * (1 - p))
        return min(v1, v2)

    return value(0, mass)


def enumerate_stopping_rules(model: BernoulliModel) -> float:
    """Literal enumeration of all stopping rules (switch to the known arm for good).

    Exponential in N; meant for N <= 4.
    """
    if model.N > 4:
        raise ConfigError("stopping-rule enumeration is limited to N <= 4")
    p = model.p
    prior = model.prior

    @lru_cache(maxsize=None)
    def rules(depth: int) -> tuple:
        # a rule at a decision node: "stop" or ("go", rule_after_fail, rule_after_success)
        if depth == 0:
            return ("stop",)
        sub = rules(depth - 1)
        return ("stop",) + tuple(("go", a, b) for a in sub for b in sub)

    def loss(rule, successes: int, plays: int, p2: float) -> float:
        # expected remaining loss under atom p2, given the path so far
        remaining = model.N - plays
        if rule == "stop":
            return remaining * max(p2 - p, 0.0)
        _, on_fail, on_succ = rule
        return (max(p - p2, 0.0)
                + (1 - p2) * loss(on_fail, successes, plays + 1, p2)
                + p2 * loss(on_succ, successes + 1, plays + 1, p2))

    # forced prefix: each outcome sequence of length n0 gets its own sub-rule
    depth = model.N - model.n0
    prefixes = list(itertools.product((0, 1), repeat=model.n0))
    total = math.inf
    for choice in itertools.product(rules(depth), repeat=len(prefixes)):
        value = 0.0
        for p2, q in prior:
            v = model.n0 * max(p - p2, 0.0)
            for pref, rule in zip(prefixes, choice):
                s = sum(pref)
                prob = p2**s * (1 - p2) ** (model.n0 - s)
                v += prob * loss(rule, s, model.n0, p2)
            value += q * v
        total = min(total, value)
    return total
