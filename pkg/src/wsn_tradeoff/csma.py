"""Product-form CSMA activity process: stationary law, throughput, lifetimes, sample budget."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import comb

from wsn_tradeoff.topology import ActivityState, state_matrix

EQUAL_LIFETIME_RTOL = 1e-9
LIFETIME_POLICIES = ("min-lifetime", "per-node")


@dataclass(frozen=True)
class BackoffConfig:
    rates: tuple

    def __post_init__(self):
        rates = tuple(float(r) for r in np.atleast_1d(self.rates))
        if not rates:
            raise ValueError("at least one back-off rate is required")
        for r in rates:
            if not (r > 0 and math.isfinite(r)):
                raise ValueError(f"back-off rates must be positive and finite, got {r}")
        object.__setattr__(self, "rates", rates)

    @classmethod
    def uniform(cls, n: int, nu: float) -> "BackoffConfig":
        return cls((nu,) * n)

    @classmethod
    def chain3(cls, eta: float) -> "BackoffConfig":
        """Rates ``(eta, eta*(eta+1), eta)`` equalizing throughput on a 3-node path."""
        return cls((eta, eta * (eta + 1.0), eta))

    def as_array(self) -> np.ndarray:
        return np.array(self.rates)


@dataclass(frozen=True)
class EnergyBudget:
    l: float
    alpha: float

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError(f"battery budget l must be positive, got {self.l}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"training fraction alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class CsmaAnalysis:
    states: list
    pi: np.ndarray
    z: float
    throughput: np.ndarray
    lifetime: np.ndarray
    op_lifetime: np.ndarray
    samples: np.ndarray
    common_lifetime: float

    @property
    def active_counts(self) -> np.ndarray:
        return np.array([s.active_count for s in self.states])


def stationary_distribution(states: Sequence[ActivityState], backoff: BackoffConfig):
    """Return ``(pi, Z)`` with ``pi(w)`` proportional to the product of active rates."""
    if len(states) == 0:
        raise ValueError("state list is empty")
    bits = state_matrix(states).astype(bool)
    rates = backoff.as_array()
    if bits.shape[1] != rates.size:
        raise ValueError(f"{rates.size} rates for {bits.shape[1]} nodes")
    weights = np.prod(np.where(bits, rates, 1.0), axis=1)
    z = float(weights.sum())
    return weights / z, z


def throughput(pi: np.ndarray, states: Sequence[ActivityState]) -> np.ndarray:
    return state_matrix(states).T.astype(float) @ np.asarray(pi, dtype=float)


def lifetimes(theta, budget: EnergyBudget):
    """Per-node ``(T, U)``. A node with zero throughput never drains: ``inf``."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        t = np.where(theta > 0, budget.l / np.where(theta > 0, theta, 1.0), np.inf)
    u = (1.0 - budget.alpha) * t
    if budget.alpha == 1.0:
        u = np.zeros_like(t)
    return t, u


def common_lifetime(t: np.ndarray, policy: str = "min-lifetime") -> float:
    """Single network lifetime used to size the training stage.

    ``min-lifetime`` takes the first battery to die; ``per-node`` insists that
    all lifetimes already agree.
    """
    if policy not in LIFETIME_POLICIES:
        raise ValueError(f"unknown lifetime policy {policy!r}")
    t = np.asarray(t, dtype=float)
    lo, hi = float(t.min()), float(t.max())
    if policy == "per-node" and not math.isclose(lo, hi, rel_tol=EQUAL_LIFETIME_RTOL):
        raise ValueError(f"node lifetimes differ ({lo} vs {hi}); set policy='min-lifetime'")
    return lo


def training_samples(pi, T: float, alpha: float) -> np.ndarray:
    """Expected training samples collected in each state, ``alpha * T * pi``."""
    return alpha * T * np.asarray(pi, dtype=float)


def expected_active(pi, states: Sequence[ActivityState]) -> float:
    counts = np.array([s.active_count for s in states], dtype=float)
    return float(np.dot(pi, counts))


def mean_training_samples(weights, m) -> float:
    return float(np.dot(weights, m))


def analyze(
    states: Sequence[ActivityState],
    backoff: BackoffConfig,
    budget: EnergyBudget,
    lifetime_policy: str = "min-lifetime",
) -> CsmaAnalysis:
    pi, z = stationary_distribution(states, backoff)
    theta = throughput(pi, states)
    t, u = lifetimes(theta, budget)
    t_common = common_lifetime(t, lifetime_policy)
    m = training_samples(pi, t_common, budget.alpha) if math.isfinite(t_common) else np.full(len(pi), np.inf)
    if budget.alpha == 0:
        m = np.zeros(len(pi))
    return CsmaAnalysis(list(states), pi, z, theta, t, u, m, t_common)


@dataclass(frozen=True)
class IndepClosedForms:
    pi_k: np.ndarray
    theta: float
    T: float
    U: float
    m_k: np.ndarray


def indep_closed_forms(n: int, nu: float, budget: EnergyBudget) -> IndepClosedForms:
    """Binomial closed forms for ``n`` non-interfering nodes with a common rate."""
    k = np.arange(n + 1)
    binom = comb(n, k, exact=False)
    pi_k = binom * nu**k / (nu + 1.0) ** n
    theta = nu / (nu + 1.0)
    T = budget.l * (nu + 1.0) / nu
    U = (1.0 - budget.alpha) * budget.l * (nu + 1.0) / nu
    m_k = budget.alpha * budget.l * binom * nu ** (k - 1.0) / (nu + 1.0) ** (n - 1)
    return IndepClosedForms(pi_k, theta, T, U, m_k)


@dataclass(frozen=True)
class Chain3ClosedForms:
    """Ordered as ``(empty, e1, e2, e3, e1+e3)``."""

    pi: np.ndarray
    z: float
    theta: float
    T: float
    U: float
    m: np.ndarray


def chain3_closed_forms(eta: float, budget: EnergyBudget) -> Chain3ClosedForms:
    z = 2 * eta**2 + 3 * eta + 1
    pi = np.array([1.0, eta, eta * (eta + 1), eta, eta**2]) / z
    theta = eta / (2 * eta + 1)
    al = budget.alpha * budget.l
    m = np.array([al / (eta**2 + eta), al / (eta + 1), al, al / (eta + 1), al * eta / (eta + 1)])
    T = budget.l * (2 * eta + 1) / eta
    U = (1 - budget.alpha) * T
    return Chain3ClosedForms(pi, z, theta, T, U, m)
