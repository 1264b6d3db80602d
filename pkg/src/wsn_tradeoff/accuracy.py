"""Finite-sample FDA accuracy, per-state weighting, and the known-likelihood baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import comb, erfc

from wsn_tradeoff.gmrf import MeasurementModel, mahalanobis_sq
from wsn_tradeoff.topology import ActivityState

GROUPINGS = ("state", "active_count")


def norm_cdf(x):
    """Standard normal CDF, ``erfc(-x / sqrt 2) / 2``."""
    out = 0.5 * erfc(-np.asarray(x, dtype=float) / np.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def raudys_accuracy(delta_sq, n_active, m):
    """Approximate generalization accuracy of plug-in FDA.

    Uses ``Phi(delta/2 * [(1 + 4n/(m delta^2)) m/(m-n)]^-1/2)`` for ``m > n``
    and returns 0.5 when there is nothing to learn from (``n = 0``,
    ``delta = 0``) or too few samples (``m <= n``). Broadcasts over arrays.
    """
    d2 = np.asarray(delta_sq, dtype=float)
    k = np.asarray(n_active, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(d2 < 0) or np.any(k < 0) or np.any(m < 0):
        raise ValueError("raudys_accuracy inputs must be nonnegative")
    d2, k, m = np.broadcast_arrays(d2, k, m)
    ok = (k > 0) & (d2 > 0) & (m > k)
    out = np.full(d2.shape, 0.5)
    if np.any(ok):
        d2o, ko, mo = d2[ok], k[ok], m[ok]
        with np.errstate(over="ignore", invalid="ignore"):
            bracket = (1.0 + 4.0 * ko / (mo * d2o)) * (mo / (mo - ko))
            arg = 0.5 * np.sqrt(d2o / bracket)
        # m = inf takes the large-sample limit Phi(delta/2)
        arg = np.where(np.isinf(mo), 0.5 * np.sqrt(d2o), arg)
        out[ok] = norm_cdf(arg)
    return float(out) if out.ndim == 0 else out


def classifier_groups(states: Sequence[ActivityState], grouping: str = "state") -> np.ndarray:
    """Index of the classifier that serves each state.

    ``state`` trains one classifier per activity state. ``active_count`` pools
    every state with the same number of active nodes into one classifier fed
    the active readings in node order; this is only sound when such states
    are exchangeable (i.i.d. readings, no interference).
    """
    if grouping == "state":
        return np.arange(len(states))
    if grouping == "active_count":
        return np.array([s.active_count for s in states])
    raise ValueError(f"unknown grouping {grouping!r}; expected one of {GROUPINGS}")


def pooled_samples(m, groups: np.ndarray) -> np.ndarray:
    """Per-state sample count seen by that state's classifier."""
    m = np.asarray(m, dtype=float)
    totals = np.zeros(groups.max() + 1 if groups.size else 0)
    np.add.at(totals, groups, m)
    return totals[groups]


@dataclass(frozen=True, eq=False)
class AccuracyBreakdown:
    per_state: np.ndarray
    weights: np.ndarray
    total: float
    bayes_total: float
    delta_sq: np.ndarray
    m_effective: np.ndarray


def state_delta_sq(model: MeasurementModel, states: Sequence[ActivityState]) -> np.ndarray:
    return np.array([mahalanobis_sq(model, s) for s in states])


def bayes_accuracy(pi, delta_sq) -> float:
    """Accuracy of the known-likelihood rule, ``sum pi * Phi(delta/2)``."""
    return float(np.dot(pi, norm_cdf(0.5 * np.sqrt(np.asarray(delta_sq, dtype=float)))))


def state_weighted_accuracy(
    analysis,
    model: MeasurementModel,
    grouping: str = "state",
    delta_sq: np.ndarray | None = None,
) -> AccuracyBreakdown:
    states = analysis.states
    if states and states[0].n != model.n:
        raise ValueError("analysis and model disagree on the number of nodes")
    if delta_sq is None:
        delta_sq = state_delta_sq(model, states)
    counts = np.array([s.active_count for s in states])
    m_eff = pooled_samples(analysis.samples, classifier_groups(states, grouping))
    per_state = np.atleast_1d(raudys_accuracy(delta_sq, counts, m_eff))
    total = float(np.dot(analysis.pi, per_state))
    return AccuracyBreakdown(
        per_state, analysis.pi, total, bayes_accuracy(analysis.pi, delta_sq), delta_sq, m_eff
    )


def indep_accuracy_closed_form(n: int, nu: float, alpha: float, l: float, sigma_sq: float) -> float:
    """Binomial-sum accuracy for ``n`` i.i.d. non-interfering nodes.

    Evaluated term by term with ``delta^2 = k / sigma^2`` and the pooled
    per-count sample budget; independent of the state-space engine.
    """
    total = 0.0
    sigma = np.sqrt(sigma_sq)
    for k in range(n + 1):
        c = comb(n, k, exact=True)
        weight = c * nu**k / (nu + 1.0) ** n
        mk = alpha * l * c * nu ** (k - 1.0) / (nu + 1.0) ** (n - 1)
        if k == 0 or mk <= k:
            acc = 0.5
        else:
            acc = norm_cdf(np.sqrt(k) / (2 * sigma) * ((1 + 4 * sigma_sq / mk) * mk / (mk - k)) ** -0.5)
        total += weight * acc
    return total


def chain3_accuracy_closed_form(
    eta: float, alpha: float, l: float, sigma_sq: float, g12: float, g23: float
) -> float:
    """Five-state weighted accuracy for the throughput-equalized 3-node path."""
    z = 2 * eta**2 + 3 * eta + 1
    al = alpha * l
    sigma = np.sqrt(sigma_sq)

    def single(m):
        if m <= 1:
            return 0.5
        return norm_cdf(1 / (2 * sigma) * ((1 + 4 * sigma_sq / m) * m / (m - 1)) ** -0.5)

    m1, m2, m3, m13 = al / (eta + 1), al, al / (eta + 1), al * eta / (eta + 1)
    d2 = 2 / sigma_sq / (1 + g12 * g23)
    if m13 <= 2:
        pair = 0.5
    else:
        pair = norm_cdf(np.sqrt(d2) / 2 * ((1 + 8 / (m13 * d2)) * m13 / (m13 - 2)) ** -0.5)
    return (
        0.5 + eta * single(m1) + (eta**2 + eta) * single(m2) + eta * single(m3) + eta**2 * pair
    ) / z
