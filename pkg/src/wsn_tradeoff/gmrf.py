"""Gauss-Markov random field measurement model over the nearest-neighbor forest."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from wsn_tradeoff.topology import ActivityState, Graph, SensorLayout

SINGULAR_RTOL = 1e-12


class ModelError(ValueError):
    pass


class UnsupportedStructureError(ModelError):
    pass


@dataclass(frozen=True)
class ConstantDecay:
    """Same correlation ``c`` on every edge regardless of its length."""

    c: float

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"constant decay must lie in (0, 1), got {self.c}")

    def __call__(self, d: float) -> float:
        return 1.0 if d == 0 else self.c


@dataclass(frozen=True)
class ExponentialDecay:
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"decay scale must be positive, got {self.rho}")

    def __call__(self, d: float) -> float:
        return math.exp(-d / self.rho)


@dataclass(frozen=True)
class IIDDecay:
    def __call__(self, d: float) -> float:
        return 1.0 if d == 0 else 0.0


def parse_decay(text: str):
    """Parse ``iid``, ``const:C`` or ``exp:RHO``."""
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    if kind == "iid":
        return IIDDecay()
    if kind in ("const", "constant"):
        return ConstantDecay(float(arg))
    if kind in ("exp", "exponential"):
        return ExponentialDecay(float(arg))
    raise ValueError(f"unknown decay {text!r}; expected iid, const:C or exp:RHO")


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """Two Gaussian hypotheses with means 0 and 1 and shared covariance."""

    sigma: np.ndarray
    precision: np.ndarray
    noise_var: float
    graph: Graph
    edge_corr: dict

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    @property
    def mu0(self) -> np.ndarray:
        return np.zeros(self.n)

    @property
    def mu1(self) -> np.ndarray:
        return np.ones(self.n)

    def marginal_cov(self, state: ActivityState) -> np.ndarray:
        idx = list(state.active)
        return self.sigma[np.ix_(idx, idx)]


def _path_products(layout: SensorLayout, graph: Graph, decay) -> np.ndarray:
    n = graph.node_count
    adj = graph.neighbors()
    corr = np.zeros((n, n))
    for root in range(n):
        corr[root, root] = 1.0
        stack = [root]
        seen = {root}
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    corr[root, v] = corr[root, u] * decay(layout.distance(u, v))
                    stack.append(v)
    return corr


def build_model(layout: SensorLayout, nn_graph: Graph, noise_var: float, decay) -> MeasurementModel:
    """Covariance with the given edge correlations and a precision supported on the forest.

    Off-edge entries are products of edge correlations along the unique tree
    path (zero across components), which is exactly the completion whose
    inverse vanishes on non-edges.
    """
    if nn_graph.node_count != layout.n:
        raise ValueError("graph and layout disagree on the number of nodes")
    if not noise_var > 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    if not nn_graph.is_forest():
        raise UnsupportedStructureError("covariance completion requires an acyclic graph")
    sigma = noise_var * _path_products(layout, nn_graph, decay)
    sigma = 0.5 * (sigma + sigma.T)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ModelError("covariance is not positive definite") from None
    precision = np.linalg.inv(sigma)
    precision = 0.5 * (precision + precision.T)
    sigma.setflags(write=False)
    precision.setflags(write=False)
    edge_corr = {e: float(sigma[e] / noise_var) for e in sorted(nn_graph.edges)}
    return MeasurementModel(sigma, precision, float(noise_var), nn_graph, edge_corr)


def mahalanobis_sq(model: MeasurementModel, state: ActivityState) -> float:
    """Squared Mahalanobis distance ``1' S^-1 1`` on the active nodes' marginal."""
    if state.n != model.n:
        raise ValueError("state length does not match the model")
    if state.mask == 0:
        return 0.0
    sub = model.marginal_cov(state)
    if np.linalg.eigvalsh(sub)[0] < SINGULAR_RTOL * model.noise_var:
        raise ModelError(f"marginal covariance of {state} is singular")
    ones = np.ones(sub.shape[0])
    return float(ones @ np.linalg.solve(sub, ones))


def mahalanobis_sq_closed_full(model: MeasurementModel) -> float:
    """Edge-sum closed form for the all-active distance on a forest model."""
    s2 = model.noise_var
    total = model.n / s2
    for g in model.edge_corr.values():
        total -= 2.0 / s2 * g / (1.0 + g)
    return total
