"""Network presets: independent nodes, the 3-node path, and CSV-defined layouts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from wsn_tradeoff.accuracy import classifier_groups, state_delta_sq
from wsn_tradeoff.csma import BackoffConfig
from wsn_tradeoff.gmrf import ConstantDecay, IIDDecay, MeasurementModel, build_model
from wsn_tradeoff.topology import Graph, SensorLayout, build_nn_graph, enumerate_states


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to evaluate lifetime and accuracy at a rate/alpha point.

    ``rate_map`` turns the scalar control knob into per-node back-off rates;
    ``rate_asymptotics`` gives ``(coefficient, degree)`` per node such that
    ``rate_i ~ coefficient * r**degree`` as the knob ``r`` grows.
    """

    name: str
    layout: SensorLayout
    nn_graph: Graph
    conflict: Graph
    model: MeasurementModel
    l: float
    rate_map: Callable[[float], BackoffConfig]
    rate_asymptotics: tuple
    grouping: str = "state"
    lifetime_policy: str = "min-lifetime"
    states: list = field(init=False)
    delta_sq: np.ndarray = field(init=False)
    groups: np.ndarray = field(init=False)

    def __post_init__(self):
        states = enumerate_states(self.conflict)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "delta_sq", state_delta_sq(self.model, states))
        object.__setattr__(self, "groups", classifier_groups(states, self.grouping))

    @property
    def n(self) -> int:
        return self.layout.n

    def group_labels(self) -> list[str]:
        """One label per classifier group, in group-index order."""
        if self.grouping == "active_count":
            return [f"k{k}" for k in range(self.groups.max() + 1)]
        return ["s" + s.bitstring() for s in self.states]


def line_layout(n: int, spacing: float = 1.0) -> SensorLayout:
    return SensorLayout(np.column_stack([spacing * np.arange(n), np.zeros(n)]))


def indep_scenario(n: int = 8, l: float = 100.0, sigma_sq: float = 1.0) -> Scenario:
    """``n`` non-interfering nodes with i.i.d. readings and a shared rate."""
    layout = line_layout(n)
    nn = build_nn_graph(layout)
    model = build_model(layout, nn, sigma_sq, IIDDecay())
    return Scenario(
        name="indep",
        layout=layout,
        nn_graph=nn,
        conflict=Graph.empty(n),
        model=model,
        l=l,
        rate_map=lambda nu: BackoffConfig.uniform(n, nu),
        rate_asymptotics=((1.0, 1),) * n,
        grouping="active_count",
    )


def chain3_scenario(l: float = 10.0, sigma_sq: float = 1.0, g: float = 0.25) -> Scenario:
    """Three nodes on a line; the middle one conflicts with both ends."""
    layout = line_layout(3)
    nn = build_nn_graph(layout)
    model = build_model(layout, nn, sigma_sq, ConstantDecay(g))
    return Scenario(
        name="chain3",
        layout=layout,
        nn_graph=nn,
        conflict=nn,
        model=model,
        l=l,
        rate_map=BackoffConfig.chain3,
        rate_asymptotics=((1.0, 1), (1.0, 2), (1.0, 1)),
        grouping="state",
    )


def custom_scenario(
    layout: SensorLayout,
    l: float,
    sigma_sq: float,
    decay,
    conflict: Graph | None = None,
    grouping: str = "state",
    lifetime_policy: str = "min-lifetime",
) -> Scenario:
    """Arbitrary layout; the conflict graph defaults to the nearest-neighbor graph."""
    nn = build_nn_graph(layout)
    n = layout.n
    return Scenario(
        name="custom",
        layout=layout,
        nn_graph=nn,
        conflict=nn if conflict is None else conflict,
        model=build_model(layout, nn, sigma_sq, decay),
        l=l,
        rate_map=lambda nu: BackoffConfig.uniform(n, nu),
        rate_asymptotics=((1.0, 1),) * n,
        grouping=grouping,
        lifetime_policy=lifetime_policy,
    )
