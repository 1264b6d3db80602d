"""Sensor layouts, nearest-neighbor and conflict graphs, and the activity state space.

Nodes are indexed ``0..n-1`` throughout the package. The CSV layout format
uses 1-based ids, which are shifted on ingestion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

DEFAULT_ENUMERATION_CAP = 24


class InvalidLayoutError(ValueError):
    pass


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class SensorLayout:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise InvalidLayoutError(f"expected an (n, 2) array of points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidLayoutError("coordinates must be finite")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise InvalidLayoutError("two nodes share identical coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def distance(self, i: int, j: int) -> float:
        return float(np.hypot(*(self.points[i] - self.points[j])))

    def distance_matrix(self) -> np.ndarray:
        diff = self.points[:, None, :] - self.points[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])


def _canonical_edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    node_count: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ValueError(f"edge ({i}, {j}) out of range for {self.node_count} nodes")
            canon.add(_canonical_edge(i, j))
        object.__setattr__(self, "edges", frozenset(canon))

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, frozenset())

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, i + 1) for i in range(n - 1)))

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for i, j in sorted(self.edges):
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def neighbor_masks(self) -> list[int]:
        masks = [0] * self.node_count
        for i, j in self.edges:
            masks[i] |= 1 << j
            masks[j] |= 1 << i
        return masks

    def components(self) -> list[list[int]]:
        adj = self.neighbors()
        seen = [False] * self.node_count
        comps = []
        for start in range(self.node_count):
            if seen[start]:
                continue
            seen[start] = True
            stack, comp = [start], []
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        return comps

    def is_forest(self) -> bool:
        # a graph is acyclic iff |E| = n - (number of components)
        return len(self.edges) == self.node_count - len(self.components())


@dataclass(frozen=True)
class ActivityState:
    """Incidence vector of the simultaneously active nodes.

    ``mask`` packs the vector into an integer with node ``i`` at bit ``i``.
    """

    mask: int
    n: int

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.n:
            raise ValueError(f"mask {self.mask} does not fit {self.n} nodes")

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "ActivityState":
        mask = 0
        for i, b in enumerate(bits):
            if b not in (0, 1, True, False):
                raise ValueError("bits must be 0/1")
            if b:
                mask |= 1 << i
        return cls(mask, len(bits))

    @classmethod
    def from_active(cls, active: Iterable[int], n: int) -> "ActivityState":
        mask = 0
        for i in active:
            mask |= 1 << i
        return cls(mask, n)

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.mask >> i) & 1 for i in range(self.n))

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if (self.mask >> i) & 1)

    @property
    def active_count(self) -> int:
        return bin(self.mask).count("1")

    def bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)

    def __repr__(self):
        return f"ActivityState({self.bitstring()})"


def build_nn_graph(layout: SensorLayout) -> Graph:
    """Undirected Euclidean nearest-neighbor graph.

    Node ``i`` links to its nearest other node; equidistant candidates resolve
    to the lowest index. The result is always a forest.
    """
    n = layout.n
    if n == 1:
        return Graph.empty(1)
    d = layout.distance_matrix()
    np.fill_diagonal(d, np.inf)
    nearest = np.argmin(d, axis=1)  # first minimum, i.e. lowest index on ties
    return Graph(n, frozenset(_canonical_edge(i, int(j)) for i, j in enumerate(nearest)))


def is_independent(state: ActivityState, conflict: Graph) -> bool:
    if state.n != conflict.node_count:
        raise ValueError(
            f"state has {state.n} entries but the graph has {conflict.node_count} nodes"
        )
    m = state.mask
    return not any((m >> i) & 1 and (m >> j) & 1 for i, j in conflict.edges)


def _independent_masks(n: int, nbr: list[int]) -> Iterator[int]:
    # depth-first over nodes; node i may join only if no chosen neighbor is active
    stack = [(0, 0)]
    while stack:
        i, mask = stack.pop()
        if i == n:
            yield mask
            continue
        stack.append((i + 1, mask))
        if not nbr[i] & mask:
            stack.append((i + 1, mask | (1 << i)))


def enumerate_states(conflict: Graph, cap: int = DEFAULT_ENUMERATION_CAP) -> list[ActivityState]:
    """All independent sets of ``conflict``, ordered by ascending mask.

    The empty state is always first. For a 3-node path this gives
    ``(000, 100, 010, 001, 101)``.
    """
    n = conflict.node_count
    if n > cap:
        raise CapacityError(f"{n} nodes exceeds the enumeration cap of {cap}")
    masks = sorted(_independent_masks(n, conflict.neighbor_masks()))
    return [ActivityState(m, n) for m in masks]


def state_matrix(states: Sequence[ActivityState]) -> np.ndarray:
    """Stack states into a ``(len(states), n)`` 0/1 integer array."""
    if not states:
        return np.zeros((0, 0), dtype=np.int8)
    n = states[0].n
    masks = np.array([s.mask for s in states], dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(np.int8)


def read_layout_csv(path: str | Path) -> SensorLayout:
    """Read ``id,x,y`` rows with contiguous 1-based ids."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "x", "y"} <= set(reader.fieldnames):
            raise InvalidLayoutError(f"{path}: expected header id,x,y")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            try:
                rows.append((int(row["id"]), float(row["x"]), float(row["y"])))
            except (TypeError, ValueError) as exc:
                raise InvalidLayoutError(f"{path}:{line_no}: {exc}") from None
    rows.sort()
    ids = [r[0] for r in rows]
    if ids != list(range(1, len(rows) + 1)):
        raise InvalidLayoutError(f"{path}: ids must be contiguous 1..n")
    return SensorLayout(np.array([[x, y] for _, x, y in rows]))


def write_layout_csv(layout: SensorLayout, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y"])
        for i, (x, y) in enumerate(layout.points, start=1):
            w.writerow([i, repr(float(x)), repr(float(y))])
