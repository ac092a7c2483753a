"""Network graph, node/link capacities and database caching state."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np


@dataclass
class NetworkGraph:
    """Directed network with processing, transmission and storage capacities.

    Nodes are arbitrary hashable labels; internally everything is indexed by
    position in ``nodes`` and ``edges``.  Capacities are per slot and
    unit-free (compute units, data units, database units).
    """

    nodes: list
    edges: list[tuple]
    proc_capacity: np.ndarray
    tx_capacity: np.ndarray
    storage_capacity: np.ndarray
    cloud_node: Hashable | None = None
    replacement_rate_cap: float = float("inf")
    index: dict = field(init=False, repr=False)
    edge_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = list(self.nodes)
        self.edges = [tuple(e) for e in self.edges]
        self.proc_capacity = np.asarray(self.proc_capacity, dtype=float)
        self.tx_capacity = np.asarray(self.tx_capacity, dtype=float)
        self.storage_capacity = np.asarray(self.storage_capacity, dtype=float)
        n = len(self.nodes)
        if len(set(self.nodes)) != n:
            raise ValueError("duplicate node labels")
        self.index = {v: i for i, v in enumerate(self.nodes)}
        if self.proc_capacity.shape != (n,) or self.storage_capacity.shape != (n,):
            raise ValueError("node capacity arrays must have one entry per node")
        if self.tx_capacity.shape != (len(self.edges),):
            raise ValueError("tx_capacity must have one entry per edge")
        for arr in (self.proc_capacity, self.tx_capacity, self.storage_capacity):
            if np.any(arr < 0) or np.any(np.isnan(arr)):
                raise ValueError("capacities must be nonnegative")
        self.edge_index = {}
        for e, (u, v) in enumerate(self.edges):
            if u not in self.index or v not in self.index:
                raise ValueError(f"edge {(u, v)} references an unknown node")
            if u == v:
                raise ValueError(f"self-loop at {u}")
            key = (self.index[u], self.index[v])
            if key in self.edge_index:
                raise ValueError(f"duplicate edge {(u, v)}")
            self.edge_index[key] = e
        if self.cloud_node is not None and self.cloud_node not in self.index:
            raise ValueError("cloud_node is not a node of the graph")
        self.tail = np.array([k[0] for k in self.edge_index], dtype=np.int64)
        self.head = np.array([k[1] for k in self.edge_index], dtype=np.int64)
        self.out_edges = [[] for _ in range(n)]
        self.in_edges = [[] for _ in range(n)]
        for (u, v), e in self.edge_index.items():
            self.out_edges[u].append(e)
            self.in_edges[v].append(e)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def cloud_index(self) -> int | None:
        return None if self.cloud_node is None else self.index[self.cloud_node]

    def link(self, i: int, j: int) -> int:
        """Edge index of the link between node indices ``i`` and ``j``."""
        return self.edge_index[(i, j)]

    def scaled(self, proc_factor: float = 1.0, tx_factor: float = 1.0) -> "NetworkGraph":
        """Copy with all processing / transmission capacities multiplied."""
        return NetworkGraph(
            self.nodes,
            self.edges,
            self.proc_capacity * proc_factor,
            self.tx_capacity * tx_factor,
            self.storage_capacity.copy(),
            cloud_node=self.cloud_node,
            replacement_rate_cap=self.replacement_rate_cap,
        )


class CachingVector:
    """Binary placement ``x[i, k]`` of databases on nodes.

    The cloud node (if the graph has one) holds every database implicitly:
    its row is never stored and never counts against storage.
    """

    def __init__(self, x, database_sizes: Sequence[float], cloud_index: int | None = None):
        x = np.array(x, dtype=np.int8)
        if x.ndim != 2:
            raise ValueError("caching matrix must be 2-D (nodes x databases)")
        if not np.all((x == 0) | (x == 1)):
            raise ValueError("caching entries must be 0 or 1")
        self.sizes = np.asarray(database_sizes, dtype=float)
        if self.sizes.shape != (x.shape[1],):
            raise ValueError("one size per database required")
        self.cloud_index = cloud_index
        if cloud_index is not None:
            x[cloud_index, :] = 0
        self.x = x

    @classmethod
    def empty(cls, graph: NetworkGraph, database_sizes: Sequence[float]) -> "CachingVector":
        return cls(np.zeros((graph.n_nodes, len(database_sizes)), dtype=np.int8),
                   database_sizes, graph.cloud_index)

    @classmethod
    def from_assignment(cls, graph: NetworkGraph, database_sizes: Sequence[float],
                        assignment: dict) -> "CachingVector":
        """Build from ``{node_label: iterable of database ids}``."""
        cv = cls.empty(graph, database_sizes)
        for node, dbs in assignment.items():
            for k in dbs:
                cv.x[graph.index[node], k] = 1
        if cv.cloud_index is not None:
            cv.x[cv.cloud_index, :] = 0
        return cv

    @property
    def n_databases(self) -> int:
        return self.x.shape[1]

    def copy(self) -> "CachingVector":
        return CachingVector(self.x.copy(), self.sizes, self.cloud_index)

    def with_entry(self, i: int, k: int, value: int) -> "CachingVector":
        out = self.copy()
        if i != self.cloud_index:
            out.x[i, k] = value
        return out

    def has(self, i: int, k: int) -> bool:
        return i == self.cloud_index or bool(self.x[i, k])

    def source_mask(self, k: int) -> np.ndarray:
        """Boolean mask over node indices of the static sources of ``k``."""
        self._check_db(k)
        mask = self.x[:, k].astype(bool)
        if self.cloud_index is not None:
            mask[self.cloud_index] = True
        return mask

    def _check_db(self, k):
        if not (0 <= k < self.x.shape[1]):
            raise KeyError(f"unknown database id {k}")

    def __eq__(self, other):
        return isinstance(other, CachingVector) and np.array_equal(self.x, other.x)

    def __ge__(self, other):
        return bool(np.all(self.x >= other.x))

    def key(self) -> bytes:
        return self.x.tobytes()

    def assignment(self, graph: NetworkGraph) -> dict:
        return {graph.nodes[i]: [int(k) for k in np.flatnonzero(self.x[i])]
                for i in range(self.x.shape[0]) if self.x[i].any()}


def static_sources(x: CachingVector, k: int) -> set[int]:
    """Node indices that can replicate database ``k`` (cloud included)."""
    return {int(i) for i in np.flatnonzero(x.source_mask(k))}


def check_storage_feasible(x: CachingVector, g: NetworkGraph) -> tuple[bool, list[tuple[int, float, float]]]:
    """Storage constraint at every node: returns (ok, [(node, used, capacity)...])."""
    if x.x.shape[0] != g.n_nodes:
        raise ValueError("caching vector shape does not match the graph")
    used = x.x @ x.sizes
    violations = [(i, float(used[i]), float(g.storage_capacity[i]))
                  for i in range(g.n_nodes)
                  if i != g.cloud_index and used[i] > g.storage_capacity[i] + 1e-9]
    return not violations, violations


def grid_graph(rows: int, cols: int, proc: float, link: float, storage: float = 0.0,
               labels: Iterable | None = None) -> NetworkGraph:
    """Bidirectional 4-neighbour grid, nodes numbered row-major from 1."""
    labels = list(labels) if labels is not None else list(range(1, rows * cols + 1))
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = labels[r * cols + c]
            if c + 1 < cols:
                v = labels[r * cols + c + 1]
                edges += [(u, v), (v, u)]
            if r + 1 < rows:
                v = labels[(r + 1) * cols + c]
                edges += [(u, v), (v, u)]
    n = rows * cols
    return NetworkGraph(labels, edges, np.full(n, proc), np.full(len(edges), link),
                        np.full(n, storage))
