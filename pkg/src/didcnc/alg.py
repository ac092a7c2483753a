"""Augmented layered graph (ALG) of a service, edge loads and route loads.

ALG vertices are tuples ``("L", m, i)`` (live copy of node i in layer m),
``("S", m, i)`` (static copy) and ``("O", m)`` (super static source), with
layers numbered from 1 and ``i`` a node index of the actual network.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .services import Client, ServiceSpec, cumulative_scaling
from .topology import CachingVector, NetworkGraph

LIVE_TX = "live_tx"
STATIC_TX = "static_tx"
REPLICATE = "replicate"
LIVE_PROC = "live_proc"
STATIC_PROC = "static_proc"
EDGE_KINDS = (LIVE_TX, STATIC_TX, REPLICATE, LIVE_PROC, STATIC_PROC)


class AlgEdge(NamedTuple):
    """One ALG edge. ``head`` is unused (-1) for processing / replication kinds."""

    kind: str
    stage: int
    tail: int
    head: int = -1

    def endpoints(self):
        m, i, j = self.stage, self.tail, self.head
        if self.kind == LIVE_TX:
            return ("L", m, i), ("L", m, j)
        if self.kind == STATIC_TX:
            return ("S", m, i), ("S", m, j)
        if self.kind == REPLICATE:
            return ("O", m), ("S", m, i)
        if self.kind == LIVE_PROC:
            return ("L", m, i), ("L", m + 1, i)
        return ("S", m, i), ("L", m + 1, i)


@dataclass
class AugmentedLayeredGraph:
    service: ServiceSpec
    n_stages: int
    vertices: list
    edges: dict[str, list[AlgEdge]]
    infeasible_stages: list[int] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.infeasible_stages

    def all_edges(self):
        for kind in EDGE_KINDS:
            yield from self.edges[kind]

    def to_text(self, graph: NetworkGraph) -> str:
        """Plain edge list, one ``kind stage tail head`` line per edge."""
        lines = [f"# alg service={self.service.id} stages={self.n_stages} "
                 f"vertices={len(self.vertices)} edges={sum(len(v) for v in self.edges.values())}"]
        for e in self.all_edges():
            u, v = e.endpoints()
            lines.append(f"{e.kind} {e.stage} {_vlabel(u, graph)} {_vlabel(v, graph)}")
        return "\n".join(lines) + "\n"


def _vlabel(v, graph):
    if v[0] == "O":
        return f"o'{v[1]}"
    tag = "" if v[0] == "L" else "'"
    return f"{graph.nodes[v[2]]}{tag}@{v[1]}"


def build_alg(spec: ServiceSpec, x: CachingVector, g: NetworkGraph) -> AugmentedLayeredGraph:
    M = spec.n_stages
    n = g.n_nodes
    vertices = [("L", m, i) for m in range(1, M + 1) for i in range(n)]
    for m in range(1, M):
        vertices += [("S", m, i) for i in range(n)] + [("O", m)]
    links = [(int(g.tail[e]), int(g.head[e])) for e in range(g.n_edges)]
    edges = {k: [] for k in EDGE_KINDS}
    infeasible = []
    for m in range(1, M + 1):
        edges[LIVE_TX] += [AlgEdge(LIVE_TX, m, i, j) for i, j in links]
    for m in range(1, M):
        k = spec.functions[m - 1].database
        edges[STATIC_TX] += [AlgEdge(STATIC_TX, m, i, j) for i, j in links]
        sources = np.flatnonzero(x.source_mask(k))
        if len(sources) == 0:
            infeasible.append(m)
        edges[REPLICATE] += [AlgEdge(REPLICATE, m, int(v)) for v in sources]
        edges[LIVE_PROC] += [AlgEdge(LIVE_PROC, m, i) for i in range(n)]
        edges[STATIC_PROC] += [AlgEdge(STATIC_PROC, m, i) for i in range(n)]
    return AugmentedLayeredGraph(spec, M, vertices, edges, infeasible)


def edge_load(spec: ServiceSpec, edge: AlgEdge, xi: np.ndarray | None = None) -> float:
    """Resource load an initial live unit puts on ``edge`` (zero on replication)."""
    xi = cumulative_scaling(spec) if xi is None else xi
    m = edge.stage
    if edge.kind == LIVE_TX:
        return float(xi[m - 1])
    f = spec.functions[m - 1]
    if edge.kind == LIVE_PROC:
        return float(xi[m - 1] * f.workload)
    if edge.kind == STATIC_TX:
        return float(xi[m - 1] * f.merging)
    return 0.0


@dataclass
class EfficientRoute:
    """Processing locations plus acyclic live/static paths (node indices).

    ``live_paths[m-1]`` runs from the stage-(m-1) processing location (the
    source for m = 1) to the stage-m location (the destination for the last
    stage); ``static_paths[m-1]`` runs from the chosen replica source
    ``sources[m-1]`` to ``theta[m-1]``.
    """

    client: int
    theta: tuple
    live_paths: tuple
    sources: tuple
    static_paths: tuple
    weight: float = 0.0

    def alg_edges(self) -> list[AlgEdge]:
        out = []
        M = len(self.live_paths)
        for m in range(1, M + 1):
            p = self.live_paths[m - 1]
            out += [AlgEdge(LIVE_TX, m, a, b) for a, b in zip(p[:-1], p[1:])]
            if m < M:
                q = self.static_paths[m - 1]
                out.append(AlgEdge(REPLICATE, m, self.sources[m - 1]))
                out += [AlgEdge(STATIC_TX, m, a, b) for a, b in zip(q[:-1], q[1:])]
                out.append(AlgEdge(STATIC_PROC, m, self.theta[m - 1]))
                out.append(AlgEdge(LIVE_PROC, m, self.theta[m - 1]))
        return out

    def key(self) -> tuple:
        return (self.theta, self.live_paths, self.sources, self.static_paths)


def route_loads(route: EfficientRoute, spec: ServiceSpec, g: NetworkGraph):
    """Per-unit loads (rho_node[n], rho_link[E]) a route imposes."""
    xi = cumulative_scaling(spec)
    rho_node = np.zeros(g.n_nodes)
    rho_link = np.zeros(g.n_edges)
    ix = g.edge_index
    for m, p in enumerate(route.live_paths):
        for a, b in zip(p[:-1], p[1:]):
            rho_link[ix[(a, b)]] += xi[m]
    for m, f in enumerate(spec.functions):
        q = route.static_paths[m]
        w = xi[m] * f.merging
        for a, b in zip(q[:-1], q[1:]):
            rho_link[ix[(a, b)]] += w
        rho_node[route.theta[m]] += xi[m] * f.workload
    return rho_node, rho_link


def route_flows(route: EfficientRoute, spec: ServiceSpec) -> dict:
    """ALG edge flows (stage-m packets) from pushing one initial live unit."""
    xi = cumulative_scaling(spec)
    flows = defaultdict(float)
    for e in route.alg_edges():
        m = e.stage
        if e.kind in (LIVE_TX, LIVE_PROC):
            flows[e] += xi[m - 1]
        else:
            flows[e] += xi[m - 1] * spec.functions[m - 1].merging
    return dict(flows)


def flow_conservation_residuals(flows: dict, spec: ServiceSpec, g: NetworkGraph,
                                source: int, destination: int, rate: float = 1.0) -> list:
    """Violations of live/static conservation and merging for ALG flows.

    Returns a list of ``(equation, vertex, residual)`` for residuals above 1e-9.
    """
    M = spec.n_stages
    out_l = defaultdict(float)
    in_l = defaultdict(float)
    out_s = defaultdict(float)
    in_s = defaultdict(float)
    proc_l = defaultdict(float)
    proc_s = defaultdict(float)
    for e, f in flows.items():
        m = e.stage
        if e.kind == LIVE_TX:
            out_l[(m, e.tail)] += f
            in_l[(m, e.head)] += f
        elif e.kind == STATIC_TX:
            out_s[(m, e.tail)] += f
            in_s[(m, e.head)] += f
        elif e.kind == REPLICATE:
            in_s[(m, e.tail)] += f
        elif e.kind == LIVE_PROC:
            proc_l[(m, e.tail)] += f
        else:
            proc_s[(m, e.tail)] += f
    bad = []
    for m in range(1, M + 1):
        for i in range(g.n_nodes):
            produced = 0.0
            if m > 1:
                produced = spec.functions[m - 2].scaling * proc_l[(m - 1, i)]
            inj = rate if (m == 1 and i == source) else 0.0
            sink = rate * cumulative_scaling(spec)[M - 1] if (m == M and i == destination) else 0.0
            r = out_l[(m, i)] + proc_l[(m, i)] + sink - in_l[(m, i)] - produced - inj
            if abs(r) > 1e-9:
                bad.append(("live", ("L", m, i), r))
            if m < M:
                r = out_s[(m, i)] + proc_s[(m, i)] - in_s[(m, i)]
                if abs(r) > 1e-9:
                    bad.append(("static", ("S", m, i), r))
                r = proc_s[(m, i)] - spec.functions[m - 1].merging * proc_l[(m, i)]
                if abs(r) > 1e-9:
                    bad.append(("merging", ("S", m, i), r))
    return bad


def client_alg(client: Client, x: CachingVector, g: NetworkGraph) -> AugmentedLayeredGraph:
    return build_alg(client.service, x, g)
