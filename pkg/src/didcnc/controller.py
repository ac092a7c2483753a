"""Virtual queues, drift-derived ALG weights and min-ER route selection.

The per-slot route search follows the layered dynamic program: all-pairs
shortest paths over the actual graph with per-unit weights ``Q_ij / C_ij``
(normalised queue over capacity), then one ``|V| x |V|`` relaxation per
processing stage.  Ties are broken by smaller weight, then fewer ALG edges,
then lower node index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alg import (LIVE_PROC, LIVE_TX, REPLICATE, STATIC_PROC, STATIC_TX, AlgEdge,
                  EfficientRoute, edge_load, route_loads)
from . import _kernels as _k
from .services import Client, cumulative_scaling
from .topology import CachingVector, NetworkGraph

POLICIES = ("didcnc", "s2l", "l2s")


class RouteInfeasible(Exception):
    """No efficient route exists (unreachable destination or missing database)."""

    def __init__(self, client: int, reason: str, stage: int | None = None):
        super().__init__(f"client {client}: {reason}" + (f" (stage {stage})" if stage else ""))
        self.client = client
        self.reason = reason
        self.stage = stage


class VirtualQueues:
    """Resource-load backlogs per node and link, updated as ``[Q - C + a]^+``."""

    def __init__(self, graph: NetworkGraph):
        self.graph = graph
        self.node = np.zeros(graph.n_nodes)
        self.link = np.zeros(graph.n_edges)

    def copy(self) -> "VirtualQueues":
        out = VirtualQueues(self.graph)
        out.node = self.node.copy()
        out.link = self.link.copy()
        return out

    def normalized(self):
        """Queues divided by capacity (read as queuing delay)."""
        return (_safe_div(self.node, self.graph.proc_capacity),
                _safe_div(self.link, self.graph.tx_capacity))

    def unit_weights(self):
        """Per-unit-load weights ``Q/C`` for nodes and links (inf where C = 0)."""
        qn, ql = self.normalized()
        return (_safe_div(qn, self.graph.proc_capacity, zero_cap=np.inf),
                _safe_div(ql, self.graph.tx_capacity, zero_cap=np.inf))

    def update(self, a_node, a_link):
        update_virtual_queues(self, a_node, a_link)

    def total(self) -> float:
        return float(self.node.sum() + self.link.sum())


def _safe_div(num, cap, zero_cap=None):
    out = np.divide(num, cap, out=np.zeros_like(num, dtype=float), where=cap > 0)
    if zero_cap is not None:
        out[cap <= 0] = zero_cap
    else:
        out[(cap <= 0) & (num > 0)] = np.inf
    return out


def update_virtual_queues(state: VirtualQueues, a_node, a_link) -> VirtualQueues:
    g = state.graph
    a_node = np.asarray(a_node, dtype=float)
    a_link = np.asarray(a_link, dtype=float)
    if np.any(a_node < 0) or np.any(a_link < 0):
        raise ValueError("virtual arrivals must be nonnegative")
    state.node = np.maximum(state.node - g.proc_capacity + a_node, 0.0)
    state.link = np.maximum(state.link - g.tx_capacity + a_link, 0.0)
    return state


def alg_edge_weight(spec, edge: AlgEdge, state: VirtualQueues) -> float:
    """Drift weight of one ALG edge: load times ``Q/C`` of its resource."""
    if edge.kind in (REPLICATE, STATIC_PROC):
        return 0.0
    unit_node, unit_link = state.unit_weights()
    w = edge_load(spec, edge)
    if edge.kind == LIVE_PROC:
        u = unit_node[edge.tail]
    else:
        u = unit_link[state.graph.link(edge.tail, edge.head)]
    if w == 0.0:
        return 0.0 if np.isfinite(u) else np.inf
    return w * u


def floyd_warshall(n: int, tail, head, weight):
    """All-pairs shortest paths keyed by (weight, hop count).

    Returns ``(dist, hops, nxt)`` where ``nxt[i, j]`` is the node after ``i``
    on the chosen path to ``j`` (-1 if unreachable).  Edges with infinite
    weight are skipped; among equal keys the first relaxation found is kept.
    """
    return _k.floyd_warshall_lex(int(n), np.asarray(tail, dtype=np.int64),
                                 np.asarray(head, dtype=np.int64),
                                 np.asarray(weight, dtype=float))


def extract_path(nxt, i: int, j: int) -> tuple:
    """Node sequence ``i -> j`` from a next-hop table (array or nested list)."""
    row = nxt[i]
    if row[j] < 0:
        raise ValueError(f"no path {i}->{j}")
    path = [i]
    while i != j:
        i = int(nxt[i][j])
        path.append(i)
    return tuple(path)


class SlotView:
    """Weighted-graph snapshot of one slot, shared by every client's search."""

    def __init__(self, graph: NetworkGraph, state: VirtualQueues, x: CachingVector):
        self.graph = graph
        self.x = x
        self.unit_node, self.unit_link = state.unit_weights()
        self.dist, self.hops, self.nxt = floyd_warshall(
            graph.n_nodes, graph.tail, graph.head, self.unit_link)
        self.next_hop = self.nxt.tolist()
        self._nearest = {}

    def with_placement(self, x: CachingVector) -> "SlotView":
        """Same queue snapshot, different caching vector (no SP recomputation)."""
        out = object.__new__(SlotView)
        out.graph = self.graph
        out.x = x
        out.unit_node, out.unit_link = self.unit_node, self.unit_link
        out.dist, out.hops, out.nxt = self.dist, self.hops, self.nxt
        out.next_hop = self.next_hop
        out._nearest = {}
        return out

    def nearest_source(self, k: int):
        """Per destination j: (min over sources of SP0(v, j), hops, argmin v)."""
        hit = self._nearest.get(k)
        if hit is not None:
            return hit
        res = _k.nearest_sources(self.dist, self.hops, self.x.source_mask(k))
        self._nearest[k] = res
        return res


def min_er(client: Client, state: VirtualQueues | SlotView, x: CachingVector | None = None,
           graph: NetworkGraph | None = None, client_index: int = 0,
           policy: str = "didcnc") -> EfficientRoute:
    """Minimum-weight efficient route of ``client`` under a queue snapshot.

    ``policy`` selects DI-DCNC (joint), ``"s2l"`` (live route optimised with
    static transmission ignored, then nearest sources attached) or ``"l2s"``
    (processing restricted to static sources).  Raises
    :class:`RouteInfeasible` if no route exists.
    """
    if isinstance(state, SlotView):
        view = state
    else:
        if x is None:
            raise ValueError("caching vector required")
        view = SlotView(graph or state.graph, state, x)
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    spec = client.service
    M = spec.n_stages
    xi = cumulative_scaling(spec)
    D, H, n = view.dist, view.hops, view.graph.n_nodes
    s, d = client.source, client.destination

    L = M - 1
    near = np.empty((L, n))
    near_h = np.empty((L, n))
    near_arg = []
    allowed = np.ones((L, n), dtype=np.bool_)
    coef_static = np.empty(L)
    coef_proc = np.empty(L)
    for m in range(1, M):
        f = spec.functions[m - 1]
        best, best_h, arg = view.nearest_source(f.database)
        if not np.isfinite(best).any():
            raise RouteInfeasible(client_index, "no static source", m)
        near[m - 1] = best
        # S2L ignores the static pipeline entirely, tie-breaks included
        near_h[m - 1] = 0.0 if policy == "s2l" else best_h
        near_arg.append(arg)
        coef_static[m - 1] = 0.0 if policy == "s2l" else xi[m - 1] * f.merging
        coef_proc[m - 1] = xi[m - 1] * f.workload
        if policy == "l2s":
            allowed[m - 1] = view.x.source_mask(f.database)
    W, P = _k.layered_dp(D, H, view.unit_node, s, xi, coef_static, coef_proc, near, near_h,
                         allowed)
    if not np.isfinite(W[d]):
        raise RouteInfeasible(client_index, "destination unreachable")

    theta = [0] * (M - 1)
    cur = d
    for m in range(M - 1, 0, -1):
        cur = int(P[m - 1, cur])
        theta[m - 1] = cur
    stops = [s] + theta + [d]
    nxt = view.next_hop
    live = tuple(extract_path(nxt, stops[m], stops[m + 1]) for m in range(M))
    sources = tuple(int(near_arg[m - 1][theta[m - 1]]) for m in range(1, M))
    static_paths = tuple(extract_path(nxt, sources[m - 1], theta[m - 1]) for m in range(1, M))
    route = EfficientRoute(client_index, tuple(theta), live, sources, static_paths)
    if policy == "s2l":
        route.weight = route_weight(route, spec, view)
    else:
        route.weight = float(W[d])
    return route


def route_weight(route: EfficientRoute, spec, view: SlotView) -> float:
    """ER weight as the sum of weighted ALG edges along the route."""
    xi = cumulative_scaling(spec)
    g = view.graph
    total = 0.0
    for e in route.alg_edges():
        if e.kind in (REPLICATE, STATIC_PROC):
            continue
        w = edge_load(spec, e, xi)
        u = view.unit_node[e.tail] if e.kind == LIVE_PROC else view.unit_link[g.link(e.tail, e.head)]
        if w:
            total += w * u
        elif not np.isfinite(u):
            return np.inf
    return total


def load_weight(rho_node, rho_link, state: VirtualQueues | SlotView) -> float:
    """ER weight from route loads: sum of rho * Q / C over resources."""
    if isinstance(state, SlotView):
        un, ul = state.unit_node, state.unit_link
    else:
        un, ul = state.unit_weights()
    a = rho_node > 0
    b = rho_link > 0
    return float(np.dot(rho_node[a], un[a]) + np.dot(rho_link[b], ul[b]))


@dataclass
class Selection:
    """Routes chosen in one slot: client index -> (route, count, loads)."""

    routes: dict

    def __len__(self):
        return len(self.routes)


def select_routes(arrivals, clients: list[Client], view: SlotView, policy: str = "didcnc",
                  blocked: dict | None = None) -> Selection:
    """Every request of a client in this slot goes on that client's min-ER."""
    chosen = {}
    for c, a in enumerate(arrivals):
        if a <= 0:
            continue
        try:
            r = min_er(clients[c], view, client_index=c, policy=policy)
        except RouteInfeasible:
            if blocked is not None:
                blocked[c] = blocked.get(c, 0) + int(a)
            continue
        loads = route_loads(r, clients[c].service, view.graph)
        chosen[c] = (r, int(a), loads)
    return Selection(chosen)


def virtual_arrivals(selection: Selection, graph: NetworkGraph):
    a_node = np.zeros(graph.n_nodes)
    a_link = np.zeros(graph.n_edges)
    for _, count, (rn, rl) in selection.routes.values():
        a_node += count * rn
        a_link += count * rl
    return a_node, a_link


def s2l_route(client, state, x=None, graph=None, client_index=0):
    return min_er(client, state, x, graph, client_index, policy="s2l")


def l2s_route(client, state, x=None, graph=None, client_index=0):
    return min_er(client, state, x, graph, client_index, policy="l2s")
