"""Brute-force reference implementations used to cross-check the fast paths.

Everything here is deliberately naive: it enumerates, it does not optimise.
"""

from __future__ import annotations

import itertools

import numpy as np

from .alg import EfficientRoute
from .services import Client, cumulative_scaling
from .topology import CachingVector, NetworkGraph


def simple_paths(graph: NetworkGraph, u: int, v: int) -> list[tuple]:
    """All simple directed paths ``u -> v`` (node-index tuples) by DFS."""
    out = []
    stack = [(u, (u,))]
    while stack:
        node, path = stack.pop()
        if node == v:
            out.append(path)
            continue
        for e in graph.out_edges[node]:
            w = int(graph.head[e])
            if w not in path:
                stack.append((w, path + (w,)))
    return sorted(out)


def _unit(q, cap):
    if cap <= 0:
        return np.inf
    return q / cap / cap


def _edge_cost(load, unit):
    if load == 0:
        return 0.0 if np.isfinite(unit) else np.inf
    return load * unit


def _path_cost(graph, path, load, qlink):
    total = 0.0
    for a, b in zip(path[:-1], path[1:]):
        e = graph.edge_index[(a, b)]
        total += _edge_cost(load, _unit(qlink[e], graph.tx_capacity[e]))
    return total


def er_weight(route: EfficientRoute, client: Client, graph: NetworkGraph, qnode, qlink) -> float:
    """Edge-by-edge ER weight recomputed from raw queues and capacities."""
    spec = client.service
    xi = cumulative_scaling(spec)
    total = 0.0
    for m, p in enumerate(route.live_paths, start=1):
        total += _path_cost(graph, p, xi[m - 1], qlink)
    for m, f in enumerate(spec.functions, start=1):
        total += _path_cost(graph, route.static_paths[m - 1], xi[m - 1] * f.merging, qlink)
        i = route.theta[m - 1]
        total += _edge_cost(xi[m - 1] * f.workload, _unit(qnode[i], graph.proc_capacity[i]))
    return total


def enumerate_routes(client: Client, x: CachingVector, graph: NetworkGraph):
    """Every efficient route of ``client`` (all theta, sources and simple paths)."""
    spec = client.service
    M = spec.n_stages
    n = graph.n_nodes
    cache = {}

    def paths(a, b):
        if (a, b) not in cache:
            cache[(a, b)] = simple_paths(graph, a, b)
        return cache[(a, b)]

    for theta in itertools.product(range(n), repeat=M - 1):
        stops = (client.source,) + theta + (client.destination,)
        live_options = [paths(stops[m], stops[m + 1]) for m in range(M)]
        static_options = []
        for m, f in enumerate(spec.functions, start=1):
            srcs = np.flatnonzero(x.source_mask(f.database))
            static_options.append([(int(v), p) for v in srcs for p in paths(int(v), theta[m - 1])])
        for live in itertools.product(*live_options):
            for stat in itertools.product(*static_options):
                yield EfficientRoute(0, theta, live, tuple(v for v, _ in stat),
                                     tuple(p for _, p in stat))


def brute_force_min_er(client: Client, x: CachingVector, graph: NetworkGraph, qnode, qlink,
                       exhaustive: bool = True):
    """Minimum ER weight by enumeration; returns ``(weight, route)`` or ``(inf, None)``.

    With ``exhaustive=False`` each route segment is minimised separately for
    every theta tuple (valid since the weight is a sum over segments).
    """
    best, best_route = np.inf, None
    if exhaustive:
        for r in enumerate_routes(client, x, graph):
            w = er_weight(r, client, graph, qnode, qlink)
            if w < best:
                best, best_route = w, r
        return best, best_route
    spec = client.service
    M = spec.n_stages
    xi = cumulative_scaling(spec)
    n = graph.n_nodes
    for theta in itertools.product(range(n), repeat=M - 1):
        stops = (client.source,) + theta + (client.destination,)
        total = 0.0
        for m in range(M):
            total += min((_path_cost(graph, p, xi[m], qlink)
                          for p in simple_paths(graph, stops[m], stops[m + 1])), default=np.inf)
        for m, f in enumerate(spec.functions, start=1):
            srcs = np.flatnonzero(x.source_mask(f.database))
            total += min((_path_cost(graph, p, xi[m - 1] * f.merging, qlink)
                          for v in srcs for p in simple_paths(graph, int(v), theta[m - 1])),
                         default=np.inf)
            i = theta[m - 1]
            total += _edge_cost(xi[m - 1] * f.workload, _unit(qnode[i], graph.proc_capacity[i]))
        if total < best:
            best = total
    return best, None


def knapsack_exhaustive(values, sizes, capacity) -> tuple[float, tuple]:
    """Best subset by trying all of them; ties go to the lexicographically smallest."""
    n = len(values)
    best, best_set = 0.0, ()
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            if sum(sizes[i] for i in combo) > capacity:
                continue
            v = sum(values[i] for i in combo)
            if v > best or (v == best and combo < best_set):
                best, best_set = v, combo
    return best, best_set
