"""Compiled inner loops of the per-slot route search."""

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def floyd_warshall_lex(n, tail, head, weight):
    dist = np.full((n, n), INF)
    hops = np.full((n, n), INF)
    nxt = np.full((n, n), -1, dtype=np.int64)
    for e in range(tail.shape[0]):
        w = weight[e]
        if w < INF:
            dist[tail[e], head[e]] = w
            hops[tail[e], head[e]] = 1.0
            nxt[tail[e], head[e]] = head[e]
    for i in range(n):
        dist[i, i] = 0.0
        hops[i, i] = 0.0
        nxt[i, i] = i
    for k in range(n):
        for i in range(n):
            dik = dist[i, k]
            if dik == INF:
                continue
            hik = hops[i, k]
            for j in range(n):
                c = dik + dist[k, j]
                if c < dist[i, j] or (c == dist[i, j] and hik + hops[k, j] < hops[i, j]):
                    dist[i, j] = c
                    hops[i, j] = hik + hops[k, j]
                    nxt[i, j] = nxt[i, k]
    return dist, hops, nxt


@njit(cache=True)
def nearest_sources(dist, hops, mask):
    n = dist.shape[0]
    best = np.full(n, INF)
    besth = np.full(n, INF)
    arg = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        for v in range(n):
            if not mask[v]:
                continue
            d = dist[v, j]
            if d < best[j] or (d == best[j] and hops[v, j] < besth[j]):
                best[j] = d
                besth[j] = hops[v, j]
                arg[j] = v
    return best, besth, arg


@njit(cache=True)
def layered_dp(dist, hops, unit_node, s, xi, coef_static, coef_proc, near, near_h, allowed):
    """Stage-by-stage relaxation; returns final weights and argmin tables."""
    n = dist.shape[0]
    L = coef_static.shape[0]
    W = xi[0] * dist[s].copy()
    HW = hops[s].copy()
    P = np.full((L, n), -1, dtype=np.int64)
    base = np.empty(n)
    hb = np.empty(n)
    for m in range(L):
        for j in range(n):
            if not allowed[m, j] or near[m, j] == INF or W[j] == INF:
                base[j] = INF
                hb[j] = INF
                continue
            st = coef_static[m] * near[m, j] if coef_static[m] != 0.0 else 0.0
            pr = coef_proc[m] * unit_node[j]
            base[j] = W[j] + st + pr
            hb[j] = HW[j] + near_h[m, j]
        Wn = np.full(n, INF)
        Hn = np.full(n, INF)
        for i in range(n):
            for j in range(n):
                if base[j] == INF:
                    continue
                v = base[j] + xi[m + 1] * dist[j, i]
                h = hb[j] + hops[j, i]
                if v < Wn[i] or (v == Wn[i] and h < Hn[i]):
                    Wn[i] = v
                    Hn[i] = h
                    P[m, i] = j
        W = Wn
        HW = Hn
    return W, P
