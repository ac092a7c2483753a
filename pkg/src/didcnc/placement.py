"""Max-throughput database placement: flow LP, MILP, branch-and-bound, baselines.

Flow variables (all nonnegative, in data units per slot):

* ``lam`` and one ``lam_c`` per client with ``lam_c >= p_c * lam``;
* live transmission ``f[c, m, e]`` for every stage m = 1..M_c and link e;
* live processing ``g[c, m, i]`` for m = 1..M_c - 1 (stage-m units processed);
* static transmission ``h[k, e]`` per database k used by some function.

Static demand at node i is ``sum zeta_m g[c, m, i]`` over functions using k.
The static balance ``out + demand - in`` is bounded by ``Cmax[i, k] x[i, k]``
(the linearised form); the strict form pins it to zero where ``x = 0`` and
leaves it free where ``x = 1``.  A cloud node counts as caching everything.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .lp import solve_lp
from .services import Client
from .topology import CachingVector, NetworkGraph

OPTIMAL = "optimal"
BOUND = "bound"
HEURISTIC = "heuristic"


@dataclass
class PlacementSolution:
    x: CachingVector
    lam: float
    flows: dict | None = None
    status: str = OPTIMAL
    gap: float = 0.0
    nodes: int = 0
    root_bound: float = math.nan


class FlowModel:
    """Sparse constraint matrices of the flow LP with x as (relaxed) columns."""

    def __init__(self, graph: NetworkGraph, clients: list[Client], popularity=None,
                 database_sizes=None):
        self.graph = graph
        self.clients = clients
        n, E = graph.n_nodes, graph.n_edges
        C = len(clients)
        p = np.full(C, 1.0 / C) if popularity is None else np.asarray(popularity, dtype=float)
        if p.shape != (C,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("popularity must be a distribution over clients")
        self.popularity = p
        K = 1 + max((f.database for c in clients for f in c.service.functions), default=-1)
        self.n_databases = max(K, 0 if database_sizes is None else len(database_sizes))
        self.sizes = (np.ones(self.n_databases) if database_sizes is None
                      else np.asarray(database_sizes, dtype=float))
        self.used_dbs = sorted({f.database for c in clients for f in c.service.functions})
        self.cloud = graph.cloud_index
        self.x_nodes = [i for i in range(n) if i != self.cloud]

        # variable layout
        idx = 0
        self.i_lam = idx
        idx += 1
        self.i_lamc = np.arange(idx, idx + C)
        idx += C
        self.i_f = {}
        self.i_g = {}
        for c, cl in enumerate(clients):
            M = cl.service.n_stages
            for m in range(1, M + 1):
                self.i_f[(c, m)] = np.arange(idx, idx + E)
                idx += E
            for m in range(1, M):
                self.i_g[(c, m)] = np.arange(idx, idx + n)
                idx += n
        self.i_h = {}
        for k in self.used_dbs:
            self.i_h[k] = np.arange(idx, idx + E)
            idx += E
        self.n_flow = idx
        self.i_x = {}
        for i in self.x_nodes:
            for k in self.used_dbs:
                self.i_x[(i, k)] = idx
                idx += 1
        self.n_vars = idx
        self._build()

    # construction ---------------------------------------------------------
    def _build(self):
        g = self.graph
        n, E = g.n_nodes, g.n_edges
        rows_ub, rhs_ub = [], []
        rows_eq, rhs_eq = [], []
        r_ub = 0
        r_eq = 0

        def add(rows, r, cols, vals):
            for j, v in zip(cols, vals):
                rows.append((r, int(j), float(v)))

        # popularity coupling: p_c lam - lam_c <= 0
        for c in range(len(self.clients)):
            add(rows_ub, r_ub, [self.i_lam, self.i_lamc[c]], [self.popularity[c], -1.0])
            rhs_ub.append(0.0)
            r_ub += 1
        # node compute
        self.row_cpu = r_ub
        for i in range(n):
            cols, vals = [], []
            for (c, m), ig in self.i_g.items():
                cols.append(ig[i])
                vals.append(self.clients[c].service.functions[m - 1].workload)
            add(rows_ub, r_ub, cols, vals)
            rhs_ub.append(g.proc_capacity[i])
            r_ub += 1
        # link transmission
        for e in range(E):
            cols = [f[e] for f in self.i_f.values()] + [h[e] for h in self.i_h.values()]
            add(rows_ub, r_ub, cols, [1.0] * len(cols))
            rhs_ub.append(g.tx_capacity[e])
            r_ub += 1
        # live conservation
        self.dest_out = []
        for c, cl in enumerate(self.clients):
            spec = cl.service
            M = spec.n_stages
            for m in range(1, M + 1):
                f = self.i_f[(c, m)]
                for i in range(n):
                    if m == M and i == cl.destination:
                        self.dest_out += [f[e] for e in g.out_edges[i]]
                        continue
                    cols = [f[e] for e in g.out_edges[i]] + [f[e] for e in g.in_edges[i]]
                    vals = [1.0] * len(g.out_edges[i]) + [-1.0] * len(g.in_edges[i])
                    if m < M:
                        cols.append(self.i_g[(c, m)][i])
                        vals.append(1.0)
                    if m > 1:
                        cols.append(self.i_g[(c, m - 1)][i])
                        vals.append(-spec.functions[m - 2].scaling)
                    if m == 1 and i == cl.source:
                        cols.append(self.i_lamc[c])
                        vals.append(-1.0)
                    add(rows_eq, r_eq, cols, vals)
                    rhs_eq.append(0.0)
                    r_eq += 1
        # static balance per (database, node): out + demand - in  (- Cmax x)
        self.cmax = {}
        self.static_rows = {}
        bal = []
        for k in self.used_dbs:
            h = self.i_h[k]
            ratio = max(f.merging / f.workload for c in self.clients
                        for f in c.service.functions if f.database == k)
            for i in range(n):
                cols = [h[e] for e in g.out_edges[i]] + [h[e] for e in g.in_edges[i]]
                vals = [1.0] * len(g.out_edges[i]) + [-1.0] * len(g.in_edges[i])
                for (c, m), ig in self.i_g.items():
                    fn = self.clients[c].service.functions[m - 1]
                    if fn.database == k and fn.merging != 0.0:
                        cols.append(ig[i])
                        vals.append(fn.merging)
                cm = float(sum(g.tx_capacity[e] for e in g.out_edges[i]) + g.proc_capacity[i] * ratio)
                self.cmax[(i, k)] = cm
                bal.append((i, k, cols, vals))
        self.balance = bal
        self._ub_base = (rows_ub, rhs_ub, r_ub)
        self._eq = (rows_eq, rhs_eq, r_eq)

    def _assemble(self, rows, r, ncols):
        if not rows:
            return sp.csr_matrix((r, ncols))
        a = np.array(rows)
        return sp.csr_matrix((a[:, 2], (a[:, 0].astype(int), a[:, 1].astype(int))), shape=(r, ncols))

    def linearized(self, storage: bool = True):
        """(A_ub, b_ub, A_eq, b_eq) of the MILP over all variables (x as columns)."""
        rows_ub, rhs_ub, r_ub = self._ub_base
        rows = list(rows_ub)
        rhs = list(rhs_ub)
        r = r_ub
        self.row_balance = {}
        for i, k, cols, vals in self.balance:
            cc, vv = list(cols), list(vals)
            if i != self.cloud:
                cc.append(self.i_x[(i, k)])
                vv.append(-self.cmax[(i, k)])
                rhs.append(0.0)
            else:
                rhs.append(self.cmax[(i, k)])
            for j, v in zip(cc, vv):
                rows.append((r, int(j), float(v)))
            self.row_balance[(i, k)] = r
            r += 1
        if storage:
            for i in self.x_nodes:
                for k in self.used_dbs:
                    rows.append((r, self.i_x[(i, k)], float(self.sizes[k])))
                rhs.append(float(self.graph.storage_capacity[i]))
                r += 1
            if self.cloud is None:
                # a function needs some copy of its database even when it merges nothing
                for k in self.used_dbs:
                    for i in self.x_nodes:
                        rows.append((r, self.i_x[(i, k)], -1.0))
                    rhs.append(-1.0)
                    r += 1
        rows_eq, rhs_eq, r_eq = self._eq
        return (self._assemble(rows, r, self.n_vars), np.array(rhs),
                self._assemble(rows_eq, r_eq, self.n_vars), np.array(rhs_eq))

    def strict(self, x: CachingVector):
        """Model with equality balance at non-sources and no balance at sources."""
        rows_ub, rhs_ub, r_ub = self._ub_base
        rows_eq, rhs_eq, r_eq = self._eq
        rows_eq = list(rows_eq)
        rhs_eq = list(rhs_eq)
        for i, k, cols, vals in self.balance:
            if x.has(i, k):
                continue
            for j, v in zip(cols, vals):
                rows_eq.append((r_eq, int(j), float(v)))
            rhs_eq.append(0.0)
            r_eq += 1
        return (self._assemble(rows_ub, r_ub, self.n_flow), np.array(rhs_ub),
                self._assemble(rows_eq, r_eq, self.n_flow), np.array(rhs_eq))

    def bounds(self):
        lb = np.zeros(self.n_vars)
        ub = np.full(self.n_vars, np.inf)
        ub[self.dest_out] = 0.0
        for j in self.i_x.values():
            ub[j] = 1.0
        return lb, ub

    def x_vector(self, x: CachingVector) -> dict:
        return {(i, k): float(x.x[i, k]) for (i, k) in self.i_x}

    def unpack(self, z) -> dict:
        out = {"lam": float(z[self.i_lam]), "lam_c": z[self.i_lamc].copy(),
               "live": {key: z[ix].copy() for key, ix in self.i_f.items()},
               "proc": {key: z[ix].copy() for key, ix in self.i_g.items()},
               "static": {k: z[ix].copy() for k, ix in self.i_h.items()}}
        return out

    def objective(self, ncols=None):
        c = np.zeros(ncols or self.n_vars)
        c[self.i_lam] = -1.0
        return c


def _needs_source(model: FlowModel, x: CachingVector) -> bool:
    """True if some used database has no source at all."""
    return any(not x.source_mask(k).any() for k in model.used_dbs)


class PlacementEvaluator:
    """Reusable LP for many placements of one instance (x enters via bounds)."""

    def __init__(self, model: FlowModel, backend: str = "highs"):
        self.model = model
        self.backend = backend
        self.A_ub, self.b_ub, self.A_eq, self.b_eq = model.linearized(storage=False)
        self.lb, self.ub = model.bounds()

    def solve_bounds(self, lb, ub):
        m = self.model
        res = solve_lp(m.objective(), self.A_ub, self.b_ub, self.A_eq, self.b_eq, lb, ub,
                       backend=self.backend)
        return res

    def evaluate(self, x: CachingVector) -> tuple[float, dict | None]:
        m = self.model
        if _needs_source(m, x):
            return 0.0, None
        lb, ub = self.lb.copy(), self.ub.copy()
        for (i, k), j in m.i_x.items():
            lb[j] = ub[j] = float(x.x[i, k])
        res = self.solve_bounds(lb, ub)
        if not res.ok:
            return 0.0, None
        return max(0.0, -res.fun), m.unpack(res.x)


def eval_placement_lp(x: CachingVector, graph: NetworkGraph, clients: list[Client],
                      popularity=None, backend: str = "highs") -> tuple[float, dict | None]:
    """Largest ``lam`` supportable along direction ``popularity`` under placement x."""
    model = FlowModel(graph, clients, popularity, x.sizes)
    return PlacementEvaluator(model, backend).evaluate(x)


def eval_strict_lp(x: CachingVector, graph: NetworkGraph, clients: list[Client],
                   popularity=None, backend: str = "highs") -> float:
    model = FlowModel(graph, clients, popularity, x.sizes)
    if _needs_source(model, x):
        return 0.0
    A_ub, b_ub, A_eq, b_eq = model.strict(x)
    lb, ub = model.bounds()
    res = solve_lp(model.objective(model.n_flow), A_ub, b_ub, A_eq, b_eq,
                   lb[:model.n_flow], ub[:model.n_flow], backend=backend)
    return max(0.0, -res.fun) if res.ok else 0.0


def check_linearization_equivalence(x: CachingVector, graph: NetworkGraph, clients: list[Client],
                                    popularity=None, tol: float = 1e-6) -> bool:
    a, _ = eval_placement_lp(x, graph, clients, popularity)
    b = eval_strict_lp(x, graph, clients, popularity)
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def witness_violations(model: FlowModel, x: CachingVector, z: dict, tol: float = 1e-6) -> list:
    """Constraint residuals of an unpacked LP solution above ``tol`` (relative)."""
    vec = np.zeros(model.n_vars)
    vec[model.i_lam] = z["lam"]
    vec[model.i_lamc] = z["lam_c"]
    for key, ix in model.i_f.items():
        vec[ix] = z["live"][key]
    for key, ix in model.i_g.items():
        vec[ix] = z["proc"][key]
    for k, ix in model.i_h.items():
        vec[ix] = z["static"][k]
    for (i, k), j in model.i_x.items():
        vec[j] = x.x[i, k]
    A_ub, b_ub, A_eq, b_eq = model.linearized(storage=True)
    lb, ub = model.bounds()
    bad = []
    scale = max(1.0, float(np.abs(b_ub).max(initial=0.0)))
    r = A_ub @ vec - b_ub
    bad += [("ub", int(i), float(r[i])) for i in np.flatnonzero(r > tol * scale)]
    r = A_eq @ vec - b_eq
    bad += [("eq", int(i), float(r[i])) for i in np.flatnonzero(np.abs(r) > tol * scale)]
    bad += [("lb", int(i), float(vec[i])) for i in np.flatnonzero(vec < lb - tol * scale)]
    bad += [("ub_bound", int(i), float(vec[i])) for i in np.flatnonzero(vec > ub + tol * scale)]
    return bad


# placements -----------------------------------------------------------------

def all_placements(graph: NetworkGraph, sizes, databases=None):
    """Every storage-feasible caching vector over the non-cloud nodes."""
    dbs = list(range(len(sizes))) if databases is None else list(databases)
    nodes = [i for i in range(graph.n_nodes) if i != graph.cloud_index]
    per_node = []
    for i in nodes:
        opts = []
        for r in range(len(dbs) + 1):
            for combo in itertools.combinations(dbs, r):
                if sum(sizes[k] for k in combo) <= graph.storage_capacity[i] + 1e-9:
                    opts.append(combo)
        per_node.append(opts)
    for choice in itertools.product(*per_node):
        x = CachingVector.empty(graph, sizes)
        for i, combo in zip(nodes, choice):
            for k in combo:
                x.x[i, k] = 1
        yield x


def placement_space_size(graph: NetworkGraph, sizes, databases=None) -> int:
    dbs = list(range(len(sizes))) if databases is None else list(databases)
    total = 1
    for i in range(graph.n_nodes):
        if i == graph.cloud_index:
            continue
        cnt = sum(1 for r in range(len(dbs) + 1) for combo in itertools.combinations(dbs, r)
                  if sum(sizes[k] for k in combo) <= graph.storage_capacity[i] + 1e-9)
        total *= cnt
    return total


def enumerate_placement(graph, clients, sizes, popularity=None) -> PlacementSolution:
    """Exhaustive search over X (only databases some function uses)."""
    model = FlowModel(graph, clients, popularity, sizes)
    ev = PlacementEvaluator(model)
    best = None
    for x in all_placements(graph, sizes, model.used_dbs):
        lam, _ = ev.evaluate(x)
        if best is None or lam > best.lam:
            best = PlacementSolution(x, lam)
    best.nodes = placement_space_size(graph, sizes, model.used_dbs)
    return best


def solve_milp_placement(graph: NetworkGraph, clients: list[Client], sizes, popularity=None,
                         node_budget: int = 20_000, time_budget: float | None = None,
                         oracle_cap: int = 0, tol: float = 1e-9,
                         incumbent: CachingVector | None = None,
                         dfs_nodes: int = 200, improve: bool = True) -> PlacementSolution:
    """Branch-and-bound on the binary caching variables with LP relaxation bounds.

    The first ``dfs_nodes`` nodes are explored depth-first, the rest
    best-bound first.  With ``improve`` a diving heuristic runs at the root
    and the incumbent is polished by :func:`local_search` before branching.  If the placement space has at most ``oracle_cap``
    members it is enumerated instead.  Exhausting the node or time budget returns the best incumbent
    with status ``"bound"`` and the remaining optimality gap.
    """
    model = FlowModel(graph, clients, popularity, sizes)
    if oracle_cap and placement_space_size(graph, sizes, model.used_dbs) <= oracle_cap:
        return enumerate_placement(graph, clients, sizes, popularity)
    A_ub, b_ub, A_eq, b_eq = model.linearized(storage=True)
    lb0, ub0 = model.bounds()
    ev = PlacementEvaluator(model)
    keys = list(model.i_x)
    cols = np.array([model.i_x[key] for key in keys], dtype=int)
    start = time.monotonic()

    def relax(lb, ub):
        return solve_lp(model.objective(), A_ub, b_ub, A_eq, b_eq, lb, ub)

    def to_cv(vals):
        x = CachingVector.empty(graph, sizes)
        for (i, k), v in zip(keys, vals):
            x.x[i, k] = int(round(v))
        return x

    best_x, best_lam = None, -np.inf
    memo = {}

    def lam_of(x):
        key = x.key()
        if key not in memo:
            memo[key] = ev.evaluate(x)[0]
        return memo[key]

    if incumbent is not None:
        best_lam = lam_of(incumbent)
        best_x = incumbent.copy()

    def consider(x):
        nonlocal best_x, best_lam
        lam = lam_of(x)
        if lam > best_lam:
            best_x, best_lam = x, lam

    root = relax(lb0, ub0)
    if not root.ok:
        x = CachingVector.empty(graph, sizes)
        return PlacementSolution(x, 0.0, status=OPTIMAL, root_bound=0.0)
    root_bound = -root.fun
    consider(_round_feasible(root.x[cols], keys, graph, sizes, to_cv))
    if improve:
        consider(_dive(relax, lb0, ub0, root, cols, to_cv))
    if improve and best_x is not None:
        deadline = None if time_budget is None else start + time_budget / 2
        x_ls, lam_ls = local_search(lam_of, best_x, graph, model.used_dbs, deadline)
        if lam_ls > best_lam:
            best_x, best_lam = x_ls, lam_ls
    # stack entries: (bound, fixed lower/upper for x columns)
    stack = [(root_bound, lb0.copy(), ub0.copy(), root)]
    open_bounds = []
    nodes = 0
    status = OPTIMAL
    dfs = dfs_nodes > 0
    while stack:
        if nodes >= node_budget or (time_budget is not None and time.monotonic() - start > time_budget):
            status = BOUND
            break
        if dfs:
            bound, lb, ub, res = stack.pop()
        else:
            j = max(range(len(stack)), key=lambda q: stack[q][0])
            bound, lb, ub, res = stack.pop(j)
        if bound <= best_lam + tol * max(1.0, abs(best_lam)):
            continue
        nodes += 1
        xv = res.x[cols]
        frac = np.abs(xv - np.round(xv))
        if frac.max() <= 1e-7:
            consider(to_cv(xv))
            continue
        consider(_round_feasible(xv, keys, graph, sizes, to_cv))
        q = int(np.argmax(frac))
        j = cols[q]
        children = []
        for v in (0.0, 1.0):
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[j] = ub2[j] = v
            r2 = relax(lb2, ub2)
            if r2.ok and -r2.fun > best_lam + tol * max(1.0, abs(best_lam)):
                children.append((-r2.fun, lb2, ub2, r2))
        # push the more promising child last so DFS explores it first
        children.sort(key=lambda ch: ch[0])
        stack.extend(children)
        if dfs and nodes >= dfs_nodes:
            dfs = False
    if best_x is None:
        best_x = CachingVector.empty(graph, sizes)
        best_lam, _ = ev.evaluate(best_x)
    open_bound = max([s[0] for s in stack], default=best_lam) if status == BOUND else best_lam
    gap = max(0.0, open_bound - best_lam)
    return PlacementSolution(best_x, best_lam, status=status, gap=gap, nodes=nodes,
                             root_bound=root_bound)


def _row_options(graph, sizes, dbs, i):
    opts = []
    for r in range(len(dbs) + 1):
        for combo in itertools.combinations(dbs, r):
            if sum(sizes[k] for k in combo) <= graph.storage_capacity[i] + 1e-9:
                opts.append(combo)
    return opts


def local_search(evaluate, x: CachingVector, graph: NetworkGraph, dbs,
                 deadline: float | None = None, max_rows: int = 64):
    """Best-improvement search over placement moves.

    Moves are single-node row changes, plus pairs of single-item swaps at two
    nodes that bring in databases no edge node currently holds (one such swap
    alone often only moves the bottleneck).  ``evaluate`` maps a caching
    vector to its throughput.  Nodes with more than ``max_rows`` feasible rows
    are skipped.  Returns ``(x, lam)``.
    """
    sizes = x.sizes
    nodes = [i for i in range(graph.n_nodes)
             if i != graph.cloud_index and graph.storage_capacity[i] > 0]
    rows = {i: _row_options(graph, sizes, dbs, i) for i in nodes}
    rows = {i: r for i, r in rows.items() if 1 < len(r) <= max_rows}

    def swaps(x, i, incoming):
        # x with one cached item at node i replaced by ``incoming`` (storage permitting)
        room = graph.storage_capacity[i] - float(x.x[i] @ sizes)
        for k in np.flatnonzero(x.x[i]):
            if sizes[incoming] <= room + sizes[k] + 1e-9:
                y = x.copy()
                y.x[i, k] = 0
                y.x[i, incoming] = 1
                yield y

    def neighbours(x):
        for i, opts in rows.items():
            for combo in opts:
                y = x.copy()
                y.x[i, list(dbs)] = 0
                y.x[i, list(combo)] = 1
                yield y
        held = x.x[nodes].sum(axis=0) if nodes else np.zeros(x.n_databases)
        missing = [k for k in dbs if held[k] == 0]
        for a, b in itertools.product(missing, repeat=2):
            for u, v in itertools.combinations(nodes, 2):
                for y in swaps(x, u, a):
                    yield from swaps(y, v, b)

    best_x, best_lam = x, evaluate(x)
    improved = True
    while improved:
        improved = False
        cand_x, cand_lam = best_x, best_lam
        for y in neighbours(best_x):
            if y == best_x:
                continue
            lam = evaluate(y)
            if lam > cand_lam * (1 + 1e-9) + 1e-12:
                cand_x, cand_lam = y, lam
            if deadline is not None and time.monotonic() > deadline:
                return cand_x, cand_lam
        if cand_lam > best_lam:
            best_x, best_lam = cand_x, cand_lam
            improved = True
    return best_x, best_lam


def _dive(relax, lb, ub, res, cols, to_cv, eps: float = 1e-7):
    """Fix the largest fractional caching variable to one and re-solve until integral."""
    lb, ub = lb.copy(), ub.copy()
    while True:
        xv = res.x[cols]
        frac = (xv > eps) & (xv < 1 - eps) & (lb[cols] != ub[cols])
        if not frac.any():
            return to_cv(xv)
        q = int(np.argmax(np.where(frac, xv, -1.0)))
        j = cols[q]
        for v in (1.0, 0.0):
            lb[j] = ub[j] = v
            nxt = relax(lb, ub)
            if nxt.ok:
                break
        else:
            return to_cv(np.round(res.x[cols]))
        res = nxt


def _round_feasible(vals, keys, graph, sizes, to_cv):
    """Greedy rounding: per node, keep the largest fractional entries that fit."""
    rounded = np.zeros(len(vals))
    by_node = {}
    for q, (i, k) in enumerate(keys):
        by_node.setdefault(i, []).append(q)
    for i, qs in by_node.items():
        room = graph.storage_capacity[i]
        for q in sorted(qs, key=lambda q: (-vals[q], keys[q][1])):
            k = keys[q][1]
            if vals[q] > 1e-9 and sizes[k] <= room + 1e-9:
                rounded[q] = 1.0
                room -= sizes[k]
    return to_cv(rounded)


def random_placement(graph: NetworkGraph, sizes, S: int, rng: np.random.Generator) -> CachingVector:
    """Diversity-maximising random tiling of a database permutation across nodes."""
    K = len(sizes)
    nodes = [i for i in range(graph.n_nodes) if i != graph.cloud_index]
    S = min(S, K)
    reps = math.ceil(len(nodes) * S / K) if K else 0
    perm = rng.permutation(K)
    seq = np.tile(perm, reps)
    x = CachingVector.empty(graph, sizes)
    for pos, i in enumerate(nodes):
        for k in seq[pos * S:(pos + 1) * S]:
            x.x[i, int(k)] = 1
    return x


def random_selection(graph: NetworkGraph, sizes, S: int, rng: np.random.Generator) -> CachingVector:
    """Each node independently caches a uniform random set of S databases."""
    K = len(sizes)
    x = CachingVector.empty(graph, sizes)
    for i in range(graph.n_nodes):
        if i == graph.cloud_index:
            continue
        for k in rng.choice(K, size=min(S, K), replace=False):
            x.x[i, int(k)] = 1
    return x


def export_lp(model: FlowModel, path=None) -> str:
    """Plain-text dump: one ``name: coef*var ... <=|= rhs`` line per row."""
    A_ub, b_ub, A_eq, b_eq = model.linearized(storage=True)
    names = _var_names(model)
    lines = [f"# vars {model.n_vars} ub_rows {A_ub.shape[0]} eq_rows {A_eq.shape[0]}",
             "max lam"]
    for tag, A, b, op in (("u", A_ub, b_ub, "<="), ("e", A_eq, b_eq, "=")):
        A = A.tocsr()
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            terms = " ".join(f"{A.data[q]:+.10g}*{names[A.indices[q]]}" for q in range(lo, hi))
            lines.append(f"{tag}{r}: {terms} {op} {b[r]:.10g}")
    lb, ub = model.bounds()
    for j in np.flatnonzero(np.isfinite(ub)):
        lines.append(f"bound {names[j]} <= {ub[j]:.10g}")
    lines += [f"binary {names[j]}" for j in model.i_x.values()]
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _var_names(model: FlowModel) -> list[str]:
    g = model.graph
    names = [""] * model.n_vars
    names[model.i_lam] = "lam"
    for c, j in enumerate(model.i_lamc):
        names[j] = f"lam_c{c}"
    for (c, m), ix in model.i_f.items():
        for e, j in enumerate(ix):
            names[j] = f"f_c{c}_m{m}_{g.nodes[g.tail[e]]}_{g.nodes[g.head[e]]}"
    for (c, m), ix in model.i_g.items():
        for i, j in enumerate(ix):
            names[j] = f"g_c{c}_m{m}_{g.nodes[i]}"
    for k, ix in model.i_h.items():
        for e, j in enumerate(ix):
            names[j] = f"h_k{k}_{g.nodes[g.tail[e]]}_{g.nodes[g.head[e]]}"
    for (i, k), j in model.i_x.items():
        names[j] = f"x_{g.nodes[i]}_k{k}"
    return names
