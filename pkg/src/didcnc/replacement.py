"""Frame-based database replacement driven by observed demand.

A decision computed from the statistics of frame ``tau`` is transferred
during frame ``tau + 1`` and takes effect at the start of frame ``tau + 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import RouteInfeasible, SlotView, min_er
from .placement import PlacementEvaluator, FlowModel, solve_milp_placement
from .services import Client
from .simulator import SlotObserver
from .topology import CachingVector, NetworkGraph, check_storage_feasible

FRAME_COLUMNS = ("frame", "policy", "delta", "bytes", "metric")


@dataclass
class FrameClock:
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("frame length must be positive")

    def frame(self, t: int) -> int:
        return t // self.length

    def is_boundary(self, t: int) -> bool:
        return t > 0 and t % self.length == 0


def empirical_popularity(counts) -> np.ndarray:
    """Arrival shares per client; uniform if nothing arrived."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return np.full(len(counts), 1.0 / len(counts))
    return counts / total


def replacement_bytes(old: CachingVector, new: CachingVector) -> float:
    """Size of the databases newly written into caches."""
    added = (new.x == 1) & (old.x == 0)
    return float((added * new.sizes[None, :]).sum())


def placement_delta(old: CachingVector, new: CachingVector, graph: NetworkGraph) -> str:
    parts = []
    for i, k in zip(*np.nonzero(new.x != old.x)):
        sign = "+" if new.x[i, k] else "-"
        parts.append(f"{sign}{graph.nodes[i]}:{k}")
    return ";".join(parts)


# rate based ------------------------------------------------------------------

def rate_based_replace(p_hat, x: CachingVector, graph: NetworkGraph, clients: list[Client],
                       node_budget: int = 2000, time_budget: float | None = None):
    """Re-solve the placement MILP for ``p_hat``; keep ``x`` unless strictly better.

    Returns ``(new_x, lam_new, lam_current)``.
    """
    model = FlowModel(graph, clients, p_hat, x.sizes)
    lam_cur, _ = PlacementEvaluator(model).evaluate(x)
    sol = solve_milp_placement(graph, clients, x.sizes, p_hat, node_budget=node_budget,
                               time_budget=time_budget, incumbent=x)
    if sol.lam > lam_cur * (1 + 1e-9) + 1e-12:
        return sol.x, sol.lam, lam_cur
    return x.copy(), lam_cur, lam_cur


# score based -----------------------------------------------------------------

def _weight(client, view, c):
    try:
        return min_er(client, view, client_index=c).weight
    except RouteInfeasible:
        return math.inf


def score_instance(client: Client, view: SlotView, x: CachingVector, i: int, k: int,
                   base: float | None = None, c: int = 0) -> float:
    """Min-ER weight reduction from caching database k at node i (others unchanged).

    ``base`` may carry the min-ER weight under ``x`` itself, which equals one
    of the two weights compared.  Raises :class:`RouteInfeasible` if either
    placement leaves the client without a route.
    """
    if k not in client.service.databases() or i == x.cloud_index:
        return 0.0
    minus = x.with_entry(i, k, 0)
    plus = x.with_entry(i, k, 1)
    if base is None:
        base = _weight(client, view.with_placement(x), c)
    w_minus = base if x.x[i, k] == 0 else _weight(client, view.with_placement(minus), c)
    w_plus = base if x.x[i, k] == 1 else _weight(client, view.with_placement(plus), c)
    if not (math.isfinite(w_minus) and math.isfinite(w_plus)):
        raise RouteInfeasible(c, "score needs a route under both placements")
    return max(0.0, w_minus - w_plus)


def knapsack_select(values, sizes, capacity, quantum: float = 1.0):
    """0/1 knapsack by dynamic programming over integer sizes.

    Sizes and capacity are divided by ``quantum`` (sizes rounded up, capacity
    down).  Only positive values are considered.  Among optimal selections the
    lexicographically smallest index tuple is returned, as ``(items, value)``.
    """
    values = [float(v) for v in values]
    w = [int(math.ceil(s / quantum - 1e-9)) for s in sizes]
    cap = int(math.floor(capacity / quantum + 1e-9))
    n = len(values)
    if cap < 0:
        return (), 0.0
    # best[i][c]: optimum using items i.. with capacity c
    best = np.zeros((n + 1, cap + 1))
    for i in range(n - 1, -1, -1):
        best[i] = best[i + 1]
        if values[i] > 0 and w[i] <= cap:
            take = np.full(cap + 1, -np.inf)
            take[w[i]:] = values[i] + best[i + 1][:cap + 1 - w[i]]
            best[i] = np.maximum(best[i], take)
    chosen = []
    c = cap
    for i in range(n):
        if best[i][c] <= 0:
            break
        if values[i] > 0 and w[i] <= c and values[i] + best[i + 1][c - w[i]] == best[i][c]:
            chosen.append(i)
            c -= w[i]
    return tuple(chosen), float(best[0][cap])


@dataclass
class ScoreTable:
    V: np.ndarray
    instances: int = 0
    skipped: int = 0
    skipped_pairs: int = 0

    @classmethod
    def zeros(cls, n_nodes: int, n_databases: int) -> "ScoreTable":
        return cls(np.zeros((n_nodes, n_databases)))

    def reset(self):
        self.V[:] = 0.0
        self.instances = 0
        self.skipped = 0
        self.skipped_pairs = 0

    def add_instance(self, client: Client, view: SlotView, x: CachingVector, c: int,
                     weight: float = 1.0):
        """Accumulate one arrival instance's scores over every (node, database)."""
        base = _weight(client, view, c)
        if not math.isfinite(base):
            self.skipped += 1
            return
        for k in sorted(client.service.databases()):
            for i in range(x.x.shape[0]):
                if i == x.cloud_index:
                    continue
                try:
                    v = score_instance(client, view, x, i, k, base, c)
                except RouteInfeasible:
                    # removing the only reachable copy: the pair has no defined score
                    self.skipped_pairs += 1
                    continue
                self.V[i, k] += weight * v
        self.instances += 1


def score_based_replace(scores: ScoreTable, x: CachingVector, graph: NetworkGraph,
                        quantum: float = 1.0, forbid=None):
    """Knapsack per node, then rewrite only the row that gains the most.

    A node's gain is its knapsack optimum minus the score its current row
    already collects; nodes whose optimum equals their current row are not
    candidates.
    Without a cloud node, a row that would drop the last copy of a database is
    not a candidate either.  ``forbid`` is an optional boolean (node, database)
    mask of entries that may not be added.  Returns ``(new_x, node or None, V_star)``.
    """
    best_i, best_gain, best_v, best_sel = None, 0.0, 0.0, None
    copies = x.x.sum(axis=0)
    for i in range(graph.n_nodes):
        if i == graph.cloud_index:
            continue
        values = scores.V[i]
        if forbid is not None:
            values = np.where(forbid[i] & (x.x[i] == 0), 0.0, values)
        sel, v = knapsack_select(values, x.sizes, graph.storage_capacity[i], quantum)
        row = np.zeros(x.n_databases, dtype=np.int8)
        row[list(sel)] = 1
        if np.array_equal(row, x.x[i]) or v <= 0:
            continue
        if graph.cloud_index is None and np.any((copies > 0) & (copies - x.x[i] + row == 0)):
            continue
        gain = v - float(scores.V[i] @ x.x[i])
        if gain > best_gain:
            best_i, best_gain, best_v, best_sel = i, gain, v, row
    if best_i is None:
        return x.copy(), None, 0.0
    new = x.copy()
    new.x[best_i] = best_sel
    return new, best_i, best_v


# online driver ---------------------------------------------------------------

@dataclass
class FrameRecord:
    frame: int
    policy: str
    delta: str
    bytes: float
    metric: float


class ReplacementController(SlotObserver):
    """Runs a replacement policy alongside a :class:`Simulator`.

    ``score_samples`` caps the number of scored slots per frame; each scored
    slot counts for ``frame / scored`` slots.  The rate policy re-solves only
    once the estimated popularity has moved by ``p_step`` (max norm) from the
    estimate of its last solve, or the placement is not one that solve saw.  No decision is made
    while an earlier one is still in transit.  Under the score policy a node
    may not re-cache a database it evicted within the last ``tabu`` frames.
    """

    def __init__(self, policy: str, frame: int, graph: NetworkGraph, clients: list[Client],
                 score_samples: int = 256, milp_nodes: int = 30,
                 milp_time: float | None = None, quantum: float = 1.0,
                 p_step: float = 0.01, tabu: int = 8):
        if policy not in ("rate", "score"):
            raise ValueError(f"unknown replacement policy {policy!r}")
        self.policy = policy
        self.clock = FrameClock(frame)
        self.graph = graph
        self.clients = clients
        self.counts = np.zeros(len(clients))
        self.stride = max(1, frame // max(1, score_samples))
        self.milp_nodes = milp_nodes
        self.milp_time = milp_time
        self.quantum = quantum
        self.p_step = p_step
        self.tabu = tabu
        self.evicted_at = None
        self.scores = None
        self.last_solve = None      # (p_hat, placement keys, metric)
        self.pending = None
        self.log: list[FrameRecord] = []
        self.total_bytes = 0.0
        self.changes = 0
        self.storage_violations = 0
        self.max_frame_bytes = 0.0

    def after_routing(self, sim, arrivals, view):
        self.counts += arrivals
        if self.policy != "score" or view is None or sim.t % self.stride:
            return
        if self.scores is None:
            self.scores = ScoreTable.zeros(self.graph.n_nodes, sim.x.n_databases)
        for c, a in enumerate(arrivals):
            if a > 0:
                self.scores.add_instance(self.clients[c], view, sim.x, c, weight=a * self.stride)

    def end_slot(self, sim):
        t = sim.t
        if not self.clock.is_boundary(t):
            return
        frame_done = self.clock.frame(t) - 1
        in_transit = self.pending is not None
        if self.pending is not None and self.pending[0] <= self.clock.frame(t):
            _, x_new = self.pending
            self.pending = None
            ok, _ = check_storage_feasible(x_new, self.graph)
            if not ok:
                self.storage_violations += 1
            else:
                sim.set_placement(x_new)
        x_cur = sim.x
        if in_transit:
            # statistics were gathered under a placement that is about to change
            x_new, metric = x_cur, 0.0
        elif self.policy == "rate":
            p_hat = empirical_popularity(self.counts)
            last = self.last_solve
            if (last is not None and x_cur.key() in last[1]
                    and np.abs(p_hat - last[0]).max() < self.p_step):
                x_new, metric = x_cur, last[2]
            else:
                x_new, metric, _ = rate_based_replace(p_hat, x_cur, self.graph, self.clients,
                                                      self.milp_nodes, self.milp_time)
                self.last_solve = (p_hat, {x_cur.key(), x_new.key()}, metric)
        else:
            if self.scores is None:
                self.scores = ScoreTable.zeros(self.graph.n_nodes, x_cur.n_databases)
            if self.evicted_at is None:
                self.evicted_at = np.full(x_cur.x.shape, -np.inf)
            forbid = frame_done - self.evicted_at < self.tabu
            x_new, _, metric = score_based_replace(self.scores, x_cur, self.graph,
                                                   self.quantum, forbid)
        if self.scores is not None:
            self.scores.reset()
        self.counts[:] = 0
        nbytes = replacement_bytes(x_cur, x_new)
        if nbytes > self.graph.replacement_rate_cap * self.clock.length:
            x_new, nbytes = x_cur, 0.0
        delta = placement_delta(x_cur, x_new, self.graph)
        if delta:
            if self.evicted_at is not None:
                self.evicted_at[(x_cur.x == 1) & (x_new.x == 0)] = frame_done
            self.pending = (frame_done + 2, x_new)
            self.changes += 1
        self.total_bytes += nbytes
        self.max_frame_bytes = max(self.max_frame_bytes, nbytes)
        self.log.append(FrameRecord(frame_done, self.policy, delta, nbytes, float(metric)))

    def rate(self, horizon: int) -> float:
        """Average replacement traffic in database units per slot."""
        return self.total_bytes / horizon if horizon else 0.0
