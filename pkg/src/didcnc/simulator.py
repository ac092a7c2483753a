"""Slotted packet-level execution of the data-intensive network.

Arrivals of one client in one slot form a single request *bundle*: all of
them follow the same min-ER, so they are carried as one packet per pipeline
whose size is multiplied by the request count.  Service is fluid at
data-unit granularity: a packet stays in its queue (and counts fully
towards that queue's backlog) until its last unit has been served, and it
moves to the next queue only at the end of the slot.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .alg import flow_conservation_residuals, route_flows
from .controller import (SlotView, VirtualQueues, load_weight, route_weight, select_routes,
                         virtual_arrivals)
from .services import ArrivalProcess, Client, cumulative_scaling
from .topology import CachingVector, NetworkGraph, check_storage_feasible

PROCESS = -1
METRIC_COLUMNS = ("slot", "backlog_total", "backlog_proc", "backlog_wait", "backlog_tx",
                  "delivered", "mean_delay", "lambda")
TRACE_COLUMNS = ("slot", "client", "weight", "theta", "live_hops", "static_hops")


class Packet:
    """A live or static packet (one bundle of requests) and its remaining ops.

    ``ops`` lists edge indices to transmit on, with ``PROCESS`` marking the
    processing stop of a live packet.  ``pos`` points at the next op.
    """

    __slots__ = ("req", "live", "stage", "size", "ops", "pos", "hop", "left", "node")

    def __init__(self, req, live, stage, size, ops, node, hop):
        self.req = req
        self.live = live
        self.stage = stage
        self.size = size
        self.ops = ops
        self.pos = 0
        self.hop = hop
        self.left = size
        self.node = node

    def key(self):
        return (self.hop, self.req.id, 0 if self.live else 1, self.stage)


class Request:
    __slots__ = ("id", "client", "count", "birth", "route", "theta")

    def __init__(self, rid, client, count, birth, route):
        self.id = rid
        self.client = client
        self.count = count
        self.birth = birth
        self.route = route
        self.theta = route.theta


class Pair:
    """Co-located live packet and its static associate awaiting processing."""

    __slots__ = ("live", "static", "work", "left")

    def __init__(self, live, static, work):
        self.live = live
        self.static = static
        self.work = work
        self.left = work

    def size(self):
        return self.live.size + self.static.size


@dataclass
class Metrics:
    rows: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    delivered: int = 0
    admitted: int = 0
    blocked: int = 0
    delay_sum: float = 0.0
    delay_count: int = 0
    post_warmup_delay_sum: float = 0.0
    post_warmup_delivered: int = 0

    def mean_delay(self) -> float:
        if self.post_warmup_delivered == 0:
            return math.nan
        return self.post_warmup_delay_sum / self.post_warmup_delivered

    def backlog_series(self):
        if not self.rows:
            return np.zeros(0), np.zeros(0)
        a = np.array([(r[0], r[1]) for r in self.rows], dtype=float)
        return a[:, 0], a[:, 1]


class InvariantMonitor:
    """Counts invariant violations; keeps the first few messages per kind."""

    KINDS = ("capacity", "waiting_bound", "pairing", "ento", "conservation",
             "route_flow", "storage", "weight_identity")

    def __init__(self, route_sample_every: int = 97, tol: float = 1e-9):
        self.counts = {k: 0 for k in self.KINDS}
        self.messages = {k: [] for k in self.KINDS}
        self.route_sample_every = route_sample_every
        self.tol = tol
        self.checks = 0
        self.max_weight_gap = 0.0

    def flag(self, kind, msg):
        self.counts[kind] += 1
        if len(self.messages[kind]) < 5:
            self.messages[kind].append(msg)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


class Simulator:
    """DI-DCNC (or a benchmark router) on the actual network, one slot per ``step``."""

    def __init__(self, graph: NetworkGraph, clients: list[Client], x: CachingVector,
                 arrivals: ArrivalProcess, policy: str = "didcnc", warmup: int = 0,
                 sample_every: int = 100, monitor: InvariantMonitor | None = None,
                 trace: bool = False):
        self.graph = graph
        self.clients = clients
        self.x = x
        self.arrivals = arrivals
        self.policy = policy
        self.warmup = warmup
        self.sample_every = max(1, sample_every)
        self.monitor = monitor
        self.trace = trace
        self.vq = VirtualQueues(graph)
        self.t = 0
        self.metrics = Metrics()
        self.observers = []
        n, E = graph.n_nodes, graph.n_edges
        self.link_q = [[] for _ in range(E)]
        self.proc_q = [[] for _ in range(n)]
        self.waiting = [dict() for _ in range(n)]
        self.backlog_tx = 0.0
        self.backlog_proc = 0.0
        self.backlog_wait = 0.0
        self._seq = 0
        self._next_req = 0
        self._interval_delay = 0.0
        self._interval_count = 0
        self._xi = {id(c.service): cumulative_scaling(c.service) for c in clients}
        self._m_max = max(c.service.n_stages for c in clients) if clients else 1
        self._z_max = max((_size_ratio(c.service) for c in clients), default=1.0)
        self.last_selection = None
        self.last_view = None
        self._check_storage(x)

    # placement ------------------------------------------------------------
    def set_placement(self, x: CachingVector):
        """Swap the caching vector; in-flight packets keep their routes."""
        self._check_storage(x)
        self.x = x

    def _check_storage(self, x):
        ok, bad = check_storage_feasible(x, self.graph)
        if not ok:
            if self.monitor is None:
                raise ValueError(f"storage infeasible placement: {bad}")
            self.monitor.flag("storage", f"slot {self.t}: {bad}")

    # main loop ------------------------------------------------------------
    def run(self, horizon: int):
        for _ in range(horizon):
            self.step()
        return self.metrics

    def step(self):
        t = self.t
        a = self.arrivals.draw()
        selection = None
        view = None
        if a.any():
            view = SlotView(self.graph, self.vq, self.x)
            blocked = {}
            selection = select_routes(a, self.clients, view, self.policy, blocked)
            self.metrics.blocked += sum(blocked.values())
            for c, (route, count, _) in selection.routes.items():
                self._admit(c, route, count, t)
        self.last_selection, self.last_view = selection, view
        for obs in self.observers:
            obs.after_routing(self, a, view)
        self._serve()
        if selection is not None and len(selection):
            self.vq.update(*virtual_arrivals(selection, self.graph))
        else:
            self.vq.update(np.zeros(self.graph.n_nodes), np.zeros(self.graph.n_edges))
        if self.monitor is not None:
            self._check(selection, view)
        if self.trace and selection is not None:
            for c, (route, count, _) in selection.routes.items():
                self.metrics.trace.append(_trace_row(t, c, route))
        self.t += 1
        if self.t % self.sample_every == 0:
            self._record()
        for obs in self.observers:
            obs.end_slot(self)

    # admission ------------------------------------------------------------
    def _admit(self, c, route, count, t):
        client = self.clients[c]
        spec = client.service
        xi = self._xi[id(spec)]
        req = Request(self._next_req, c, count, t, route)
        self._next_req += 1
        self.metrics.admitted += count
        g = self.graph
        live_ops = []
        for m, path in enumerate(route.live_paths, start=1):
            live_ops += [g.edge_index[(a, b)] for a, b in zip(path[:-1], path[1:])]
            if m < spec.n_stages:
                live_ops.append(PROCESS)
        size0 = count * spec.packet_size
        live = Packet(req, True, 1, size0, live_ops, client.source, 0)
        for m, f in enumerate(spec.functions, start=1):
            path = route.static_paths[m - 1]
            ops = [g.edge_index[(a, b)] for a, b in zip(path[:-1], path[1:])]
            st = Packet(req, False, m, size0 * xi[m - 1] * f.merging, ops, route.sources[m - 1], 1)
            self._forward(st, t)
        self._forward(live, t)

    # packet movement ------------------------------------------------------
    def _forward(self, p: Packet, t: int):
        """Place a packet sitting at ``p.node`` into its next queue."""
        if p.pos < len(p.ops):
            op = p.ops[p.pos]
            if op != PROCESS:
                self._seq += 1
                heapq.heappush(self.link_q[op], (p.key(), self._seq, p))
                self.backlog_tx += p.size
                return
        elif p.live:
            self._deliver(p, t)
            return
        self._arrive_for_pairing(p)

    def _arrive_for_pairing(self, p: Packet):
        i = p.node
        key = (p.req.id, p.stage)
        w = self.waiting[i]
        other = w.pop(key, None)
        if other is None:
            w[key] = p
            self.backlog_wait += p.size
            return
        self.backlog_wait -= other.size
        live, static = (p, other) if p.live else (other, p)
        if self.monitor is not None:
            theta = p.req.theta[p.stage - 1]
            if live.stage != static.stage or live.node != static.node or i != theta:
                self.monitor.flag("pairing", f"req {p.req.id} stage {p.stage} at {i}")
        spec = self.clients[p.req.client].service
        work = spec.functions[live.stage - 1].workload * live.size
        pair = Pair(live, static, work)
        self._seq += 1
        heapq.heappush(self.proc_q[i], ((live.hop, p.req.id, live.stage), self._seq, pair))
        self.backlog_proc += pair.size()

    def _deliver(self, p: Packet, t: int):
        req = p.req
        m = self.metrics
        m.delivered += req.count
        delay = 0 if p.hop == 0 else t + 1 - req.birth
        if t >= self.warmup:
            m.post_warmup_delay_sum += delay * req.count
            m.post_warmup_delivered += req.count
        self._interval_delay += delay * req.count
        self._interval_count += req.count

    # service --------------------------------------------------------------
    def _serve(self):
        g = self.graph
        moved = []
        mon = self.monitor
        tx_used = np.zeros(g.n_edges) if mon is not None else None
        cpu_used = np.zeros(g.n_nodes) if mon is not None else None
        for e, q in enumerate(self.link_q):
            if not q:
                continue
            cap = g.tx_capacity[e]
            max_hop = -1
            while q and cap > 0:
                p = q[0][2]
                used = p.left if p.left <= cap else cap
                cap -= used
                p.left -= used
                if tx_used is not None:
                    tx_used[e] += used
                    max_hop = max(max_hop, p.hop)
                if p.left <= 1e-12:
                    heapq.heappop(q)
                    self.backlog_tx -= p.size
                    p.node = int(g.head[e])
                    p.hop += 1
                    p.pos += 1
                    p.left = p.size
                    moved.append(p)
                else:
                    break
            # zero-size packets pass even when the capacity is spent
            while q and q[0][2].size == 0.0 and cap <= 0:
                p = heapq.heappop(q)[2]
                p.node = int(g.head[e])
                p.hop += 1
                p.pos += 1
                moved.append(p)
            if mon is not None and q and q[0][0][0] < max_hop:
                mon.flag("ento", f"slot {self.t} link {e}")
        for i, q in enumerate(self.proc_q):
            if not q:
                continue
            cap = g.proc_capacity[i]
            max_hop = -1
            while q and cap > 0:
                pair = q[0][2]
                used = pair.left if pair.left <= cap else cap
                cap -= used
                pair.left -= used
                if cpu_used is not None:
                    cpu_used[i] += used
                    max_hop = max(max_hop, pair.live.hop)
                if pair.left <= 1e-12 * max(1.0, pair.work):
                    heapq.heappop(q)
                    self.backlog_proc -= pair.size()
                    moved.append(self._finish_processing(pair))
                else:
                    break
            if mon is not None and q and q[0][0][0] < max_hop:
                mon.flag("ento", f"slot {self.t} node {i}")
        if mon is not None:
            over_tx = tx_used > g.tx_capacity * (1 + 1e-9) + 1e-9
            over_cpu = cpu_used > g.proc_capacity * (1 + 1e-9) + 1e-9
            if over_tx.any() or over_cpu.any():
                mon.flag("capacity", f"slot {self.t}")
        for p in moved:
            self._forward(p, self.t)

    def _finish_processing(self, pair: Pair) -> Packet:
        live = pair.live
        f = self.clients[live.req.client].service.functions[live.stage - 1]
        live.size *= f.scaling
        live.left = live.size
        live.stage += 1
        live.hop += 1
        live.pos += 1
        return live

    # metrics --------------------------------------------------------------
    def backlogs(self):
        tx = max(self.backlog_tx, 0.0)
        pr = max(self.backlog_proc, 0.0)
        wt = max(self.backlog_wait, 0.0)
        return pr + wt + tx, pr, wt, tx

    def _record(self):
        total, pr, wt, tx = self.backlogs()
        mean = self._interval_delay / self._interval_count if self._interval_count else math.nan
        self.metrics.rows.append((self.t, total, pr, wt, tx, self.metrics.delivered, mean,
                                  float(np.sum(self.arrivals.rates()))))
        self._interval_delay = 0.0
        self._interval_count = 0

    def in_flight(self) -> int:
        """Requests admitted but not delivered, counted from queue contents."""
        n = 0
        for q in self.link_q:
            n += sum(p.req.count for _, _, p in q if p.live)
        for q in self.proc_q:
            n += sum(pair.live.req.count for _, _, pair in q)
        for w in self.waiting:
            n += sum(p.req.count for p in w.values() if p.live)
        return n

    def exact_backlogs(self):
        tx = sum(p.size for q in self.link_q for _, _, p in q)
        pr = sum(pair.size() for q in self.proc_q for _, _, pair in q)
        wt = sum(p.size for w in self.waiting for p in w.values())
        return pr + wt + tx, pr, wt, tx

    # invariants -----------------------------------------------------------
    def _check(self, selection, view):
        mon = self.monitor
        mon.checks += 1
        _, pr, wt, tx = self.exact_backlogs()
        if wt > self._m_max * self._z_max * (pr + tx) * (1 + 1e-9) + 1e-9:
            mon.flag("waiting_bound", f"slot {self.t}: R'={wt} R={pr + tx}")
        if self.metrics.admitted - self.metrics.delivered != self.in_flight():
            mon.flag("conservation", f"slot {self.t}")
        if selection is None:
            return
        for c, (route, count, (rn, rl)) in selection.routes.items():
            w17 = load_weight(rn, rl, view)
            w18 = route_weight(route, self.clients[c].service, view)
            gap = max(abs(w17 - w18), abs(w18 - route.weight))
            scale = max(1.0, abs(w18))
            mon.max_weight_gap = max(mon.max_weight_gap, gap / scale)
            if gap > mon.tol * scale:
                mon.flag("weight_identity", f"slot {self.t} client {c}: {w17} {w18} {route.weight}")
        if self.t % mon.route_sample_every == 0:
            for c, (route, count, _) in selection.routes.items():
                cl = self.clients[c]
                res = flow_conservation_residuals(route_flows(route, cl.service), cl.service,
                                                  self.graph, cl.source, cl.destination)
                if res:
                    mon.flag("route_flow", f"slot {self.t} client {c}: {res[:2]}")


def _size_ratio(spec) -> float:
    """Largest ratio between the sizes of two packets of one service."""
    xi = cumulative_scaling(spec)
    sizes = list(xi) + [xi[m] * f.merging for m, f in enumerate(spec.functions) if f.merging > 0]
    return max(sizes) / min(sizes)


def _trace_row(t, c, route):
    return (t, c, route.weight, "-".join(str(v) for v in route.theta),
            "-".join(str(len(p) - 1) for p in route.live_paths),
            "-".join(str(len(p) - 1) for p in route.static_paths))


class SlotObserver:
    """Hook points for controllers that act between slots (e.g. replacement)."""

    def after_routing(self, sim: Simulator, arrivals, view):
        pass

    def end_slot(self, sim: Simulator):
        pass
