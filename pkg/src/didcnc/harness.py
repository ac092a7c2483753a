"""Scenario configuration, experiment drivers and CSV output.

Scenarios are JSON documents with a ``schema_version``.  Every CSV written
by :func:`run` starts with a ``# scenario <sha256>`` line identifying the
exact configuration that produced it.

Units: one slot is 1 ms and one data unit is one 1 kb packet, so 1 Gbps of
link capacity is 1000 units per slot.  Compute is counted in MHz-slots, so a
workload given in GHz per Gbps stays numerically unchanged.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .placement import random_placement, random_selection, solve_milp_placement
from .replacement import FRAME_COLUMNS, ReplacementController
from .services import (ArrivalProcess, Client, Function, MarkovModulated, PopularityChain,
                       ServiceSpec)
from .simulator import METRIC_COLUMNS, TRACE_COLUMNS, InvariantMonitor, Simulator
from .topology import CachingVector, NetworkGraph, grid_graph

SCHEMA_VERSION = 1


class ScenarioHashMismatch(RuntimeError):
    pass


@dataclass
class Scenario:
    name: str
    network: dict
    databases: list
    services: dict
    clients: list
    traffic: dict
    policy: str = "didcnc"
    placement: dict = field(default_factory=lambda: {"source": "empty"})
    replacement: dict = field(default_factory=lambda: {"policy": "none"})
    horizon: int = 10_000
    warmup: int = 1_000
    seed: int = 0
    sample_every: int = 100
    units: dict = field(default_factory=dict)
    invariants: bool = False
    trace: bool = False
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = copy.deepcopy(d)
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported scenario schema_version {version!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        sc = cls(**d)
        if sc.policy not in ("didcnc", "s2l", "l2s"):
            raise ValueError(f"unknown policy {sc.policy!r}")
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return copy.deepcopy(dataclasses.asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def replace(self, **changes) -> "Scenario":
        d = self.to_dict()
        d.update(copy.deepcopy(changes))
        return Scenario.from_dict(d)

    def with_rate(self, total_rate: float) -> "Scenario":
        traffic = dict(self.traffic, total_rate=float(total_rate))
        return self.replace(traffic=traffic)


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("didcnc").joinpath("data").iterdir()
                  if p.name.endswith(".json"))


def bundled(name: str) -> Scenario:
    """A scenario shipped with the package, by file stem (see :func:`bundled_names`)."""
    if name not in bundled_names():
        raise KeyError(f"no bundled scenario {name!r}; have {bundled_names()}")
    text = resources.files("didcnc").joinpath(f"data/{name}.json").read_text()
    return Scenario.from_dict(json.loads(text))


def edge_grid() -> Scenario:
    """The bundled 3x3 edge grid plus cloud with four two-function services."""
    return bundled("edge_grid")


def load_scenario(ref: str) -> Scenario:
    """A JSON path, or the name of a bundled scenario."""
    if Path(ref).exists():
        return Scenario.load(ref)
    return bundled(ref)


# building ----------------------------------------------------------------------

@dataclass
class World:
    graph: NetworkGraph
    clients: list
    sizes: np.ndarray
    db_ids: list
    x: CachingVector

    def db_index(self, label) -> int:
        return self.db_ids.index(label)


def build_network(net: dict) -> NetworkGraph:
    if "grid" in net:
        gspec = net["grid"]
        base = grid_graph(gspec["rows"], gspec["cols"], gspec["proc"], gspec["link"],
                          gspec.get("storage", 0.0))
        nodes = list(base.nodes)
        edges = list(base.edges)
        proc = list(base.proc_capacity)
        tx = list(base.tx_capacity)
        storage = list(base.storage_capacity)
        for label, s in net.get("storage_overrides", {}).items():
            storage[nodes.index(int(label))] = float(s)
    else:
        nodes = list(net["nodes"])
        proc = _per_node(net["proc"], nodes)
        storage = _per_node(net.get("storage", 0.0), nodes)
        edges = [(e[0], e[1]) for e in net["edges"]]
        tx = [float(e[2]) for e in net["edges"]]
    cloud = None
    if net.get("cloud"):
        cs = net["cloud"]
        cloud = cs["label"]
        attach = nodes if cs.get("attach", "all") == "all" else cs["attach"]
        nodes = nodes + [cloud]
        proc = proc + [float(cs["proc"])]
        storage = storage + [0.0]
        for v in attach:
            edges += [(cloud, v), (v, cloud)]
            tx += [float(cs["link"])] * 2
    graph = NetworkGraph(nodes, edges, np.array(proc), np.array(tx), np.array(storage),
                         cloud_node=cloud,
                         replacement_rate_cap=float(net.get("replacement_rate_cap", math.inf)))
    if "capacity_scale" in net:
        graph = graph.scaled(*net["capacity_scale"])
    return graph


def _per_node(spec, nodes) -> list:
    if isinstance(spec, dict):
        return [float(spec[str(v)]) for v in nodes]
    if isinstance(spec, list):
        return [float(v) for v in spec]
    return [float(spec)] * len(nodes)


def build_world(sc: Scenario, rng: np.random.Generator | None = None) -> World:
    graph = build_network(sc.network)
    db_ids = [d["id"] for d in sc.databases]
    sizes = np.array([float(d["size"]) for d in sc.databases])
    services = {}
    for name, s in sc.services.items():
        fns = tuple(Function(f["scaling"], f["workload"], db_ids.index(f["database"]), f["merging"])
                    for f in s["functions"])
        services[name] = ServiceSpec(name, fns, float(s.get("packet_size", 1.0)))
    clients = [Client(c["id"], graph.index[c["source"]], graph.index[c["destination"]],
                      services[c["service"]], float(c.get("rate", 0.0)),
                      max_burst=c.get("max_burst")) for c in sc.clients]
    world = World(graph, clients, sizes, db_ids, CachingVector.empty(graph, sizes))
    world.x = build_placement(sc, world, rng)
    return world


def build_placement(sc: Scenario, world: World, rng=None) -> CachingVector:
    spec = sc.placement
    src = spec.get("source", "empty")
    g, sizes = world.graph, world.sizes
    if src == "empty":
        return CachingVector.empty(g, sizes)
    if src == "explicit":
        return _from_labels(spec["assignment"], world)
    if src == "file":
        with open(spec["path"]) as fh:
            return _from_labels(json.load(fh)["assignment"], world)
    if src in ("random-placement", "random-selection"):
        prng = np.random.default_rng(spec.get("seed", sc.seed))
        fn = random_placement if src == "random-placement" else random_selection
        return fn(g, sizes, int(spec["S"]), prng)
    if src == "proposed":
        p = spec.get("popularity")
        sol = solve_milp_placement(g, world.clients, sizes, p,
                                   node_budget=int(spec.get("node_budget", 20_000)))
        return sol.x
    raise ValueError(f"unknown placement source {src!r}")


def _from_labels(assignment: dict, world: World) -> CachingVector:
    g = world.graph
    x = CachingVector.empty(g, world.sizes)
    for node, dbs in assignment.items():
        label = _node_label(node, g)
        for k in dbs:
            x.x[g.index[label], world.db_index(k)] = 1
    if x.cloud_index is not None:
        x.x[x.cloud_index] = 0
    return x


def _node_label(node, g):
    if node in g.index:
        return node
    for v in g.nodes:
        if str(v) == str(node):
            return v
    raise KeyError(f"unknown node {node!r}")


def placement_to_labels(x: CachingVector, world: World) -> dict:
    g = world.graph
    return {str(g.nodes[i]): [world.db_ids[k] for k in np.flatnonzero(x.x[i])]
            for i in range(g.n_nodes) if x.x[i].any()}


def build_arrivals(sc: Scenario, world: World, rng: np.random.Generator) -> ArrivalProcess:
    tr = sc.traffic
    mode = tr.get("mode", "iid")
    C = len(world.clients)
    if mode == "iid":
        total = tr.get("total_rate")
        if total is not None:
            p = tr.get("popularity")
            p = np.full(C, 1.0 / C) if p is None else np.asarray(p, dtype=float)
            for c, share in zip(world.clients, p):
                c.rate = float(total) * float(share)
        return ArrivalProcess(world.clients, rng, "iid")
    if mode == "popularity":
        chain = PopularityChain(C, float(tr.get("gamma", 1.0)), float(tr.get("swap_prob", 0.0)),
                                rng, tr.get("order"))
        return ArrivalProcess(world.clients, rng, "popularity", float(tr["total_rate"]), chain)
    if mode == "markov":
        chain = MarkovModulated(tr["rates"], tr["transition"], rng, int(tr.get("state", 0)))
        return ArrivalProcess(world.clients, rng, "markov", chain=chain)
    raise ValueError(f"unknown traffic mode {mode!r}")


# running -----------------------------------------------------------------------

@dataclass
class RunResult:
    scenario_hash: str
    metrics: object
    frames: list
    simulator: Simulator
    replacement: ReplacementController | None = None

    @property
    def monitor(self):
        return self.simulator.monitor


def make_simulator(sc: Scenario, world: World | None = None):
    seeds = np.random.SeedSequence(sc.seed).spawn(3)
    place_rng, arrival_rng = (np.random.default_rng(s) for s in seeds[:2])
    world = world or build_world(sc, place_rng)
    arrivals = build_arrivals(sc, world, arrival_rng)
    monitor = InvariantMonitor() if sc.invariants else None
    sim = Simulator(world.graph, world.clients, world.x, arrivals, sc.policy, sc.warmup,
                    sc.sample_every, monitor, sc.trace)
    ctrl = None
    rep = sc.replacement or {"policy": "none"}
    if rep.get("policy", "none") != "none":
        ctrl = ReplacementController(rep["policy"], int(rep["frame"]), world.graph, world.clients,
                                     score_samples=int(rep.get("score_samples", 256)),
                                     milp_nodes=int(rep.get("milp_nodes", 30)),
                                     milp_time=rep.get("milp_time"),
                                     p_step=float(rep.get("p_step", 0.01)),
                                     tabu=int(rep.get("tabu", 8)))
        sim.observers.append(ctrl)
    return sim, ctrl, world


def run(sc: Scenario, out_dir=None, early_stop: bool = False) -> RunResult:
    """Simulate ``sc`` and (optionally) write metrics / frame log / trace CSVs.

    With ``early_stop`` the run ends once the backlog exceeds what a stable
    system could plausibly hold (see :func:`divergence_limit`).
    """
    sim, ctrl, world = make_simulator(sc)
    limit = divergence_limit(sc, sim) if early_stop else math.inf
    for _ in range(sc.horizon):
        sim.step()
        if early_stop and sim.t % sc.sample_every == 0 and sim.backlogs()[0] > limit:
            break
    res = RunResult(sc.hash(), sim.metrics, ctrl.log if ctrl else [], sim, ctrl)
    if out_dir is not None:
        write_outputs(res, sc, out_dir)
    return res


def divergence_limit(sc: Scenario, sim: Simulator) -> float:
    """Backlog beyond which a run is declared divergent without finishing it.

    Two thousand slots' worth of arrivals, plus four frames' worth when a
    replacement policy runs (a decision lands two frames after its estimate
    window, and asynchronous updates need a few frames to settle).
    """
    rate = float(np.sum(sim.arrivals.rates())) or 1.0
    slots = 2000
    rep = sc.replacement or {}
    if rep.get("policy", "none") != "none":
        slots += 4 * int(rep["frame"])
    return slots * rate


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".10g")


def metrics_csv(res: RunResult) -> str:
    buf = io.StringIO()
    buf.write(f"# scenario {res.scenario_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for row in res.metrics.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def frames_csv(res: RunResult) -> str:
    buf = io.StringIO()
    buf.write(f"# scenario {res.scenario_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRAME_COLUMNS)
    for r in res.frames:
        w.writerow([r.frame, r.policy, r.delta, _fmt(r.bytes), _fmt(r.metric)])
    return buf.getvalue()


def trace_csv(res: RunResult) -> str:
    buf = io.StringIO()
    buf.write(f"# scenario {res.scenario_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in res.metrics.trace:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_outputs(res: RunResult, sc: Scenario, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / "metrics.csv", "scenario": out / "scenario.json"}
    paths["metrics"].write_text(metrics_csv(res))
    sc.save(paths["scenario"])
    if res.replacement is not None:
        paths["frames"] = out / "frames.csv"
        paths["frames"].write_text(frames_csv(res))
    if sc.trace:
        paths["trace"] = out / "trace.csv"
        paths["trace"].write_text(trace_csv(res))
    return paths


def read_csv_hash(path) -> str:
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("# scenario "):
        raise ScenarioHashMismatch(f"{path}: missing scenario header")
    return first.split()[-1]


def verify_output(path, sc: Scenario):
    """Raise :class:`ScenarioHashMismatch` unless ``path`` was produced by ``sc``."""
    h = read_csv_hash(path)
    if h != sc.hash():
        raise ScenarioHashMismatch(f"{path}: scenario {h} does not match {sc.hash()}")


# stability ---------------------------------------------------------------------

@dataclass
class Verdict:
    stable: bool
    slope: float
    threshold: float
    mean_delay: float
    mean_backlog: float


def stability_verdict(metrics, warmup: int, rate: float, rel_tol: float = 2e-3,
                      abs_tol: float = 1e-3) -> Verdict:
    """Bounded-backlog test on the last half of the post-warmup samples.

    The least-squares slope of total backlog against slot must stay below
    ``max(abs_tol, rel_tol * rate)`` units per slot, ``rate`` being the
    offered load in units per slot.
    """
    slots, backlog = metrics.backlog_series()
    keep = slots > warmup
    slots, backlog = slots[keep], backlog[keep]
    thr = max(abs_tol, rel_tol * rate)
    if len(slots) < 4:
        return Verdict(True, 0.0, thr, metrics.mean_delay(), float(backlog.mean()) if len(backlog) else 0.0)
    half = len(slots) // 2
    s, b = slots[half:], backlog[half:]
    slope = float(np.polyfit(s, b, 1)[0])
    return Verdict(slope < thr, slope, thr, metrics.mean_delay(), float(b.mean()))


def run_point(sc: Scenario, lam: float, rel_tol: float = 2e-3):
    """Run at aggregate rate ``lam``; returns ``(Verdict, RunResult)``."""
    sc_l = sc.with_rate(lam)
    res = run(sc_l, early_stop=True)
    if res.simulator.t < sc_l.horizon:
        v = Verdict(False, math.inf, rel_tol * lam, math.inf, res.simulator.backlogs()[0])
        return v, res
    return stability_verdict(res.metrics, sc_l.warmup, lam, rel_tol), res


@dataclass
class SweepResult:
    points: list            # (lam, Verdict) sorted by lam
    boundary: float
    bracket: tuple


def stability_sweep(sc: Scenario, lambda_grid, bisect_steps: int = 0,
                    rel_tol: float = 2e-3) -> SweepResult:
    """Largest stable rate on the grid, optionally refined by bisection."""
    pts = []
    for lam in sorted(float(v) for v in lambda_grid):
        v, _ = run_point(sc, lam, rel_tol)
        pts.append((lam, v))
    stable = [lam for lam, v in pts if v.stable]
    lo = max(stable, default=0.0)
    higher = [lam for lam, v in pts if lam > lo and not v.stable]
    hi = min(higher, default=math.inf)
    for _ in range(bisect_steps):
        if not math.isfinite(hi):
            break
        mid = 0.5 * (lo + hi)
        v, _ = run_point(sc, mid, rel_tol)
        pts.append((mid, v))
        if v.stable:
            lo = mid
        else:
            hi = mid
    pts.sort(key=lambda p: p[0])
    return SweepResult(pts, lo, (lo, hi))


def bisect_boundary(sc: Scenario, lo: float, hi: float, steps: int, rel_tol: float = 2e-3):
    """Bisection for the stability boundary assuming ``lo`` stable, ``hi`` not."""
    pts = []
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        v, _ = run_point(sc, mid, rel_tol)
        pts.append((mid, v))
        if v.stable:
            lo = mid
        else:
            hi = mid
    return SweepResult(sorted(pts, key=lambda p: p[0]), lo, (lo, hi))


def scale_capacities(sc: Scenario, alpha_proc: float, alpha_tx: float) -> Scenario:
    net = copy.deepcopy(sc.network)
    net["capacity_scale"] = [float(alpha_proc), float(alpha_tx)]
    return sc.replace(network=net)


def feasible_region(sc: Scenario, alpha_grid, delay_requirement: float = 30.0,
                    rel_tol: float = 2e-3):
    """Grid of ``(alpha_proc, alpha_tx) -> (feasible, mean_delay)``."""
    alphas = sorted(float(a) for a in alpha_grid)
    out = {}
    for a1 in alphas:
        for a2 in alphas:
            sc_a = scale_capacities(sc, a1, a2)
            res = run(sc_a, early_stop=True)
            if res.simulator.t < sc_a.horizon:
                out[(a1, a2)] = (False, math.inf)
                continue
            rate = float(sc.traffic.get("total_rate", 0.0))
            v = stability_verdict(res.metrics, sc_a.warmup, rate, rel_tol)
            d = res.metrics.mean_delay()
            ok = v.stable and math.isfinite(d) and d <= delay_requirement
            out[(a1, a2)] = (ok, d)
    return out


def saving_ratio(region: dict) -> float:
    """``1 - alpha`` for the smallest feasible alpha on the diagonal."""
    diag = sorted(a1 for (a1, a2), (ok, _) in region.items() if a1 == a2 and ok)
    return 1.0 - diag[0] if diag else 0.0
