import numpy as np
import pytest

from didcnc.controller import VirtualQueues
from didcnc.services import Client, Function, ServiceSpec
from didcnc.topology import CachingVector, NetworkGraph


def line_graph(n, proc=10.0, link=10.0, storage=1.0, labels=None):
    labels = list(labels or range(n))
    edges = []
    for a, b in zip(labels[:-1], labels[1:]):
        edges += [(a, b), (b, a)]
    proc = np.broadcast_to(np.asarray(proc, dtype=float), (n,)).copy()
    return NetworkGraph(labels, edges, proc, np.full(len(edges), float(link)),
                        np.full(n, float(storage)))


def random_graph(rng, n, p_edge=0.6, cap_zero=0.1):
    """Random digraph on n nodes; some capacities are zero on purpose."""
    edges = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < p_edge]
    proc = rng.uniform(0.5, 5.0, n)
    proc[rng.random(n) < cap_zero] = 0.0
    tx = rng.uniform(0.5, 5.0, len(edges))
    tx[rng.random(len(edges)) < cap_zero] = 0.0
    return NetworkGraph(list(range(n)), edges, proc, tx, np.full(n, 1.0))


def random_service(rng, n_functions, n_databases):
    fns = tuple(Function(float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.5, 3.0)),
                         int(rng.integers(n_databases)), float(rng.choice([0.0, rng.uniform(0.1, 2.0)])))
                for _ in range(n_functions))
    return ServiceSpec(f"s{n_functions}", fns)


def random_queues(rng, g, zero_frac=0.2):
    vq = VirtualQueues(g)
    vq.node = rng.uniform(0, 20, g.n_nodes) * (rng.random(g.n_nodes) > zero_frac)
    vq.link = rng.uniform(0, 20, g.n_edges) * (rng.random(g.n_edges) > zero_frac)
    return vq


def random_placement_matrix(rng, g, n_databases, density=0.4):
    x = (rng.random((g.n_nodes, n_databases)) < density).astype(np.int8)
    return CachingVector(x, np.ones(n_databases))


def random_min_er_instance(seed, n_max=4, m_max=3, n_databases=2):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    g = random_graph(rng, n)
    spec = random_service(rng, int(rng.integers(0, m_max)), n_databases)
    s, d = (int(v) for v in rng.integers(n, size=2))
    client = Client("c", s, d, spec)
    x = random_placement_matrix(rng, g, n_databases)
    return g, client, x, random_queues(rng, g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


PHI1 = ServiceSpec("phi1", (Function(0.83, 7.1, 0, 0.92), Function(1.06, 5.8, 1, 1.06)))


def star_instance(link_queues=(4.0, 8.0, 2.0)):
    """Hub 0 with spokes 1..3; client served at the hub, static objects from a spoke.

    Spoke v's static path weight is proportional to ``link_queues[v-1]``;
    the database is cached at spokes 1 and 2 only.
    """
    nodes = [0, 1, 2, 3]
    edges = []
    for v in (1, 2, 3):
        edges += [(v, 0), (0, v)]
    proc = np.array([10.0, 0.0, 0.0, 0.0])
    g = NetworkGraph(nodes, edges, proc, np.full(len(edges), 2.0), np.ones(4))
    vq = VirtualQueues(g)
    for v, q in zip((1, 2, 3), link_queues):
        vq.link[g.link(v, 0)] = q
    vq.node[0] = 5.0
    spec = ServiceSpec("f", (Function(1.0, 1.0, 0, 1.0),))
    client = Client("c", 0, 0, spec)
    x = CachingVector.empty(g, [1.0])
    x.x[1, 0] = x.x[2, 0] = 1
    return g, client, x, vq


ACCEPTANCE_LINES = []


def _criterion_key(line):
    tag = line.split()[1].rstrip(":")
    digits = "".join(ch for ch in tag if ch.isdigit())
    return int(digits), tag


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_key):
            terminalreporter.write_line(line)
