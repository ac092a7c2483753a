import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import csgraph_from_dense, floyd_warshall as scipy_fw

from didcnc.alg import LIVE_PROC, STATIC_PROC, STATIC_TX, REPLICATE, AlgEdge, route_loads
from didcnc.controller import (RouteInfeasible, SlotView, VirtualQueues, alg_edge_weight,
                               extract_path, floyd_warshall, l2s_route, load_weight, min_er,
                               route_weight, s2l_route, select_routes, update_virtual_queues,
                               virtual_arrivals)
from didcnc.oracles import brute_force_min_er, er_weight
from didcnc.services import Client, Function, ServiceSpec
from didcnc.topology import CachingVector, NetworkGraph

from conftest import PHI1, line_graph, random_min_er_instance, star_instance


# virtual queues ----------------------------------------------------------------

@pytest.mark.parametrize("q,c,a,expect", [(0, 3, 0, 0), (5, 3, 1, 3), (1, 3, 0, 0)])
def test_virtual_queue_update_examples(q, c, a, expect):
    g = NetworkGraph([0, 1], [(0, 1)], [c, c], [c], [0, 0])
    vq = VirtualQueues(g)
    vq.node[:] = q
    vq.link[:] = q
    update_virtual_queues(vq, [a, a], [a])
    assert np.all(vq.node == expect) and np.all(vq.link == expect)


def test_virtual_queue_rejects_negative_arrivals():
    vq = VirtualQueues(line_graph(2))
    with pytest.raises(ValueError):
        vq.update([-1.0, 0.0], [0.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=3, max_size=3),
       st.lists(st.floats(0, 100), min_size=3, max_size=3))
def test_virtual_queues_stay_nonnegative(q, a):
    g = NetworkGraph([0, 1, 2], [], [1.0, 5.0, 50.0], [], [0, 0, 0])
    vq = VirtualQueues(g)
    vq.node = np.array(q)
    vq.update(a, [])
    assert np.all(vq.node >= 0)
    assert np.allclose(vq.node, np.maximum(np.array(q) - g.proc_capacity + np.array(a), 0))


def test_normalized_view_is_queue_over_capacity():
    g = line_graph(2, proc=[2.0, 0.0], link=4.0)
    vq = VirtualQueues(g)
    vq.node[:] = [6.0, 0.0]
    vq.link[:] = 8.0
    qn, ql = vq.normalized()
    assert qn.tolist() == [3.0, 0.0] and np.all(ql == 2.0)
    un, ul = vq.unit_weights()
    assert un[0] == 1.5 and un[1] == np.inf and np.all(ul == 0.5)


# edge weights ------------------------------------------------------------------

def test_edge_weight_examples():
    g = NetworkGraph([0, 1], [(0, 1)], [3.0, 3.0], [2.0], [0, 0])
    vq = VirtualQueues(g)
    e = AlgEdge(STATIC_TX, 1, 0, 1)
    assert alg_edge_weight(PHI1, e, vq) == 0.0
    vq.link[0] = 20.0   # normalised queue 10 on a capacity-2 link
    assert alg_edge_weight(PHI1, e, vq) == pytest.approx(4.6)
    vq.node[:] = 99.0
    assert alg_edge_weight(PHI1, AlgEdge(STATIC_PROC, 1, 0), vq) == 0.0
    assert alg_edge_weight(PHI1, AlgEdge(REPLICATE, 1, 0), vq) == 0.0
    assert alg_edge_weight(PHI1, AlgEdge(LIVE_PROC, 1, 0), vq) == pytest.approx(7.1 * 99 / 9)


# shortest paths ----------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_floyd_warshall_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    edges = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < 0.4]
    w = rng.uniform(0, 5, len(edges)) * (rng.random(len(edges)) > 0.2)
    tail = np.array([e[0] for e in edges], dtype=np.int64)
    head = np.array([e[1] for e in edges], dtype=np.int64)
    dist, hops, nxt = floyd_warshall(n, tail, head, w)
    # reference: dense matrix where absent edges are inf and zero-weight edges are kept
    dense = np.full((n, n), np.inf)
    for (i, j), c in zip(edges, w):
        dense[i, j] = c
    np.fill_diagonal(dense, 0.0)
    ref = scipy_fw(csgraph_from_dense(dense, null_value=np.inf), directed=True)
    assert np.allclose(dist, ref, rtol=0, atol=1e-12)
    for i in range(n):
        for j in range(n):
            if np.isfinite(dist[i, j]):
                p = extract_path(nxt, i, j)
                cost = sum(dense[a, b] for a, b in zip(p[:-1], p[1:]))
                assert cost == pytest.approx(dist[i, j], abs=1e-12)
                assert len(p) - 1 == hops[i, j]
            else:
                assert nxt[i, j] == -1


def test_floyd_warshall_prefers_fewer_hops_on_equal_weight():
    # 0 -> 1 -> 2 and 0 -> 2 all free: the direct edge must win
    dist, hops, nxt = floyd_warshall(3, np.array([0, 1, 0]), np.array([1, 2, 2]),
                                     np.zeros(3))
    assert dist[0, 2] == 0.0 and hops[0, 2] == 1 and extract_path(nxt, 0, 2) == (0, 2)


def test_infinite_weight_edges_are_skipped():
    dist, _, nxt = floyd_warshall(2, np.array([0]), np.array([1]), np.array([np.inf]))
    assert dist[0, 1] == np.inf and nxt[0, 1] == -1
    with pytest.raises(ValueError):
        extract_path(nxt, 0, 1)


# min-ER ------------------------------------------------------------------------

def test_min_er_single_node():
    g = NetworkGraph([0], [], [1.0], [], [0.0])
    c = Client("c", 0, 0, ServiceSpec("e"))
    r = min_er(c, VirtualQueues(g), CachingVector.empty(g, [1.0]))
    assert r.weight == 0.0 and r.live_paths == ((0,),) and r.theta == ()


def test_min_er_processes_at_cheapest_node():
    g = line_graph(3, proc=10.0)
    vq = VirtualQueues(g)
    vq.node[:] = [50.0, 1.0, 50.0]
    spec = ServiceSpec("f", (Function(1.0, 2.0, 0, 0.5),))
    x = CachingVector.empty(g, [1.0])
    x.x[:, 0] = 1
    c = Client("c", 0, 2, spec)
    r = min_er(c, vq, x)
    assert r.theta == (1,)
    w, _ = brute_force_min_er(c, x, g, vq.node, vq.link)
    assert r.weight == pytest.approx(w, abs=1e-12)


def test_min_er_picks_cheapest_cached_source():
    g, client, x, vq = star_instance()
    r = min_er(client, vq, x)
    assert r.sources == (1,) and r.theta == (0,)
    # weight = static transfer over link 1->0 plus processing at the hub
    assert r.weight == pytest.approx(4.0 / 4.0 + 5.0 / 100.0)


@pytest.mark.parametrize("seed", range(40))
def test_min_er_matches_brute_force(seed):
    g, client, x, vq = random_min_er_instance(seed)
    w, _ = brute_force_min_er(client, x, g, vq.node, vq.link)
    if not np.isfinite(w):
        with pytest.raises(RouteInfeasible):
            min_er(client, vq, x)
        return
    r = min_er(client, vq, x)
    assert r.weight == pytest.approx(w, rel=1e-9, abs=1e-9)
    assert er_weight(r, client, g, vq.node, vq.link) == pytest.approx(w, rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_weight_identity(seed):
    g, client, x, vq = random_min_er_instance(seed)
    view = SlotView(g, vq, x)
    try:
        r = min_er(client, view)
    except RouteInfeasible:
        return
    rn, rl = route_loads(r, client.service, g)
    w17 = load_weight(rn, rl, view)
    w18 = route_weight(r, client.service, view)
    assert w17 == pytest.approx(w18, rel=1e-9, abs=1e-9)
    assert r.weight == pytest.approx(w18, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_weight_scales_with_queues(seed, alpha):
    g, client, x, vq = random_min_er_instance(seed)
    try:
        r = min_er(client, vq, x)
    except RouteInfeasible:
        return
    scaled = vq.copy()
    scaled.node *= alpha
    scaled.link *= alpha
    r2 = min_er(client, scaled, x)
    assert r2.weight == pytest.approx(alpha * r.weight, rel=1e-9, abs=1e-9)
    # the route chosen under scaled queues is optimal for the original ones
    assert er_weight(r2, client, g, vq.node, vq.link) == pytest.approx(r.weight, rel=1e-9, abs=1e-9)


def test_min_er_is_deterministic():
    g, client, x, vq = random_min_er_instance(7)
    assert min_er(client, vq, x).key() == min_er(client, vq, x).key()


def test_unreachable_destination_raises():
    g = NetworkGraph([0, 1], [], [1.0, 1.0], [], [0, 0])
    c = Client("c", 0, 1, ServiceSpec("e"))
    with pytest.raises(RouteInfeasible, match="unreachable"):
        min_er(c, VirtualQueues(g), CachingVector.empty(g, [1.0]))


def test_missing_database_raises():
    g = line_graph(2)
    c = Client("c", 0, 1, ServiceSpec("f", (Function(1, 1, 0, 1),)))
    with pytest.raises(RouteInfeasible, match="static source") as info:
        min_er(c, VirtualQueues(g), CachingVector.empty(g, [1.0]))
    assert info.value.stage == 1


# route selection ---------------------------------------------------------------

def _two_client_setup():
    g = line_graph(3, proc=10.0)
    x = CachingVector.empty(g, [1.0])
    x.x[1, 0] = 1
    spec = ServiceSpec("f", (Function(1.0, 7.1, 0, 0.0),))
    clients = [Client("a", 0, 2, spec), Client("b", 2, 0, ServiceSpec("e"))]
    vq = VirtualQueues(g)
    vq.node[:] = [100.0, 0.0, 100.0]
    return g, x, clients, vq


def test_select_routes_all_on_min_er():
    g, x, clients, vq = _two_client_setup()
    view = SlotView(g, vq, x)
    sel = select_routes(np.array([5, 0]), clients, view)
    assert list(sel.routes) == [0]
    route, count, _ = sel.routes[0]
    assert count == 5 and route.key() == min_er(clients[0], view).key()
    assert len(select_routes(np.array([0, 0]), clients, view)) == 0


def test_virtual_arrivals_single_request():
    g, x, clients, vq = _two_client_setup()
    sel = select_routes(np.array([1, 0]), clients, SlotView(g, vq, x))
    a_node, a_link = virtual_arrivals(sel, g)
    assert a_node[1] == pytest.approx(7.1) and a_node.sum() == pytest.approx(7.1)
    assert a_link[g.link(0, 1)] == 1.0 and a_link[g.link(1, 2)] == 1.0


def test_virtual_arrivals_hand_sum():
    g, x, clients, vq = _two_client_setup()
    view = SlotView(g, vq, x)
    sel = select_routes(np.array([2, 1]), clients, view)
    a_node, a_link = virtual_arrivals(sel, g)
    # client a: 2 x (0->1, proc 7.1 at 1, 1->2); client b: 1 x (2->1->0)
    assert a_node.tolist() == pytest.approx([0.0, 14.2, 0.0])
    expect = np.zeros(g.n_edges)
    expect[g.link(0, 1)] += 2
    expect[g.link(1, 2)] += 2
    expect[g.link(2, 1)] += 1
    expect[g.link(1, 0)] += 1
    assert np.allclose(a_link, expect)
    # clients are routed independently of each other
    solo = select_routes(np.array([0, 1]), clients, view)
    assert solo.routes[1][0].key() == sel.routes[1][0].key()


def test_blocked_requests_are_counted():
    g = line_graph(2)
    clients = [Client("c", 0, 1, ServiceSpec("f", (Function(1, 1, 0, 1),)))]
    blocked = {}
    sel = select_routes(np.array([3]), clients, SlotView(g, VirtualQueues(g),
                                                         CachingVector.empty(g, [1.0])),
                        blocked=blocked)
    assert len(sel) == 0 and blocked == {0: 3}


# benchmarks --------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_benchmarks_coincide_when_everything_is_cached(seed):
    g, client, x, vq = random_min_er_instance(seed)
    full = CachingVector(np.ones_like(x.x), x.sizes)
    try:
        r = min_er(client, vq, full)
    except RouteInfeasible:
        return
    assert l2s_route(client, vq, full).weight == pytest.approx(r.weight, abs=1e-9)
    if all(f.merging == 0 for f in client.service.functions) or not client.service.functions:
        assert s2l_route(client, vq, full).weight == pytest.approx(r.weight, abs=1e-9)
    # with a local copy everywhere, static objects never travel
    s2l = s2l_route(client, vq, full)
    assert all(len(p) == 1 for p in s2l.static_paths)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_joint_route_never_worse_than_benchmarks(seed):
    g, client, x, vq = random_min_er_instance(seed)
    try:
        w = min_er(client, vq, x).weight
    except RouteInfeasible:
        return
    for fn in (s2l_route, l2s_route):
        try:
            r = fn(client, vq, x)
        except RouteInfeasible:
            continue
        assert w <= er_weight(r, client, g, vq.node, vq.link) + 1e-9


def test_s2l_pays_static_detour():
    # 0 - 1 - 2 line plus a far source 3 hanging off node 0 behind a congested link
    nodes = [0, 1, 2, 3]
    edges = [(0, 1), (1, 0), (1, 2), (2, 1), (3, 0), (0, 3), (3, 1), (1, 3)]
    g = NetworkGraph(nodes, edges, np.array([4.0, 4.0, 4.0, 0.0]), np.full(8, 2.0), np.ones(4))
    vq = VirtualQueues(g)
    vq.node[:] = [0.5, 3.0, 1.0, 0.0]
    vq.link[g.link(3, 0)] = 40.0
    vq.link[g.link(1, 0)] = 40.0
    x = CachingVector.empty(g, [1.0])
    x.x[3, 0] = 1
    c = Client("c", 0, 2, ServiceSpec("f", (Function(1.0, 1.0, 0, 2.0),)))
    joint = min_er(c, vq, x)
    s2l = s2l_route(c, vq, x)
    assert s2l.theta == (0,) and joint.theta == (2,)
    assert joint.weight < s2l.weight
    assert s2l.weight == pytest.approx(er_weight(s2l, c, g, vq.node, vq.link))


def test_l2s_processes_only_at_sources():
    g, client, x, _ = star_instance()
    g2 = NetworkGraph(g.nodes, g.edges, np.array([10.0, 1.0, 1.0, 1.0]), g.tx_capacity,
                      g.storage_capacity)
    r = l2s_route(client, VirtualQueues(g2), x)
    assert r.theta[0] in (1, 2) and len(r.static_paths[0]) == 1


def test_l2s_infeasible_without_compute_at_sources():
    g, client, x, vq = star_instance()
    with pytest.raises(RouteInfeasible):
        l2s_route(client, vq, x)


def test_unknown_policy():
    g, client, x, vq = star_instance()
    with pytest.raises(ValueError):
        min_er(client, vq, x, policy="greedy")
