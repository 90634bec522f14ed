import itertools

import numpy as np
import pytest

from vrjp.errors import GraphError
from vrjp.graph import build_graph, exhaustion, wire, wired_subset


def brute_force_grid_edges(dim, side):
    """Oracle: enumerate nearest-neighbor pairs of the box lattice directly."""
    pts = list(itertools.product(range(side), repeat=dim))
    count = 0
    for a, b in itertools.combinations(pts, 2):
        if sum(abs(x - y) for x, y in zip(a, b)) == 1:
            count += 1
    return count


def test_grid_smallest():
    g = build_graph({"family": "grid", "dim": 1, "side": 3, "conductance": 1.0})
    assert g.num_vertices == 3
    assert g.num_edges() == 2
    assert all(c == 1.0 for _, _, c in g.edges())


def test_explicit_echo():
    g = build_graph(
        {"family": "explicit", "vertices": 3, "edges": [[0, 1, 1.0], [1, 2, 2.0]], "root": 0}
    )
    assert g.conductance(0, 1) == 1.0
    assert g.conductance(1, 2) == 2.0
    assert g.conductance(0, 2) == 0.0  # non-edge lookup convention


def test_grid_edge_count_oracle():
    # 5^3 grid, C=2: oracle count frozen from brute-force enumeration = 300
    assert brute_force_grid_edges(3, 5) == 300
    g = build_graph({"family": "grid", "dim": 3, "side": 5, "conductance": 2.0})
    assert g.num_vertices == 125
    assert g.num_edges() == 300
    assert all(c == 2.0 for _, _, c in g.edges())


def test_grid_edge_count_small_cases():
    for dim, side in [(1, 4), (2, 3), (2, 4), (3, 2)]:
        g = build_graph({"family": "grid", "dim": dim, "side": side})
        assert g.num_edges() == brute_force_grid_edges(dim, side)


def test_build_rejections():
    with pytest.raises(GraphError):
        build_graph({"family": "explicit", "vertices": 2, "edges": [[0, 0, 1.0]]})  # self loop
    with pytest.raises(GraphError):
        build_graph({"family": "explicit", "vertices": 2, "edges": [[0, 1, -1.0]]})  # bad weight
    with pytest.raises(GraphError):
        build_graph({"family": "explicit", "vertices": 4, "edges": [[0, 1, 1.0], [2, 3, 1.0]]})  # disconnected
    with pytest.raises(GraphError):
        build_graph({"family": "nope"})


def test_wire_single_vertex():
    g = build_graph({"family": "grid", "dim": 1, "side": 3, "conductance": 1.0})
    w = wire(g, [1])
    assert w.num_states == 2
    assert w.conduct[0, 1] == 2.0  # both cut edges aggregated


def test_wire_rejects_empty_boundary_and_bad_sets():
    g = build_graph({"family": "grid", "dim": 1, "side": 3, "conductance": 1.0})
    with pytest.raises(GraphError):
        wire(g, [0, 1, 2])  # whole graph: boundary vertex would be isolated
    with pytest.raises(GraphError):
        wire(g, [0, 2])  # disconnected
    with pytest.raises(GraphError):
        wire(g, [5])  # not a subset
    with pytest.raises(GraphError):
        wire(g, [])


def test_wire_cut_oracle_3d():
    g = build_graph({"family": "grid", "dim": 3, "side": 5, "conductance": 1.0})
    center = np.asarray(g.coords[g.root])
    vn = [v for v in range(125) if np.max(np.abs(np.asarray(g.coords[v]) - center)) <= 1]
    w = wire(g, vn)
    # oracle: per-vertex count of neighbors outside V_n by enumeration
    for v in vn:
        outside = sum(1 for y, _ in g.neighbors(v) if y not in set(vn))
        assert w.conduct[w.index[v], w.delta] == pytest.approx(outside)


def test_wire_conductance_conservation():
    g = build_graph({"family": "grid", "dim": 2, "side": 5, "conductance": 1.5})
    center = np.asarray(g.coords[g.root])
    vn = [v for v in range(25) if np.max(np.abs(np.asarray(g.coords[v]) - center)) <= 1]
    w = wire(g, vn)
    for v in vn:
        assert w.conduct[w.index[v]].sum() == pytest.approx(g.weighted_degree(v))


def test_wire_monotone_compatible():
    # wiring V_n then aggregating the V_n \ V_m data equals wiring V_m
    g = build_graph({"family": "grid", "dim": 2, "side": 7, "conductance": 1.0})
    exh = exhaustion(g, 3)
    vm, vn = exh.level(1), exh.level(2)
    wm, wn = wire(g, vm), wire(g, vn)
    for x in vm:
        i_m, i_n = wm.index[x], wn.index[x]
        for y in vm:
            assert wm.conduct[i_m, wm.index[y]] == wn.conduct[i_n, wn.index[y]]
        extra = sum(wn.conduct[i_n, wn.index[y]] for y in vn if y not in set(vm))
        assert wm.conduct[i_m, wm.delta] == pytest.approx(wn.conduct[i_n, wn.delta] + extra)


def test_exhaustion_path():
    g = build_graph({"family": "grid", "dim": 1, "side": 5, "conductance": 1.0})
    exh = exhaustion(g, 2)
    assert set(exh.level(1)) == {1, 2, 3}
    assert set(exh.level(2)) == {0, 1, 2, 3, 4}
    with pytest.raises(GraphError):
        exhaustion(g, 3)  # exceeds the finite graph


def test_exhaustion_grid_ball_sizes():
    g = build_graph({"family": "grid", "dim": 3, "side": 9, "conductance": 1.0})
    exh = exhaustion(g, 3)
    for r in (1, 2, 3):
        assert len(exh.level(r)) == (2 * r + 1) ** 3


def test_exhaustion_tree_ball_sizes():
    b, depth = 3, 4
    g = build_graph({"family": "tree", "branching": b, "depth": depth, "conductance": 1.0})
    exh = exhaustion(g, 3)
    for r in (1, 2, 3):
        assert len(exh.level(r)) == sum(b**j for j in range(r + 1))  # geometric sum


def test_exhaustion_slow_family_strictly_nested():
    g = build_graph({"family": "grid", "dim": 3, "side": 13, "conductance": 1.0})
    exh = exhaustion(g, 10, family="slow")
    sizes = [len(l) for l in exh.levels]
    assert all(a < b for a, b in zip(sizes, sizes[1:]))
    for lvl in exh.levels:
        assert g.root in lvl
        assert g.is_connected_subset(lvl)
    for a, b in zip(exh.levels, exh.levels[1:]):
        assert set(a) < set(b)
    # even levels are exactly the graph-distance balls
    dist = g.bfs_distances(g.root)
    for n in (2, 4, 6, 8, 10):
        assert len(exh.level(n)) == int(np.sum(dist <= n // 2))


def test_wired_subset_mapping():
    g = build_graph({"family": "grid", "dim": 1, "side": 5, "conductance": 1.0})
    w = wire(g, [1, 2, 3])
    assert wired_subset(w, [2]) == (w.index[2],)
    with pytest.raises(GraphError):
        wired_subset(w, [0])
