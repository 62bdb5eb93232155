import itertools

import networkx as nx
import numpy as np
import pytest
from scipy import stats

from abcnet.graph import (
    DisconnectedPairError,
    GraphParseError,
    RouteCache,
    bfs_sssp,
    exact_betweenness,
    from_edges,
    load_edge_list,
    remove_node,
    sample_route,
)


def test_path_sssp(path5):
    sp = bfs_sssp(path5, 0)
    assert sp.dist.tolist() == [0, 1, 2, 3, 4]
    assert sp.sigma.tolist() == [1, 1, 1, 1, 1]
    assert sp.preds(4).tolist() == [3]


def test_cycle_has_two_shortest_paths(cycle4):
    sp = bfs_sssp(cycle4, 0)
    assert sp.sigma[2] == 2
    assert sorted(sp.preds(2).tolist()) == [1, 3]
    assert [lvl.tolist() for lvl in sp.levels()] == [[0], [1, 3], [2]]


def test_route_is_a_shortest_path(path5):
    rc = RouteCache(path5, seed=1)
    assert rc.route(0, 4) == (0, 1, 2, 3, 4)
    assert sample_route(rc, path5, 4, 1) == (4, 3, 2, 1)


def test_route_is_fixed_per_pair(cycle4):
    rc = RouteCache(cycle4, seed=3)
    first = rc.route(0, 2)
    assert all(rc.route(0, 2) == first for _ in range(10))


def test_route_choice_is_uniform(cycle4):
    # fresh caches give a fresh draw for the pair (0, 2)
    via1 = sum(RouteCache(cycle4, seed=s).route(0, 2)[1] == 1 for s in range(4000))
    assert abs(via1 / 4000 - 0.5) < 0.02
    assert stats.chisquare([via1, 4000 - via1]).pvalue > 0.001


def test_route_uniform_over_many_paths():
    # K_{2,3} plus a source and sink: 3 shortest paths 0 -> 4
    g = from_edges(5, [(0, 1), (0, 2), (0, 3), (1, 4), (2, 4), (3, 4)])
    counts = np.bincount([RouteCache(g, seed=s).route(0, 4)[1] for s in range(3000)], minlength=5)[1:4]
    assert stats.chisquare(counts).pvalue > 0.001


def test_resolve_matches_route():
    g = from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)])
    rc = RouteCache(g, seed=5)
    s = np.array([0, 2, 3, 5])
    d = np.array([3, 5, 0, 2])
    paths, lengths = rc.resolve(s, d)
    for i in range(4):
        assert tuple(paths[i, : lengths[i] + 1].tolist()) == rc.route(int(s[i]), int(d[i]))


def test_route_errors(path5):
    rc = RouteCache(path5)
    with pytest.raises(ValueError):
        rc.route(2, 2)
    with pytest.raises(ValueError, match="9"):
        rc.route(0, 9)
    g = from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(DisconnectedPairError):
        RouteCache(g).route(0, 3)


def _random_graph(n, p, seed):
    r = np.random.default_rng(seed)
    return [(u, v) for u, v in itertools.combinations(range(n), 2) if r.random() < p]


@pytest.mark.parametrize("seed", range(8))
def test_betweenness_matches_networkx(seed):
    n = 8
    edges = _random_graph(n, 0.4, seed)
    g = from_edges(n, edges)
    ref = nx.Graph()
    ref.add_nodes_from(range(n))
    ref.add_edges_from(edges)
    want = nx.betweenness_centrality(ref, normalized=False)
    got = exact_betweenness(g)
    assert np.allclose(got, [want[v] for v in range(n)])


def test_removal_reroutes_affected_pairs_only():
    # square 0-1-2-3-0 with a tail 2-4
    g = from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 0), (2, 4)])
    rc = RouteCache(g, seed=0)
    rc.route(0, 2)
    rc.route(1, 4)
    rc.route(3, 0)
    through = [k for k, p in rc.routes.items() if 1 in p[1:-1]]
    res = remove_node(g, 1, rc)
    assert res.invalidated == sorted(k for k, p in rc.routes.items() if 1 in p)
    assert set(through) <= set(res.invalidated)
    assert (1, 4) in res.disconnected
    assert not res.graph.active[1]
    assert res.graph.degree(1) == 0

    child = rc.without([1])
    assert child.route(3, 0) == rc.route(3, 0)
    assert child.route(0, 2) == (0, 3, 2)


def test_removal_disconnects():
    g = from_edges(3, [(0, 1), (1, 2)])
    rc = RouteCache(g)
    rc.route(0, 2)
    res = remove_node(g, 1, rc)
    assert res.disconnected == [(0, 2)]


def test_load_edge_list_remaps_labels():
    g = load_edge_list("# comment\nA B\nB C\n\nC A\nA A\nB A\n")
    assert g.node_count == 3
    assert g.edge_count == 3
    assert g.id_map == {"A": 0, "B": 1, "C": 2}
    assert g.dropped_self_loops == 1
    assert g.dropped_duplicates == 1


def test_load_edge_list_errors():
    with pytest.raises(GraphParseError) as exc:
        load_edge_list("1 2\n3 4 5\n")
    assert "2" in str(exc.value)
    with pytest.raises(GraphParseError):
        load_edge_list("# nothing\n")


def test_edge_index_is_symmetric(cycle4):
    e1 = cycle4.edge_index(np.array([0, 1, 2]), np.array([1, 2, 3]))
    e2 = cycle4.edge_index(np.array([1, 2, 3]), np.array([0, 1, 2]))
    assert e1.tolist() == e2.tolist()
    assert len(set(e1.tolist())) == 3
