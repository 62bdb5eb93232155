import io

import numpy as np
import pytest

from abcnet.graph import from_edges
from abcnet.search import (
    AbcView,
    DegenerateBaselineError,
    SearchConfig,
    cardinality_ratio,
    rank_nodes,
    run_search,
    start,
    step,
    topk_matches,
)


def _view(g, node, edge_of):
    edge = np.zeros(g.edge_count)
    for (u, v), w in edge_of.items():
        edge[g.edge_index(np.array([u]), np.array([v]))[0]] = w
    return AbcView(g, np.asarray(node, dtype=float), edge)


@pytest.fixture
def fan():
    # hub 0 with neighbors 1..4; edge estimates 60, 32, 80, 28
    g = from_edges(5, [(0, i) for i in range(1, 5)])
    return _view(g, [100, 60, 32, 80, 28], {(0, 1): 60, (0, 2): 32, (0, 3): 80, (0, 4): 28})


@pytest.mark.parametrize("strategy", ["BN", "BN1X", "RW", "RW1X", "BCN"])
def test_leaf_moves_to_center(star10, strategy):
    view = AbcView(star10, np.r_[90.0, np.zeros(10)], np.full(star10.edge_count, 20.0))
    cfg = SearchConfig(strategy, C=1, max_hops=1, K=1, seed_nodes=[4])
    res = run_search(view, cfg)
    assert res.trajectory == [[4], [0]]
    assert res.top_k() == [0]


def test_bn_takes_the_heaviest_edge(fan):
    res = run_search(fan, SearchConfig("BN", C=1, max_hops=1, seed_nodes=[0]))
    assert res.trajectory[1] == [3]


def test_rw_is_proportional(fan):
    cfg = SearchConfig("RW", C=1, seed_nodes=[0])
    picks = []
    r = np.random.default_rng(0)
    for _ in range(20_000):
        st = start(fan, cfg)
        picks.append(step(st, fan, cfg, r).frontier[0])
    assert np.mean(np.array(picks) == 3) == pytest.approx(0.4, abs=0.02)


def test_bn_tie_goes_to_smaller_id():
    g = from_edges(4, [(0, 1), (0, 2), (0, 3)])
    view = _view(g, [5, 1, 1, 1], {(0, 1): 3, (0, 2): 7, (0, 3): 7})
    res = run_search(view, SearchConfig("BN", C=1, max_hops=1, seed_nodes=[0]))
    assert res.trajectory[1] == [2]


def test_one_x_skips_dead_ends():
    # 1 is a heavy dead end; 2 leads on to 3 and 4
    g = from_edges(5, [(0, 1), (0, 2), (2, 3), (2, 4)])
    view = _view(g, [1, 1, 1, 1, 1], {(0, 1): 50, (0, 2): 10, (2, 3): 1, (2, 4): 1})
    assert run_search(view, SearchConfig("BN", C=1, max_hops=1, seed_nodes=[0])).trajectory[1] == [1]
    assert run_search(view, SearchConfig("BN1X", C=1, max_hops=1, seed_nodes=[0])).trajectory[1] == [2]


def test_bcn_scores():
    # frontier {0, 1}; candidate 2 has two medium edges, 3 one strong edge
    g = from_edges(4, [(0, 1), (0, 2), (1, 2), (0, 3)])
    view = _view(g, [0, 0, 1, 9], {(0, 2): 10, (1, 2): 10, (0, 3): 15})
    pick = lambda score: run_search(
        view, SearchConfig("BCN", C=1, max_hops=1, seed_nodes=[0, 1], bcn_score=score)
    ).trajectory[1]
    assert pick("max") == [3]
    assert pick("sum") == [2]
    assert pick("node") == [3]


def test_bcn_prefers_the_busier_side():
    # frontier {0, 1}; 0's neighbors 2..6 carry ~1e4, 1's neighbors 7..11 ~1e3
    edges = [(0, 1)] + [(0, v) for v in range(2, 7)] + [(1, v) for v in range(7, 12)]
    g = from_edges(12, edges)
    weights = {(0, v): 10_000 + v for v in range(2, 7)} | {(1, v): 1_000 + v for v in range(7, 12)}
    view = _view(g, np.ones(12), weights)
    res = run_search(view, SearchConfig("BCN", C=4, max_hops=1, seed_nodes=[0, 1]))
    assert sorted(res.trajectory[1]) == [3, 4, 5, 6]


def test_walkers_merge_on_collision(star10):
    view = AbcView(star10, np.ones(11), np.ones(star10.edge_count))
    res = run_search(view, SearchConfig("BN", C=3, max_hops=2, seed_nodes=[1, 2, 3]))
    assert res.trajectory[1] == [0]


def test_exhaustion(path5):
    view = AbcView(path5, np.ones(5), np.ones(4))
    res = run_search(view, SearchConfig("BN", C=1, max_hops=10, seed_nodes=[4]))
    assert res.trajectory[-1] == []
    assert res.exhausted_at == 5
    assert len(res.found) == 5


def test_zero_hops_returns_seeds(star10):
    view = AbcView(star10, np.arange(11.0), np.ones(star10.edge_count))
    res = run_search(view, SearchConfig("BCN", C=4, max_hops=0, K=2, seed=3))
    assert len(res.trajectory) == 1 and len(res.found) == 4
    assert res.top_k() == rank_nodes(res.found)[:2]


def test_full_width_bcn_finds_global_top_k():
    r = np.random.default_rng(1)
    n = 40
    edges = [(i, int(r.integers(0, i))) for i in range(1, n)] + [tuple(r.integers(0, n, 2)) for _ in range(30)]
    g = from_edges(n, edges)
    node = r.random(n) * 100
    view = AbcView(g, node, r.random(g.edge_count))
    res = run_search(view, SearchConfig("BCN", C=n, max_hops=n, K=10, seed=0))
    assert res.top_k() == rank_nodes(node)[:10]


def test_topk_and_ratio():
    values = np.array([10.0, 50.0, 40.0, 0.0, 30.0])
    truth = rank_nodes(values)
    assert truth == [1, 2, 4, 0, 3]
    assert topk_matches([2, 0, 1], truth, 3) == 2
    assert cardinality_ratio([1, 2, 4], values, 3) == 1.0
    assert cardinality_ratio([2, 0, 3], values, 3) == pytest.approx(50 / 120)
    with pytest.raises(ValueError):
        topk_matches([1], truth, 9)
    with pytest.raises(ValueError):
        cardinality_ratio([1], values, 9)
    with pytest.raises(DegenerateBaselineError):
        cardinality_ratio([0], np.zeros(3), 2)


def test_rank_ties_to_smaller_id():
    assert rank_nodes({5: 1.0, 2: 1.0, 9: 3.0}) == [9, 2, 5]
    assert rank_nodes(np.array([1.0, 3.0, 3.0])) == [1, 2, 0]


def test_config_validation():
    assert SearchConfig("bn-1x").strategy == "BN1X"
    with pytest.raises(ValueError):
        SearchConfig("DFS")
    with pytest.raises(ValueError):
        SearchConfig(C=0)
    with pytest.raises(ValueError):
        SearchConfig(bcn_score="mean")


def test_curves_and_trace(star10):
    node = np.r_[90.0, np.arange(1, 11.0)]
    view = AbcView(star10, node, np.ones(star10.edge_count))
    res = run_search(view, SearchConfig("BCN", C=2, max_hops=2, K=2, seed_nodes=[1, 2], bcn_score="node"))
    curves = res.curves(node, hops=3)
    assert [c["hits"] for c in curves] == [0, 1, 2, 2]
    hits = [c["hits"] for c in curves]
    assert hits == sorted(hits)
    buf = io.StringIO()
    res.write_trace(buf)
    assert buf.getvalue().splitlines()[0] == "hop,strategy,node_id,abc_estimate"
    assert '"exhausted_at"' in res.summary(node)
