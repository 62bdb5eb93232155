"""Local search for high-ABC nodes driven only by per-node and per-edge sketches.

Strategies:

* ``BN``   every walker steps to its unvisited neighbor with the largest edge
           estimate.
* ``RW``   every walker steps to a random unvisited neighbor, chosen with
           probability proportional to the edge estimate.
* ``BN1X`` / ``RW1X`` as above, but neighbors with at most one unvisited
           neighbor of their own are skipped unless nothing else is left.
* ``BCN``  the next frontier is the best ``C`` unvisited neighbors of the
           whole frontier, scored by their strongest edge into it (or the
           summed edges, or the candidate's node estimate).

Ties always go to the smaller node ID.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph

__all__ = [
    "STRATEGIES",
    "AbcView",
    "SearchConfig",
    "SearchState",
    "SearchResult",
    "DegenerateBaselineError",
    "start",
    "step",
    "run_search",
    "rank_nodes",
    "topk_matches",
    "cardinality_ratio",
]

STRATEGIES = ("BN", "BN1X", "RW", "RW1X", "BCN")
# how BCN scores a pooled candidate: strongest or summed edge into the
# frontier, or the candidate's own node estimate
BCN_SCORES = ("max", "sum", "node")


class DegenerateBaselineError(ValueError):
    pass


@dataclass(frozen=True)
class AbcView:
    """Frozen per-node and per-edge estimates the search reads from."""

    graph: Graph
    node: np.ndarray
    edge: np.ndarray

    @classmethod
    def from_state(cls, state) -> AbcView:
        return cls(state.graph, state.node_estimates(), state.edge_estimates())

    def edges_from(self, u: int, nbrs: np.ndarray) -> np.ndarray:
        return self.edge[self.graph.edge_index(np.full(len(nbrs), u), nbrs)]


@dataclass
class SearchConfig:
    strategy: str = "BCN"
    C: int = 20
    max_hops: int = 7
    K: int = 20
    seed: int = 0
    seed_nodes: list[int] | None = None
    bcn_score: str = "max"

    def __post_init__(self):
        self.strategy = self.strategy.upper().replace("-", "")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.C < 1 or self.K < 1 or self.max_hops < 0:
            raise ValueError("C and K must be >= 1 and max_hops >= 0")
        if self.bcn_score not in BCN_SCORES:
            raise ValueError(f"bcn_score must be one of {BCN_SCORES}")


@dataclass
class SearchState:
    frontier: list[int]
    seen: np.ndarray
    hop: int = 0
    found: dict[int, float] = field(default_factory=dict)
    trajectory: list[list[int]] = field(default_factory=list)
    exhausted_at: int | None = None

    @property
    def visited(self) -> set[int]:
        return set(np.flatnonzero(self.seen).tolist())


def _mark(state: SearchState, view: AbcView, nodes: list[int]) -> None:
    state.seen[nodes] = True
    for v in nodes:
        state.found[v] = float(view.node[v])
    state.trajectory.append(list(nodes))
    state.frontier = list(nodes)


def start(view: AbcView, cfg: SearchConfig, rng: np.random.Generator | None = None) -> SearchState:
    g = view.graph
    if cfg.seed_nodes is not None:
        seeds = list(dict.fromkeys(int(v) for v in cfg.seed_nodes))
        for v in seeds:
            g.check_node(v)
    else:
        rng = rng or np.random.default_rng(cfg.seed)
        pool = g.active_nodes
        seeds = rng.choice(pool, size=min(cfg.C, len(pool)), replace=False).tolist()
    state = SearchState([], np.zeros(g.node_count, dtype=bool))
    _mark(state, view, seeds)
    return state


def _open_degree(g: Graph, seen: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    return np.array([int((~seen[g.neighbors(w)]).sum()) for w in nodes.tolist()], dtype=np.int64)


def _walk_choice(view: AbcView, state: SearchState, u: int, cfg: SearchConfig, rng) -> int | None:
    g = view.graph
    nbrs = g.neighbors(u)
    cand = nbrs[~state.seen[nbrs]]
    if not len(cand):
        return None
    est = view.edges_from(u, cand)
    if cfg.strategy.endswith("1X"):
        ok = _open_degree(g, state.seen, cand) > 1
        if ok.any():
            cand, est = cand[ok], est[ok]
    if cfg.strategy.startswith("BN"):
        # neighbors are sorted, so the first maximum has the smallest ID
        return int(cand[int(np.argmax(est))])
    total = est.sum()
    p = est / total if total > 0 else None
    return int(rng.choice(cand, p=p))


def _bcn_choice(view: AbcView, state: SearchState, cfg: SearchConfig) -> list[int]:
    score: dict[int, float] = {}
    combine = max if cfg.bcn_score == "max" else (lambda a, b: a + b)
    for u in state.frontier:
        nbrs = view.graph.neighbors(u)
        cand = nbrs[~state.seen[nbrs]]
        for w, e in zip(cand.tolist(), view.edges_from(u, cand).tolist()):
            score[w] = combine(score[w], e) if w in score else e
    if cfg.bcn_score == "node":
        score = {w: float(view.node[w]) for w in score}
    ranked = sorted(score, key=lambda w: (-score[w], w))
    return ranked[: cfg.C]


def step(state: SearchState, view: AbcView, cfg: SearchConfig, rng: np.random.Generator | None = None) -> SearchState:
    """Advance one hop. An empty result leaves ``exhausted_at`` set."""
    if not state.frontier:
        state.exhausted_at = state.hop if state.exhausted_at is None else state.exhausted_at
        return state
    if cfg.strategy == "BCN":
        nxt = _bcn_choice(view, state, cfg)
    else:
        rng = rng or np.random.default_rng(cfg.seed)
        picks = (_walk_choice(view, state, u, cfg, rng) for u in state.frontier)
        # walkers without an open neighbor drop out; collisions merge
        nxt = list(dict.fromkeys(w for w in picks if w is not None))
    state.hop += 1
    _mark(state, view, nxt)
    if not nxt:
        state.exhausted_at = state.hop
    return state


def rank_nodes(values: dict[int, float] | np.ndarray) -> list[int]:
    """Node IDs by decreasing value, ties to the smaller ID."""
    if isinstance(values, dict):
        return sorted(values, key=lambda v: (-values[v], v))
    values = np.asarray(values)
    return np.lexsort((np.arange(len(values)), -values)).tolist()


def topk_matches(found: list[int], baseline: list[int], K: int) -> int:
    if K > len(baseline):
        raise ValueError(f"K={K} exceeds the baseline ranking length {len(baseline)}")
    return len(set(found[:K]) & set(baseline[:K]))


def cardinality_ratio(found: list[int], baseline_values, K: int) -> float:
    """Baseline ABC mass of the found top-K over that of the true top-K."""
    values = np.asarray(baseline_values, dtype=float)
    if K > len(values):
        raise ValueError(f"K={K} exceeds the baseline ranking length {len(values)}")
    best = rank_nodes(values)[:K]
    denom = values[best].sum()
    if denom <= 0:
        raise DegenerateBaselineError("baseline top-K has zero total ABC")
    return float(values[list(found[:K])].sum() / denom)


@dataclass
class SearchResult:
    strategy: str
    trajectory: list[list[int]]
    found: dict[int, float]
    exhausted_at: int | None
    K: int

    def found_until(self, hop: int) -> dict[int, float]:
        nodes = {v for layer in self.trajectory[: hop + 1] for v in layer}
        return {v: self.found[v] for v in nodes}

    def top_k(self, hop: int | None = None) -> list[int]:
        pool = self.found if hop is None else self.found_until(hop)
        return rank_nodes(pool)[: self.K]

    def curves(self, baseline_values, hops: int | None = None) -> list[dict]:
        """Per-hop hits and cardinality ratio against ``baseline_values``.

        Hops past exhaustion repeat the last found set.
        """
        truth = rank_nodes(np.asarray(baseline_values, dtype=float))
        hops = len(self.trajectory) - 1 if hops is None else hops
        out = []
        for h in range(hops + 1):
            top = self.top_k(h)
            out.append({
                "hop": h,
                "hits": topk_matches(top, truth, self.K),
                "ratio": cardinality_ratio(top, baseline_values, self.K),
                "found": len(self.found_until(h)),
            })
        return out

    def write_trace(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hop", "strategy", "node_id", "abc_estimate"])
        for hop, layer in enumerate(self.trajectory):
            for v in layer:
                w.writerow([hop, self.strategy, v, f"{self.found[v]:.6f}"])

    def summary(self, baseline_values, hops: int | None = None) -> str:
        return json.dumps({
            "strategy": self.strategy,
            "K": self.K,
            "exhausted_at": self.exhausted_at,
            "per_hop": self.curves(baseline_values, hops),
            "top_k": self.top_k(),
        }, indent=2, sort_keys=True)


def run_search(view: AbcView, cfg: SearchConfig) -> SearchResult:
    rng = np.random.default_rng(cfg.seed)
    state = start(view, cfg, rng)
    while state.hop < cfg.max_hops and state.exhausted_at is None:
        step(state, view, cfg, rng)
    return SearchResult(cfg.strategy, state.trajectory, state.found, state.exhausted_at, cfg.K)
