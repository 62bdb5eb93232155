"""Transaction-level simulator maintaining per-node and per-edge ABC sketches.

A transaction ``(s, d)`` adds its key to the node sketch of every interior
node of its route (``s`` and ``d`` excluded) and to the edge sketch of every
traversed edge. One register row serves an undirected edge, so the views
from both endpoints see the same key stream by construction.
"""
from __future__ import annotations

import csv
import json
import multiprocessing as mp
from dataclasses import asdict, dataclass, field

import numpy as np

from . import seeds
from .graph import Graph, RouteCache
from .sketch import (
    DEFAULT_P,
    ExactCounter,
    HllSketch,
    estimate_registers,
    hash_keys,
    register_updates,
    sparse_codes,
    sparse_estimate,
    sparse_limit,
)
from .traffic import TrafficModel, apply_noise, sample_pairs

__all__ = [
    "SimConfig",
    "SimState",
    "SimConfigError",
    "Experiment",
    "run_interval",
    "simulate",
    "node_abc",
    "edge_abc",
    "inject_failure",
    "write_abc_csv",
]


class SimConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    interval_size: int = 50_000
    intervals: int = 1
    seed: int = 0
    oracle_mode: bool = False
    precision: int = DEFAULT_P
    hash_seed: int = 0
    track_edges: bool = True
    sparse: bool = True

    def __post_init__(self):
        if self.interval_size < 1:
            raise SimConfigError("interval_size must be >= 1")
        if self.intervals < 1:
            raise SimConfigError("intervals must be >= 1")


def _unique_rows(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not len(a):
        return a, b
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    keep = np.ones(len(a), dtype=bool)
    keep[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    return a[keep], b[keep]


class _ExactMirror:
    """Exact distinct (target, key-hash) pairs alongside a register table."""

    def __init__(self, size: int):
        self.size = size
        self.target = np.zeros(0, dtype=np.int64)
        self.item = np.zeros(0, dtype=np.uint64)

    def add(self, target: np.ndarray, item: np.ndarray) -> None:
        t = np.concatenate([self.target, target])
        i = np.concatenate([self.item, item])
        self.target, self.item = _unique_rows(t, i)

    def counts(self) -> np.ndarray:
        return np.bincount(self.target, minlength=self.size)

    def counter(self, target: int) -> ExactCounter:
        return ExactCounter().add_hashes(self.item[self.target == target])


class _SparseIndex:
    """Occupied fine-grained buckets per row while the row is still sparse.

    Rows whose bucket count passes the limit are flagged dense and their
    entries are discarded, as a standalone sketch would do.
    """

    _SHIFT = 25

    def __init__(self, size: int, limit: int):
        self.size = size
        self.limit = limit
        self.dense = np.zeros(size, dtype=bool)
        self.codes = np.zeros(0, dtype=np.int64)

    def add(self, target: np.ndarray, items: np.ndarray) -> None:
        live = ~self.dense[target]
        fresh = (target[live].astype(np.int64) << self._SHIFT) | sparse_codes(items[live])
        codes = np.unique(np.concatenate([self.codes, fresh]))
        over = np.bincount(codes >> self._SHIFT, minlength=self.size) > self.limit
        if over.any():
            self.dense |= over
            codes = codes[~over[codes >> self._SHIFT]]
        self.codes = codes

    def apply(self, estimates: np.ndarray) -> np.ndarray:
        k = np.bincount(self.codes >> self._SHIFT, minlength=self.size)
        out = estimates.copy()
        out[~self.dense] = sparse_estimate(k[~self.dense])
        return out

    def buckets(self, row: int) -> set[int] | None:
        if self.dense[row]:
            return None
        sel = self.codes[(self.codes >> self._SHIFT) == row]
        return set((sel & ((1 << self._SHIFT) - 1)).tolist())


class SimState:
    """Sketch tables for one run.

    ``node_regs[v]`` holds the registers of node ``v``; ``edge_regs[e]`` the
    registers of undirected edge ``e`` of ``graph`` (the topology the state
    was created on; edge IDs stay valid after failures since removals only
    delete edges).
    """

    def __init__(self, graph: Graph, precision: int = DEFAULT_P, hash_seed: int = 0,
                 track_edges: bool = True, oracle: bool = False, sparse: bool = True):
        self.graph = graph
        self.precision = precision
        self.hash_seed = hash_seed
        m = 1 << precision
        self.node_regs = np.zeros((graph.node_count, m), dtype=np.uint8)
        self.edge_regs = np.zeros((graph.edge_count, m), dtype=np.uint8) if track_edges else None
        self.node_oracle = _ExactMirror(graph.node_count) if oracle else None
        self.edge_oracle = _ExactMirror(graph.edge_count) if oracle and track_edges else None
        lim = sparse_limit(precision)
        self.node_sparse = _SparseIndex(graph.node_count, lim) if sparse else None
        self.edge_sparse = _SparseIndex(graph.edge_count, lim) if sparse and track_edges else None
        self.dropped_pairs = 0
        self.transactions = 0

    @classmethod
    def for_config(cls, graph: Graph, cfg: SimConfig) -> SimState:
        return cls(graph, cfg.precision, cfg.hash_seed, cfg.track_edges, cfg.oracle_mode, cfg.sparse)

    @property
    def oracle(self) -> bool:
        return self.node_oracle is not None

    def _record(self, regs: np.ndarray, target: np.ndarray, items: np.ndarray) -> None:
        idx, rank = register_updates(items, self.precision)
        flat = target * regs.shape[1] + idx
        np.maximum.at(regs.reshape(-1), flat, rank)

    def record(self, paths: np.ndarray, lengths: np.ndarray, items: np.ndarray) -> None:
        """Apply a batch of routed transactions (``lengths < 0`` = dropped)."""
        ok = lengths >= 0
        self.transactions += len(lengths)
        self.dropped_pairs += int((~ok).sum())
        cols = np.arange(paths.shape[1])
        span = np.where(ok, lengths, 0)[:, None]
        inner = (cols >= 1) & (cols < span)
        wide = np.broadcast_to(items[:, None], paths.shape)
        t, h = paths[inner], wide[inner]
        self._record(self.node_regs, t, h)
        if self.node_sparse is not None:
            self.node_sparse.add(t, h)
        if self.node_oracle is not None:
            self.node_oracle.add(t, h)
        if self.edge_regs is not None and paths.shape[1] > 1:
            hop = cols[:-1] < span
            eid = self.graph.edge_index(paths[:, :-1][hop], paths[:, 1:][hop])
            he = wide[:, :-1][hop]
            self._record(self.edge_regs, eid, he)
            if self.edge_sparse is not None:
                self.edge_sparse.add(eid, he)
            if self.edge_oracle is not None:
                self.edge_oracle.add(eid, he)

    def node_estimates(self) -> np.ndarray:
        est = estimate_registers(self.node_regs)
        return est if self.node_sparse is None else self.node_sparse.apply(est)

    def edge_estimates(self) -> np.ndarray:
        if self.edge_regs is None:
            raise SimConfigError("edge sketches were not tracked in this run")
        est = estimate_registers(self.edge_regs)
        return est if self.edge_sparse is None else self.edge_sparse.apply(est)

    def exact_node_counts(self) -> np.ndarray:
        if self.node_oracle is None:
            raise SimConfigError("run was not in oracle mode")
        return self.node_oracle.counts()

    def exact_edge_counts(self) -> np.ndarray:
        if self.edge_oracle is None:
            raise SimConfigError("run was not in oracle mode with edge tracking")
        return self.edge_oracle.counts()

    def node_sketch(self, v: int) -> HllSketch:
        self.graph.check_node(v)
        sp = self.node_sparse.buckets(v) if self.node_sparse is not None else None
        return HllSketch(self.precision, self.hash_seed, self.node_regs[v].copy(), sp)

    def edge_sketch(self, u: int, v: int) -> HllSketch:
        e = self._edge_id(u, v)
        sp = self.edge_sparse.buckets(e) if self.edge_sparse is not None else None
        return HllSketch(self.precision, self.hash_seed, self.edge_regs[e].copy(), sp)

    def _edge_id(self, u: int, v: int) -> int:
        if self.edge_regs is None:
            raise SimConfigError("edge sketches were not tracked in this run")
        self.graph.check_node(u)
        self.graph.check_node(v)
        e = int(self.graph.edge_index([u], [v])[0])
        if e < 0:
            raise ValueError(f"nodes {u} and {v} are not adjacent")
        return e


def node_abc(state: SimState, v: int) -> float:
    return state.node_sketch(v).estimate()


def edge_abc(state: SimState, u: int, v: int) -> float:
    return state.edge_sketch(u, v).estimate()


def run_interval(g: Graph, routes: RouteCache, tm: TrafficModel, cfg: SimConfig,
                 state: SimState, interval: int = 0) -> SimState:
    """Draw ``cfg.interval_size`` transactions and fold them into ``state``."""
    if g is not routes.graph:
        raise SimConfigError("route cache was built for a different graph")
    send, recv = apply_noise(tm, interval, np.random.default_rng([cfg.seed, interval, 1]))
    send[~g.active] = 0.0
    recv[~g.active] = 0.0
    rng = np.random.default_rng([cfg.seed, interval, 2])
    if (send > 0).sum() + (recv > 0).sum() == 0:
        raise SimConfigError("no active nodes left to generate traffic")
    s, d = sample_pairs(send, recv, cfg.interval_size, rng)
    paths, lengths = routes.resolve(s, d)
    state.record(paths, lengths, hash_keys(s, d, state.hash_seed))
    return state


def simulate(g: Graph, routes: RouteCache, tm: TrafficModel, cfg: SimConfig,
             state: SimState | None = None) -> tuple[SimState, list[np.ndarray]]:
    """Run ``cfg.intervals`` intervals; returns the state and the node
    estimates after each interval."""
    state = state or SimState.for_config(g, cfg)
    history = []
    for i in range(cfg.intervals):
        run_interval(g, routes, tm, cfg, state, i)
        history.append(state.node_estimates())
    return state, history


def interval_deltas(history: list[np.ndarray]) -> list[float]:
    """Max relative change of node estimates between consecutive intervals."""
    out = []
    for prev, cur in zip(history, history[1:]):
        out.append(float(np.max(np.abs(cur - prev) / np.maximum(prev, 1.0))))
    return out


def inject_failure(g: Graph, routes: RouteCache, state: SimState | None, victims) -> tuple[Graph, RouteCache]:
    """Remove ``victims``; returns the reduced graph and a route cache that
    keeps unaffected routes and re-routes the rest on demand. Sketches in
    ``state`` are left untouched."""
    victims = sorted(set(int(v) for v in victims))
    for v in victims:
        g.check_node(v)
        if not g.active[v]:
            raise SimConfigError(f"node {v} is already removed")
    if len(victims) >= int(g.active.sum()):
        raise SimConfigError("cannot remove every node")
    child = routes.without(victims)
    return child.graph, child


def write_abc_csv(fh, estimates: np.ndarray, exact: np.ndarray | None = None) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["node_id", "abc_estimate"] + (["abc_exact"] if exact is not None else []))
    for v, est in enumerate(estimates):
        row = [v, f"{est:.6f}"]
        if exact is not None:
            row.append(int(exact[v]))
        w.writerow(row)


@dataclass
class Experiment:
    """One graph, fixed routes and a traffic model; runs differ only in the
    stochastic pair draws (and noise)."""

    graph: Graph
    routes: RouteCache
    traffic: TrafficModel
    interval_size: int = 200_000
    precision: int = DEFAULT_P
    hash_seed: int = 0
    seed: int = 0
    sparse: bool = True
    _failures: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, graph: Graph, seed: int, interval_size: int = 200_000, distribution: str = "gaussian",
              noise_range=(1.0, 1.0), precision: int = DEFAULT_P, sparse: bool = True) -> Experiment:
        from .traffic import assign_levels

        tm = assign_levels(graph.node_count, distribution, seeds.derive_seed(seed, seeds.TRAFFIC), noise_range)
        return cls(
            graph=graph,
            routes=RouteCache(graph, seeds.derive_seed(seed, seeds.ROUTES)),
            traffic=tm,
            interval_size=interval_size,
            precision=precision,
            hash_seed=seeds.derive_seed(seed, seeds.HASH),
            seed=seed,
            sparse=sparse,
        )

    def with_noise(self, lo: float, hi: float) -> Experiment:
        return Experiment(self.graph, self.routes, self.traffic.with_noise(lo, hi), self.interval_size,
                          self.precision, self.hash_seed, self.seed, self.sparse, self._failures)

    def config(self, stream: int | tuple, run: int, *, track_edges: bool = False, oracle: bool = False,
               intervals: int = 1, interval_size: int | None = None) -> SimConfig:
        return SimConfig(
            interval_size=interval_size or self.interval_size,
            intervals=intervals,
            seed=seeds.derive_seed(self.seed, *_keys(stream), run),
            oracle_mode=oracle,
            precision=self.precision,
            hash_seed=self.hash_seed,
            track_edges=track_edges,
            sparse=self.sparse,
        )

    def failed_routes(self, victims) -> RouteCache:
        key = tuple(sorted(set(int(v) for v in victims)))
        if not key:
            return self.routes
        if key not in self._failures:
            self._failures[key] = inject_failure(self.graph, self.routes, None, key)[1]
        return self._failures[key]

    def forget_failures(self) -> None:
        self._failures.clear()

    def warm(self, victims=()) -> None:
        """Fill every route table row needed for ``victims`` up front."""
        routes = self.failed_routes(victims)
        for ep in routes._epochs:
            ep.ensure(self.graph.active_nodes)

    def run_many(self, tasks, jobs: int = 1) -> list[np.ndarray]:
        """Node estimates for ``(stream, run, victims)`` tasks, in task order.

        With ``jobs > 1`` route tables are built here first and forked
        workers share them; the output does not depend on ``jobs``.
        """
        tasks = [(st, r, tuple(v)) for st, r, v in tasks]
        if jobs <= 1 or len(tasks) < 2:
            return [self.run(*t).node_estimates() for t in tasks]
        for victims in dict.fromkeys(t[2] for t in tasks):
            self.warm(victims)
        global _WORKER
        _WORKER = self
        try:
            with mp.get_context("fork").Pool(jobs) as pool:
                return pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))
        finally:
            _WORKER = None

    def run(self, stream: int | tuple, run: int, victims=(), **kw) -> SimState:
        routes = self.failed_routes(victims)
        cfg = self.config(stream, run, **kw)
        state = SimState.for_config(self.graph, cfg)
        for i in range(cfg.intervals):
            run_interval(routes.graph, routes, self.traffic, cfg, state, i)
        return state

    def manifest(self) -> dict:
        return {
            "nodes": self.graph.node_count,
            "edges": self.graph.edge_count,
            "route_seed": self.routes.seed,
            "traffic_seed": self.traffic.seed,
            "distribution": self.traffic.distribution,
            "noise_range": list(self.traffic.noise_range),
            "interval_size": self.interval_size,
            "precision": self.precision,
            "hash_seed": self.hash_seed,
            "seed": self.seed,
            "sparse": self.sparse,
        }


_WORKER: Experiment | None = None


def _run_task(task) -> np.ndarray:
    return _WORKER.run(*task).node_estimates()


def _keys(stream) -> tuple:
    return tuple(stream) if isinstance(stream, tuple) else (stream,)


def config_json(cfg: SimConfig) -> str:
    return json.dumps(asdict(cfg), sort_keys=True)
