"""Graph substrate: CSR adjacency, BFS shortest-path DAGs, routing, failures.

Node IDs are dense integers ``0..n-1``. Removing a node keeps the ID space
intact (the node becomes inactive and loses its edges), so sketches and
rankings indexed by node ID stay valid across failures.
"""
from __future__ import annotations

import csv
import io
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

__all__ = [
    "Graph",
    "GraphParseError",
    "DisconnectedPairError",
    "SsspResult",
    "RouteCache",
    "Removal",
    "load_edge_list",
    "from_edges",
    "bfs_sssp",
    "sample_route",
    "remove_node",
    "remove_nodes",
    "exact_betweenness",
]


class GraphParseError(ValueError):
    """Malformed edge-list input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DisconnectedPairError(LookupError):
    """Destination is not reachable from the source."""

    def __init__(self, s: int, d: int):
        self.pair = (s, d)
        super().__init__(f"no path from {s} to {d}")


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in CSR form.

    ``indices[indptr[u]:indptr[u+1]]`` are the sorted neighbors of ``u``.
    ``edge_ids`` maps each CSR slot to its undirected edge index and
    ``edges`` holds one ``(u, v)`` row per edge with ``u < v``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    edges: np.ndarray
    edge_ids: np.ndarray
    labels: tuple[str, ...]
    active: np.ndarray
    dropped_self_loops: int = 0
    dropped_duplicates: int = 0
    _slot_keys: np.ndarray = field(default=None, repr=False)

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def id_map(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def active_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def neighbors(self, v: int) -> np.ndarray:
        self.check_node(v)
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        self.check_node(v)
        return int(self.indptr[v + 1] - self.indptr[v])

    def check_node(self, v: int) -> None:
        if not (0 <= int(v) < self.node_count):
            raise ValueError(f"invalid node id {v} (graph has {self.node_count} nodes)")

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def edge_index(self, u, v) -> np.ndarray:
        """Undirected edge IDs for arrays of endpoints; -1 where no edge exists."""
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        keys = self._slot_keys
        want = u * self.node_count + v
        pos = np.searchsorted(keys, want)
        pos_c = np.minimum(pos, len(keys) - 1)
        hit = (pos < len(keys)) & (keys[pos_c] == want) if len(keys) else np.zeros(want.shape, bool)
        return np.where(hit, self.edge_ids[pos_c] if len(keys) else -1, -1)

    def adjacency_lists(self) -> list[list[int]]:
        return [self.indices[self.indptr[u]:self.indptr[u + 1]].tolist() for u in range(self.node_count)]

    def write_id_map(self, fh) -> None:
        """Emit the label -> internal ID table as a two-column CSV."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "node_id"])
        for i, lab in enumerate(self.labels):
            w.writerow([lab, i])


def from_edges(
    n: int,
    edges: Iterable[tuple[int, int]] | np.ndarray,
    labels: Sequence[str] | None = None,
    active: np.ndarray | None = None,
) -> Graph:
    """Build a Graph on nodes ``0..n-1``; self-loops and duplicates are dropped."""
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    arr = arr.reshape(-1, 2)
    if n <= 0:
        raise ValueError("graph has no nodes")
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValueError("edge endpoint out of range")
    loops = arr[:, 0] == arr[:, 1]
    arr = arr[~loops]
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    und = np.unique(lo * n + hi)
    dupes = len(arr) - len(und)
    edges_uv = np.stack([und // n, und % n], axis=1) if len(und) else np.zeros((0, 2), np.int64)

    src = np.concatenate([edges_uv[:, 0], edges_uv[:, 1]])
    dst = np.concatenate([edges_uv[:, 1], edges_uv[:, 0]])
    eid = np.concatenate([np.arange(len(edges_uv)), np.arange(len(edges_uv))])
    order = np.lexsort((dst, src))
    src, dst, eid = src[order], dst[order], eid[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    if labels is None:
        labels = tuple(str(i) for i in range(n))
    if active is None:
        active = np.ones(n, dtype=bool)
    return Graph(
        indptr=indptr,
        indices=dst.astype(np.int64),
        edges=edges_uv,
        edge_ids=eid.astype(np.int64),
        labels=tuple(labels),
        active=np.asarray(active, dtype=bool),
        dropped_self_loops=int(loops.sum()),
        dropped_duplicates=int(dupes),
        _slot_keys=src * n + dst,
    )


def load_edge_list(text: str | io.TextIOBase) -> Graph:
    """Parse a whitespace-separated edge list.

    Lines starting with ``#`` (and blank lines) are skipped. Labels are
    arbitrary strings, remapped to dense IDs in order of first appearance.
    """
    if not isinstance(text, str):
        text = text.read()
    ids: dict[str, int] = {}
    pairs: list[tuple[int, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("%"):
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise GraphParseError(f"expected 2 tokens, got {len(tokens)}", lineno)
        a = ids.setdefault(tokens[0], len(ids))
        b = ids.setdefault(tokens[1], len(ids))
        pairs.append((a, b))
    if not ids:
        raise GraphParseError("empty graph")
    return from_edges(len(ids), pairs, labels=list(ids))


@dataclass(frozen=True, eq=False)
class SsspResult:
    """Single-source BFS: hop distances, path counts and the predecessor DAG.

    ``dist`` is float with ``inf`` for unreachable nodes. Predecessors of ``v``
    are ``pred_idx[pred_ptr[v]:pred_ptr[v+1]]``.
    """

    source: int
    dist: np.ndarray
    sigma: np.ndarray
    pred_ptr: np.ndarray
    pred_idx: np.ndarray

    def preds(self, v: int) -> np.ndarray:
        return self.pred_idx[self.pred_ptr[v]:self.pred_ptr[v + 1]]

    def levels(self) -> list[np.ndarray]:
        finite = np.isfinite(self.dist)
        nodes = np.flatnonzero(finite)
        d = self.dist[nodes].astype(np.int64)
        order = np.argsort(d, kind="stable")
        nodes, d = nodes[order], d[order]
        cuts = np.flatnonzero(np.diff(d)) + 1
        return np.split(nodes, cuts) if len(nodes) else []


def _expand(g: Graph, frontier: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    starts = g.indptr[frontier]
    counts = g.indptr[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    offs = np.repeat(starts - np.cumsum(counts) + counts, counts) + np.arange(total)
    return np.repeat(frontier, counts), g.indices[offs]


def bfs_sssp(g: Graph, s: int) -> SsspResult:
    g.check_node(s)
    n = g.node_count
    hop = np.full(n, -1, dtype=np.int64)
    sigma = np.zeros(n)
    hop[s] = 0
    sigma[s] = 1.0
    frontier = np.array([s], dtype=np.int64)
    dag_p: list[np.ndarray] = []
    dag_w: list[np.ndarray] = []
    level = 0
    while frontier.size:
        par, nb = _expand(g, frontier)
        if not nb.size:
            break
        fresh = np.unique(nb[hop[nb] == -1])
        hop[fresh] = level + 1
        keep = hop[nb] == level + 1
        par, nb = par[keep], nb[keep]
        sigma += np.bincount(nb, weights=sigma[par], minlength=n)
        dag_p.append(par)
        dag_w.append(nb)
        frontier = fresh
        level += 1
    p = np.concatenate(dag_p) if dag_p else np.zeros(0, np.int64)
    w = np.concatenate(dag_w) if dag_w else np.zeros(0, np.int64)
    order = np.lexsort((p, w))
    pred_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(w, minlength=n), out=pred_ptr[1:])
    dist = np.where(hop >= 0, hop, np.inf).astype(float)
    return SsspResult(source=int(s), dist=dist, sigma=sigma, pred_ptr=pred_ptr, pred_idx=p[order])


_BATCH = 64


def _adjacency(g: Graph) -> sparse.csr_matrix:
    n = g.node_count
    return sparse.csr_matrix((np.ones(len(g.indices)), g.indices, g.indptr), shape=(n, n))


def _tree_rows(g: Graph, adj: sparse.csr_matrix, dests: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Destination-rooted next-hop rows for a batch of destinations.

    Row ``i`` maps every node ``v`` to a neighbor one hop closer to
    ``dests[i]``, chosen with probability sigma(p)/sigma(v) via
    ``uniforms[i, v]``; -1 where ``v`` cannot reach the destination.
    """
    n, b = g.node_count, len(dests)
    hop = np.full((n, b), -1, dtype=np.int16)
    sigma = np.zeros((n, b))
    cols = np.arange(b)
    hop[dests, cols] = 0
    sigma[dests, cols] = 1.0
    front = sigma.copy()
    level = 0
    while True:
        reach = adj @ front
        fresh = (reach > 0) & (hop < 0)
        if not fresh.any():
            break
        level += 1
        hop[fresh] = level
        front = np.where(fresh, reach, 0.0)
        sigma += front
    hop = np.ascontiguousarray(hop.T)
    sigma = np.ascontiguousarray(sigma.T)

    owner = np.repeat(np.arange(n), np.diff(g.indptr))
    nb = g.indices
    # DAG slots in (destination, node, neighbor) order, so each (d, v)
    # segment is contiguous and one running sum serves all of them
    d_i, slot = np.nonzero((hop[:, nb] == hop[:, owner] - 1) & (hop[:, owner] > 0))
    rows = np.full(b * n, -1, dtype=np.int32)
    if not len(slot):
        rows = rows.reshape(b, n)
        rows[cols, dests] = dests
        return rows
    v = owner[slot]
    c = np.cumsum(sigma[d_i, nb[slot]] / sigma[d_i, v])
    seg = d_i * n + v
    first = np.flatnonzero(np.r_[True, seg[1:] != seg[:-1]])
    last = np.r_[first[1:], len(seg)] - 1
    base = np.where(first > 0, c[np.maximum(first - 1, 0)], 0.0)
    key = seg[first]
    target = base + uniforms.ravel()[key] * (c[last] - base)
    pos = np.clip(np.searchsorted(c, target, side="right"), first, last)
    rows[key] = nb[slot[pos]]
    rows = rows.reshape(b, n)
    rows[cols, dests] = dests
    return rows


class _Epoch:
    """Routing tables of one topology version.

    Row ``d`` of ``next_hop`` is a destination-rooted tree: ``next_hop[d, v]``
    is the neighbor that traffic at ``v`` bound for ``d`` is forwarded to.
    """

    def __init__(self, graph: Graph, removed: frozenset[int], seed: int):
        self.graph = graph
        self.removed = removed
        self.removed_mask = np.zeros(graph.node_count, dtype=bool)
        self.removed_mask[list(removed)] = True
        self.seed = seed
        n = graph.node_count
        self.next_hop = np.full((n, n), -1, dtype=np.int32)
        self.have = np.zeros(n, dtype=bool)
        self._adj = None

    def ensure(self, dests: np.ndarray) -> None:
        todo = np.unique(dests[~self.have[dests]])
        if not todo.size:
            return
        if self._adj is None:
            self._adj = _adjacency(self.graph)
        n = self.graph.node_count
        for i in range(0, len(todo), _BATCH):
            chunk = todo[i:i + _BATCH]
            u = np.stack([np.random.default_rng([self.seed, int(d)]).random(n) for d in chunk])
            self.next_hop[chunk] = _tree_rows(self.graph, self._adj, chunk, u)
            self.have[chunk] = True


@dataclass(frozen=True)
class Removal:
    graph: Graph
    invalidated: list[tuple[int, int]]
    disconnected: list[tuple[int, int]]


class RouteCache:
    """Fixed shortest-path routes for ordered pairs.

    A pair's route is a uniformly random shortest path. Randomness is keyed by
    ``(seed, destination)`` so every route is reproducible without storing
    all-pairs state, and a route never changes until a topology change
    removes one of its nodes. After a failure, unaffected pairs keep their old
    route and affected pairs are re-routed on the reduced graph.
    """

    def __init__(self, graph: Graph, seed: int = 0, sssp_capacity: int = 1024, _epochs=None):
        self.seed = int(seed)
        self.sssp_capacity = sssp_capacity
        self._sssp: OrderedDict[tuple[int, int], tuple[Graph, SsspResult]] = OrderedDict()
        self._epochs: list[_Epoch] = _epochs or [_Epoch(graph, frozenset(), self.seed)]
        self.routes: dict[tuple[int, int], tuple[int, ...] | None] = {}

    @property
    def graph(self) -> Graph:
        return self._epochs[-1].graph

    @property
    def removed(self) -> frozenset[int]:
        out: set[int] = set()
        for ep in self._epochs:
            out |= ep.removed
        return frozenset(out)

    def sssp(self, g: Graph, s: int) -> SsspResult:
        key = (id(g), int(s))
        hit = self._sssp.get(key)
        if hit is not None:
            self._sssp.move_to_end(key)
            return hit[1]
        sp = bfs_sssp(g, s)
        # holding g keeps id(g) from being reused while the entry lives
        self._sssp[key] = (g, sp)
        if len(self._sssp) > self.sssp_capacity:
            self._sssp.popitem(last=False)
        return sp

    def route(self, s: int, d: int) -> tuple[int, ...]:
        g = self.graph
        g.check_node(s)
        g.check_node(d)
        if s == d:
            raise ValueError("source and destination must differ")
        key = (int(s), int(d))
        if key not in self.routes:
            paths, lengths = self.resolve(np.array([s]), np.array([d]))
            self.routes[key] = None if lengths[0] < 0 else tuple(int(x) for x in paths[0, : lengths[0] + 1])
        path = self.routes[key]
        if path is None:
            raise DisconnectedPairError(s, d)
        return path

    def _walk(self, ep: _Epoch, s: np.ndarray, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ep.ensure(d)
        k = len(s)
        cols = [s.astype(np.int64)]
        cur = s.astype(np.int64)
        length = np.zeros(k, dtype=np.int64)
        ok = ~(ep.removed_mask[s] | ep.removed_mask[d]) & (ep.next_hop[d, s] >= 0)
        moving = ok & (cur != d)
        while moving.any():
            nxt = np.where(moving, ep.next_hop[d, cur], -1)
            cols.append(nxt)
            length += moving
            cur = np.where(moving, nxt, cur)
            moving = moving & (cur != d)
        paths = np.stack(cols, axis=1)
        return paths, np.where(ok, length, -1)

    def resolve(self, s, d) -> tuple[np.ndarray, np.ndarray]:
        """Routes for arrays of pairs.

        Returns ``(paths, lengths)``: ``paths[i, :lengths[i]+1]`` is the node
        sequence of pair ``i``, padded with -1; ``lengths[i] == -1`` marks a
        pair with no route (unreachable or a removed endpoint).
        """
        s = np.asarray(s, dtype=np.int64)
        d = np.asarray(d, dtype=np.int64)
        paths, lengths = self._walk(self._epochs[0], s, d)
        for ep in self._epochs[1:]:
            hit = ep.removed_mask[np.where(paths >= 0, paths, 0)] & (paths >= 0)
            redo = np.flatnonzero(hit.any(axis=1) | (lengths < 0))
            if not redo.size:
                continue
            p2, l2 = self._walk(ep, s[redo], d[redo])
            width = max(paths.shape[1], p2.shape[1])
            paths = _pad(paths, width)
            paths[redo] = _pad(p2, width)
            lengths[redo] = l2
        return paths, lengths

    def without(self, victims: Iterable[int]) -> RouteCache:
        """A new cache for the graph minus ``victims``; shares computed tables."""
        victims = frozenset(int(v) for v in victims)
        g2 = _drop(self.graph, victims)
        child = RouteCache(
            g2, self.seed, self.sssp_capacity,
            _epochs=self._epochs + [_Epoch(g2, victims, self.seed)],
        )
        return child

    def invalidated_by(self, victims: Iterable[int]) -> list[tuple[int, int]]:
        victims = set(int(v) for v in victims)
        return sorted(k for k, p in self.routes.items() if p is not None and victims.intersection(p))


def _pad(a: np.ndarray, width: int) -> np.ndarray:
    if a.shape[1] >= width:
        return a
    return np.concatenate([a, np.full((a.shape[0], width - a.shape[1]), -1, a.dtype)], axis=1)


def sample_route(cache: RouteCache, g: Graph, s: int, d: int) -> tuple[int, ...]:
    if g is not cache.graph:
        raise ValueError("route cache was built for a different graph")
    return cache.route(s, d)


def _drop(g: Graph, victims: frozenset[int]) -> Graph:
    for v in victims:
        g.check_node(v)
    mask = np.zeros(g.node_count, dtype=bool)
    mask[list(victims)] = True
    keep = ~(mask[g.edges[:, 0]] | mask[g.edges[:, 1]])
    active = g.active & ~mask
    return from_edges(g.node_count, g.edges[keep], labels=g.labels, active=active)


def remove_nodes(g: Graph, victims: Iterable[int], routes: RouteCache | None = None) -> Removal:
    victims = frozenset(int(v) for v in victims)
    g2 = _drop(g, victims)
    if routes is None:
        return Removal(g2, [], [])
    invalid = routes.invalidated_by(victims)
    child = routes.without(victims)
    disconnected = []
    for s, d in invalid:
        try:
            child.route(s, d)
        except (DisconnectedPairError, ValueError):
            disconnected.append((s, d))
    return Removal(g2, invalid, disconnected)


def remove_node(g: Graph, v: int, routes: RouteCache | None = None) -> Removal:
    g.check_node(v)
    return remove_nodes(g, [v], routes)


def exact_betweenness(g: Graph) -> np.ndarray:
    """Exact betweenness by dependency accumulation; each unordered pair counted once."""
    n = g.node_count
    bc = np.zeros(n)
    for s in range(n):
        if not g.active[s]:
            continue
        sp = bfs_sssp(g, s)
        delta = np.zeros(n)
        counts = np.diff(sp.pred_ptr)
        owner = np.repeat(np.arange(n), counts)
        lvl = sp.dist[owner]
        for level in sorted(set(lvl.tolist()), reverse=True):
            sel = lvl == level
            w = owner[sel]
            p = sp.pred_idx[sel]
            contrib = sp.sigma[p] / sp.sigma[w] * (1.0 + delta[w])
            delta += np.bincount(p, weights=contrib, minlength=n)
        delta[s] = 0.0
        bc += delta
    return bc / 2.0
