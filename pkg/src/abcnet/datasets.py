"""Graph instances: file loading plus seeded synthetic stand-ins.

The three infrastructure graphs (World Airports, AS-733, Oregon-01) are not
redistributable with the package. ``load_graph`` reads them from
``$ABCNET_DATA_DIR`` when present; otherwise it builds a connected
heavy-tailed modular random graph with the same node count, edge count
and approximately the same maximum degree.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, from_edges, load_edge_list

log = logging.getLogger(__name__)

DATA_DIR_ENV = "ABCNET_DATA_DIR"


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    nodes: int
    edges: int
    max_degree: int
    filenames: tuple[str, ...]
    regions: int = 1
    locality: float = 0.0


DATASETS = {
    "airports": DatasetInfo("airports", 2939, 30501, 237, ("airports.txt", "opsahl-openflights.txt", "out.opsahl-openflights"),
                            regions=8, locality=0.95),
    "as733": DatasetInfo("as733", 6474, 12572, 1458, ("as733.txt", "as20000102.txt")),
    "oregon01": DatasetInfo("oregon01", 10670, 22002, 2312, ("oregon01.txt", "oregon1_010331.txt")),
}


GATEWAY_SHARE = 0.05


def _weights(n: int, m: int, max_degree: int, min_share: float = 0.25) -> np.ndarray:
    """Shifted power-law weights ``(i + shift) ** -a``.

    Scaled to the non-tree edge budget, the heaviest node expects about
    ``max_degree - 1`` extra endpoints and the lightest about ``min_share``.
    """
    budget = 2 * (m - n + 1)
    want_max = (max_degree - 1) / budget
    want_min = min_share / budget
    ranks = np.arange(n, dtype=float)

    def fit(shift: float) -> np.ndarray:
        lo, hi = 0.0, 8.0
        for _ in range(60):
            a = 0.5 * (lo + hi)
            w = (ranks + shift) ** -a
            if w[0] / w.sum() < want_max:
                lo = a
            else:
                hi = a
        w = (ranks + shift) ** -(0.5 * (lo + hi))
        return w / w.sum()

    lo, hi = 0.0, 6.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if fit(10.0 ** mid)[-1] > want_min:
            lo = mid
        else:
            hi = mid
    return fit(10.0 ** (0.5 * (lo + hi)))


def _draw(cdf: np.ndarray, u) -> np.ndarray:
    return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1)


def synthetic_graph(n: int, m: int, max_degree: int, seed: int = 0,
                    regions: int = 1, locality: float = 0.0) -> Graph:
    """Connected random graph with exactly ``n`` nodes and ``m`` edges.

    A random recursive tree (attachment proportional to weight) guarantees
    connectivity and minimum degree 1; the remaining edges are independent
    draws with endpoint probability proportional to the same power-law
    weights, so the top node's expected degree is about ``max_degree``.

    With ``regions > 1`` nodes are spread uniformly over that many groups.
    A drawn edge crossing groups is kept if both ends are gateways (the
    heaviest 5% of nodes); otherwise, with probability ``locality``, its
    second end is redrawn inside the first end's group. Long-haul links
    then concentrate on hubs while degree marginals stay near the weights.
    The tree is built the same way, so it also mostly stays regional.
    """
    if m < n - 1:
        raise ValueError("too few edges for a connected graph")
    rng = np.random.default_rng([seed, n, m])
    w = _weights(n, m, max_degree)
    ident = rng.permutation(n)
    order = np.argsort(-w + rng.random(n) * 1e-12, kind="stable")
    group = rng.integers(0, regions, n)
    gateway = np.zeros(n, dtype=bool)
    gateway[order[: max(1, int(round(GATEWAY_SHARE * n)))]] = True
    members = [np.flatnonzero(group == r) for r in range(regions)]
    cdf_in = [np.cumsum(w[mem]) for mem in members]

    def localize(x: int, y: int) -> int:
        if group[x] == group[y] or (gateway[x] and gateway[y]) or rng.random() >= locality:
            return y
        mem = members[group[x]]
        return int(mem[_draw(cdf_in[group[x]], rng.random())])

    tree = np.empty((n - 1, 2), dtype=np.int64)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    cum = np.cumsum(w[order])
    for i in range(1, n):
        x = int(order[i])
        y = int(order[min(int(np.searchsorted(cum[:i], rng.random() * cum[i - 1], side="right")), i - 1)])
        if regions > 1 and group[x] != group[y]:
            y2 = localize(x, y)
            # the tree may only attach to nodes already placed
            y = y2 if rank[y2] < i else y
        tree[i - 1] = (x, y)

    keys = set((min(a, b), max(a, b)) for a, b in tree.tolist())
    cdf = np.cumsum(w)
    while len(keys) < m:
        need = m - len(keys)
        a = _draw(cdf, rng.random(2 * need + 16))
        b = _draw(cdf, rng.random(2 * need + 16))
        for x, y in zip(a.tolist(), b.tolist()):
            if regions > 1:
                y = localize(x, y)
            if x != y:
                keys.add((min(x, y), max(x, y)))
                if len(keys) == m:
                    break
    edges = np.array(sorted(keys), dtype=np.int64)
    edges = ident[edges]
    return from_edges(n, edges)


def standin(name: str, seed: int = 0) -> Graph:
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; expected one of {sorted(DATASETS)}")
    info = DATASETS[name]
    return synthetic_graph(info.nodes, info.edges, info.max_degree, seed=seed,
                           regions=info.regions, locality=info.locality)


def load_graph(spec: str, seed: int = 0, data_dir: str | os.PathLike | None = None) -> Graph:
    """Resolve ``spec`` to a graph.

    ``spec`` is an edge-list path, a dataset name (``airports``, ``as733``,
    ``oregon01``) looked up in the data directory, or ``synthetic:<name>``
    to force the stand-in.
    """
    if spec.startswith("synthetic:"):
        return standin(spec.split(":", 1)[1], seed)
    path = Path(spec)
    if path.is_file():
        return load_edge_list(path.read_text())
    if spec in DATASETS:
        root = Path(data_dir or os.environ.get(DATA_DIR_ENV, "data"))
        for fname in DATASETS[spec].filenames:
            if (root / fname).is_file():
                return load_edge_list((root / fname).read_text())
        log.info("dataset %s not found under %s; using synthetic stand-in", spec, root)
        return standin(spec, seed)
    raise FileNotFoundError(f"graph file not found: {spec}")
