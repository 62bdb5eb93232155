"""Workload model: per-node send/receive levels and product-form pair sampling.

The probability of a transaction from ``u`` to ``v`` (``u != v``) is
proportional to ``send[u] * recv[v]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["TrafficModel", "TrafficConfigError", "assign_levels", "sample_pair", "sample_pairs", "apply_noise"]

DISTRIBUTIONS = ("uniform", "gaussian", "powerlaw")

GAUSSIAN_MEAN = 1.0
GAUSSIAN_STD = 0.25
GAUSSIAN_FLOOR = 0.01
POWERLAW_EXPONENT = 2.5
POWERLAW_MIN = 0.01
NOISY = (0.8, 1.2)


class TrafficConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrafficModel:
    send_level: np.ndarray
    recv_level: np.ndarray
    distribution: str = "gaussian"
    noise_range: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        send = np.asarray(self.send_level, dtype=float)
        recv = np.asarray(self.recv_level, dtype=float)
        if send.shape != recv.shape or send.ndim != 1:
            raise TrafficConfigError("send and receive levels must be 1-D and equally long")
        if (send < 0).any() or (recv < 0).any():
            raise TrafficConfigError("activity levels must be non-negative")
        senders, receivers = np.flatnonzero(send > 0), np.flatnonzero(recv > 0)
        if not len(senders) or not len(receivers) or (
            len(senders) == 1 and len(receivers) == 1 and senders[0] == receivers[0]
        ):
            raise TrafficConfigError("no ordered pair of distinct nodes can communicate")
        _check_noise(self.noise_range)
        object.__setattr__(self, "send_level", send)
        object.__setattr__(self, "recv_level", recv)
        object.__setattr__(self, "noise_range", (float(self.noise_range[0]), float(self.noise_range[1])))

    @property
    def node_count(self) -> int:
        return len(self.send_level)

    def with_noise(self, lo: float, hi: float) -> TrafficModel:
        return TrafficModel(self.send_level, self.recv_level, self.distribution, (lo, hi), self.seed)

    def pair_probability(self, u: int, v: int) -> float:
        if u == v:
            return 0.0
        s, r = self.send_level, self.recv_level
        total = s.sum() * r.sum() - float(s @ r)
        return float(s[u] * r[v] / total)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["send_level", "recv_level"])
        for a, b in zip(self.send_level, self.recv_level):
            w.writerow([repr(float(a)), repr(float(b))])

    @classmethod
    def read_csv(cls, fh, distribution: str = "custom", noise_range=(1.0, 1.0), seed: int = 0) -> TrafficModel:
        rows = list(csv.reader(fh))
        body = [r for r in rows[1:] if r]
        send = np.array([float(r[0]) for r in body])
        recv = np.array([float(r[1]) for r in body])
        return cls(send, recv, distribution, tuple(noise_range), seed)


def _check_noise(noise_range) -> None:
    lo, hi = noise_range
    if lo <= 0:
        raise TrafficConfigError(f"noise lower bound must be positive, got {lo}")
    if lo > hi:
        raise TrafficConfigError(f"noise range [{lo}, {hi}] is empty")


def _draw(dist: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if dist == "uniform":
        return 1.0 - rng.random(n)
    if dist == "gaussian":
        x = rng.normal(GAUSSIAN_MEAN, GAUSSIAN_STD, n)
        bad = x < GAUSSIAN_FLOOR
        while bad.any():
            x[bad] = rng.normal(GAUSSIAN_MEAN, GAUSSIAN_STD, int(bad.sum()))
            bad = x < GAUSSIAN_FLOOR
        return x
    if dist == "powerlaw":
        return POWERLAW_MIN * (1.0 - rng.random(n)) ** (-1.0 / (POWERLAW_EXPONENT - 1.0))
    raise TrafficConfigError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")


def assign_levels(n: int, distribution: str = "gaussian", seed: int = 0, noise_range=(1.0, 1.0)) -> TrafficModel:
    """Draw i.i.d. send and receive levels for ``n`` nodes."""
    if n < 2:
        raise TrafficConfigError("need at least two nodes")
    if distribution not in DISTRIBUTIONS:
        raise TrafficConfigError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")
    rng = np.random.default_rng([seed, 0x7A11C])
    send = _draw(distribution, n, rng)
    recv = _draw(distribution, n, rng)
    return TrafficModel(send, recv, distribution, tuple(noise_range), seed)


def apply_noise(tm: TrafficModel, interval: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Effective (send, recv) levels for one interval.

    Each level is scaled by an independent uniform factor from the noise
    range. ``interval`` is only recorded by callers deriving ``rng``; the
    base model is never mutated.
    """
    lo, hi = tm.noise_range
    _check_noise((lo, hi))
    if lo == hi == 1.0:
        return tm.send_level.copy(), tm.recv_level.copy()
    n = tm.node_count
    return tm.send_level * rng.uniform(lo, hi, n), tm.recv_level * rng.uniform(lo, hi, n)


def _categorical(cdf: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    x = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return np.minimum(x, len(cdf) - 1)


def sample_pairs(send: np.ndarray, recv: np.ndarray, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``size`` ordered pairs: independent draws ``s ~ send``, ``d ~ recv``,
    redrawing both whenever ``s == d``."""
    cs, cr = np.cumsum(send), np.cumsum(recv)
    if cs[-1] <= 0 or cr[-1] <= 0:
        raise TrafficConfigError("all send or all receive levels are zero")
    s = _categorical(cs, size, rng)
    d = _categorical(cr, size, rng)
    clash = np.flatnonzero(s == d)
    tries = 0
    while clash.size:
        tries += 1
        if tries > 10_000:
            raise TrafficConfigError("only one node can both send and receive")
        s[clash] = _categorical(cs, clash.size, rng)
        d[clash] = _categorical(cr, clash.size, rng)
        clash = clash[s[clash] == d[clash]]
    return s, d


def sample_pair(tm: TrafficModel, rng: np.random.Generator) -> tuple[int, int]:
    s, d = sample_pairs(tm.send_level, tm.recv_level, 1, rng)
    return int(s[0]), int(d[0])
