"""Failure detection and localization from monitored-node ABC values.

A baseline of repeated normal runs gives per-node quartiles. The IQR
whisker rule flags single measurements; a standardized nearest-centroid
classifier tells which critical node failed; single-sensor accuracies feed a
greedy set cover that picks a small sensor set.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import seeds

log = logging.getLogger(__name__)

__all__ = [
    "BaselineStats",
    "FeatureVector",
    "CentroidModel",
    "TrainingError",
    "CrossValidation",
    "Cover",
    "build_baseline",
    "iqr_anomaly",
    "train_centroid",
    "classify",
    "stratified_folds",
    "cross_validate",
    "feature_label_matrix",
    "min_sensor_cover",
    "failure_samples",
    "presence_study",
    "write_samples_csv",
    "write_confusion_csv",
    "write_matrix_csv",
]


class TrainingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BaselineStats:
    """Per-node summary over ``R`` normal runs (``samples`` is R x n)."""

    samples: np.ndarray
    mean: np.ndarray = field(init=False)
    q1: np.ndarray = field(init=False)
    median: np.ndarray = field(init=False)
    q3: np.ndarray = field(init=False)
    rank: np.ndarray = field(init=False)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("a baseline needs at least two runs")
        q1, med, q3 = np.percentile(x, [25, 50, 75], axis=0)
        mean = x.mean(axis=0)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "median", med)
        object.__setattr__(self, "q3", q3)
        object.__setattr__(self, "rank", np.lexsort((np.arange(len(mean)), -mean)))

    @property
    def R(self) -> int:
        return self.samples.shape[0]

    @property
    def node_count(self) -> int:
        return self.samples.shape[1]

    @property
    def iqr(self) -> np.ndarray:
        return self.q3 - self.q1

    def fences(self, k: float = 1.5) -> tuple[np.ndarray, np.ndarray]:
        return self.q1 - k * self.iqr, self.q3 + k * self.iqr

    def whiskers(self) -> tuple[np.ndarray, np.ndarray]:
        """Most extreme samples inside the fences, per node."""
        lo, hi = self.fences()
        x = self.samples
        inside = (x >= lo) & (x <= hi)
        wlo = np.where(inside, x, np.inf).min(axis=0)
        whi = np.where(inside, x, -np.inf).max(axis=0)
        return wlo, whi

    def top(self, k: int) -> np.ndarray:
        return self.rank[:k]

    def nodes_at_ranks(self, ranks: Sequence[int]) -> np.ndarray:
        """Nodes at 1-based ranks."""
        return self.rank[np.asarray(ranks, dtype=np.int64) - 1]

    def to_json(self) -> str:
        return json.dumps({"R": self.R, "samples": self.samples.tolist()})

    @classmethod
    def from_json(cls, text: str) -> BaselineStats:
        return cls(np.array(json.loads(text)["samples"], dtype=float))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "rank", "mean", "q1", "median", "q3", "iqr"])
        pos = np.empty(self.node_count, dtype=np.int64)
        pos[self.rank] = np.arange(1, self.node_count + 1)
        for v in range(self.node_count):
            w.writerow([v, pos[v]] + [f"{a[v]:.6f}" for a in (self.mean, self.q1, self.median, self.q3, self.iqr)])

    def write_whiskers(self, fh, k: int = 50) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "node_id", "min", "q1", "median", "q3", "max"])
        lo, hi = self.whiskers()
        for r, v in enumerate(self.top(k).tolist(), start=1):
            w.writerow([r, v] + [f"{a[v]:.6f}" for a in (lo, self.q1, self.median, self.q3, hi)])


def build_baseline(experiment, R: int, stream: int = seeds.BASELINE, jobs: int = 1) -> BaselineStats:
    """``R`` independent normal runs of ``experiment``."""
    if R < 2:
        raise ValueError("R must be >= 2")
    return BaselineStats(np.stack(experiment.run_many([(stream, r, ()) for r in range(R)], jobs)))


@dataclass(frozen=True)
class FeatureVector:
    sensors: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if len(vals) != len(self.sensors):
            raise ValueError("one value per sensor expected")
        if (vals < 0).any():
            raise ValueError("ABC values are non-negative")
        object.__setattr__(self, "sensors", tuple(int(s) for s in self.sensors))
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_estimates(cls, sensors, estimates: np.ndarray) -> FeatureVector:
        sensors = tuple(int(s) for s in sensors)
        return cls(sensors, np.asarray(estimates)[list(sensors)])


def iqr_anomaly(bl: BaselineStats, fv: FeatureVector, k: float = 1.5) -> tuple[np.ndarray, bool]:
    """Per-sensor out-of-whisker flags (closed interval) and their OR."""
    idx = np.asarray(fv.sensors, dtype=np.int64)
    if ((idx < 0) | (idx >= bl.node_count)).any():
        raise ValueError("sensor not covered by the baseline")
    lo, hi = bl.fences(k)
    flags = (fv.values < lo[idx]) | (fv.values > hi[idx])
    return flags, bool(flags.any())


@dataclass(frozen=True, eq=False)
class CentroidModel:
    classes: np.ndarray
    used: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    centroids: np.ndarray
    dropped: tuple[int, ...] = ()

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.used):
            raise ValueError(f"expected {len(self.used)} features, got {X.shape[-1]}")
        return (X[..., self.used] - self.mean) / self.std


def train_centroid(X: np.ndarray, y: np.ndarray) -> CentroidModel:
    """Standardize by class-0 statistics and average each class."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise TrainingError("need at least two classes")
    if (counts < 2).any():
        raise TrainingError(f"classes with fewer than two samples: {classes[counts < 2].tolist()}")
    if 0 not in classes:
        raise TrainingError("class 0 (no change) is required for standardization")
    ref = X[y == 0]
    mean, std = ref.mean(axis=0), ref.std(axis=0, ddof=1)
    used = std > 0
    dropped = tuple(np.flatnonzero(~used).tolist())
    if dropped:
        log.warning("dropping zero-variance features %s", list(dropped))
    if not used.any():
        raise TrainingError("every feature has zero variance in class 0")
    Z = (X[:, used] - mean[used]) / std[used]
    centroids = np.stack([Z[y == c].mean(axis=0) for c in classes])
    return CentroidModel(classes, used, mean[used], std[used], centroids, dropped)


def classify(model: CentroidModel, x) -> tuple[int, np.ndarray]:
    """Nearest centroid; ``np.argmin`` keeps the first (smallest) label on ties."""
    z = model.transform(np.asarray(x, dtype=float))
    dist = np.sqrt(((model.centroids - z) ** 2).sum(axis=1))
    return int(model.classes[int(np.argmin(dist))]), dist


def _predict(model: CentroidModel, X: np.ndarray) -> np.ndarray:
    Z = model.transform(X)
    d2 = ((Z[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    return model.classes[np.argmin(d2, axis=1)]


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Fold index per sample; each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("need at least two folds")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return fold


@dataclass
class CrossValidation:
    labels: np.ndarray
    confusion: np.ndarray
    predictions: np.ndarray

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.confusion.sum())

    @property
    def recall(self) -> np.ndarray:
        return np.diag(self.confusion) / self.confusion.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "labels": self.labels.tolist(),
            "accuracy": self.accuracy,
            "recall": {int(c): float(r) for c, r in zip(self.labels, self.recall)},
            "confusion": self.confusion.tolist(),
        }


def cross_validate(X: np.ndarray, y: np.ndarray, k: int = 10, seed: int = 0) -> CrossValidation:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    labels = np.unique(y)
    fold = stratified_folds(y, k, seed)
    pred = np.empty_like(y)
    for f in range(k):
        test = fold == f
        if not test.any():
            continue
        model = train_centroid(X[~test], y[~test])
        pred[test] = _predict(model, X[test])
    pos = {c: i for i, c in enumerate(labels.tolist())}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y.tolist(), pred.tolist()):
        cm[pos[t], pos[p]] += 1
    return CrossValidation(labels, cm, pred)


def feature_label_matrix(X: np.ndarray, y: np.ndarray, labels: Sequence[int], k: int = 10,
                         seed: int = 0) -> np.ndarray:
    """Entry (i, j): cross-validated accuracy of feature ``i`` alone on the
    binary problem label ``labels[j]`` vs class 0. A feature that is constant
    over class 0 carries no usable scale and scores 0."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    out = np.zeros((X.shape[1], len(labels)))
    for j, lab in enumerate(labels):
        if lab == 0:
            raise ValueError("labels are failure classes; 0 is the reference")
        sel = (y == 0) | (y == lab)
        for i in range(X.shape[1]):
            try:
                out[i, j] = cross_validate(X[sel][:, [i]], y[sel], k, seed).accuracy
            except TrainingError:
                out[i, j] = 0.0
    return out


@dataclass
class Cover:
    selected: list[int]
    uncovered: list[int]


def min_sensor_cover(matrix: np.ndarray, theta: float) -> Cover:
    """Greedy cover of the label columns by sensor rows with entries >= theta.

    Rows are assumed ordered by sensor rank, so ties go to the smaller row.
    A final pass drops any selected row whose labels are covered by the
    others. Returned indices are rows, in selection order.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or not M.size:
        raise ValueError("matrix must be a nonempty 2-D array")
    if not 0 < theta:
        raise ValueError("theta must be positive")
    hit = M >= theta
    coverable = hit.any(axis=0)
    need = coverable.copy()
    chosen: list[int] = []
    while need.any():
        gain = (hit & need).sum(axis=1)
        best = int(np.argmax(gain))
        chosen.append(best)
        need &= ~hit[best]
    for r in list(reversed(chosen)):
        rest = [c for c in chosen if c != r]
        if rest and not (coverable & ~hit[rest].any(axis=0)).any():
            chosen = rest
    return Cover(chosen, np.flatnonzero(~coverable).tolist())


def failure_samples(experiment, sensors: Sequence[int], classes: dict[int, tuple[int, ...]], per_class: int,
                    stream: int = seeds.FAILURE, jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """``per_class`` fresh measurements of ``sensors`` per class.

    ``classes`` maps a label to its removed nodes (empty for class 0). Runs
    of class ``c`` use seed path ``(stream, c, i)``; route tables for each
    failure are built, used and released in turn.
    """
    sensors = list(int(s) for s in sensors)
    rows, labels = [], []
    for lab in sorted(classes):
        victims = tuple(classes[lab])
        est = experiment.run_many([((stream, lab), i, victims) for i in range(per_class)], jobs)
        rows.extend(e[sensors] for e in est)
        labels.extend([lab] * per_class)
        experiment.forget_failures()
    return np.array(rows), np.array(labels)


def write_samples_csv(fh, X: np.ndarray, y: np.ndarray, sensors: Sequence[int]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["label"] + [f"sensor_{s}" for s in sensors])
    for lab, row in zip(y.tolist(), X):
        w.writerow([lab] + [f"{v:.6f}" for v in row])


def write_confusion_csv(fh, cv: CrossValidation) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["true\\pred"] + [str(c) for c in cv.labels.tolist()])
    for c, row in zip(cv.labels.tolist(), cv.confusion.tolist()):
        w.writerow([c] + row)


def write_matrix_csv(fh, matrix: np.ndarray, sensors: Sequence[int], labels: Sequence[int]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["sensor"] + [f"label_{j}" for j in labels])
    for s, row in zip(sensors, matrix):
        w.writerow([s] + [f"{v:.4f}" for v in row])


def presence_study(experiment, bl: BaselineStats, sizes: Sequence[int], pool: int = 200, n_sensors: int = 20,
                   trials: int = 10, holdout: int = 20, jobs: int = 1) -> dict:
    """Detection rate of the whisker rule after removing ``size`` random
    top-``pool`` nodes, and its false-alarm rate on normal runs.

    Each trial draws its own victims and ``n_sensors`` sensors from the
    surviving top-``pool`` nodes, then measures one fresh interval.
    """
    top = bl.top(pool)
    report: dict = {"pool": pool, "sensors": n_sensors, "trials": trials, "detection": {}, "trials_detail": []}
    for size in sizes:
        hits = 0
        for t in range(trials):
            rng = np.random.default_rng(seeds.derive_seed(experiment.seed, seeds.PRESENCE, size, t))
            victims = tuple(sorted(rng.choice(top, size, replace=False).tolist()))
            alive = np.setdiff1d(top, victims)
            sensors = np.sort(rng.choice(alive, n_sensors, replace=False))
            est = experiment.run_many([((seeds.PRESENCE, size), t, victims)], jobs)[0]
            flags, alarm = iqr_anomaly(bl, FeatureVector.from_estimates(sensors, est))
            experiment.forget_failures()
            hits += alarm
            report["trials_detail"].append({"size": size, "trial": t, "victims": list(victims),
                                            "flagged": int(flags.sum()), "alarm": alarm})
        report["detection"][str(size)] = hits / trials
    est = experiment.run_many([(seeds.HOLDOUT, r, ()) for r in range(holdout)], jobs)
    alarms = 0
    for r, e in enumerate(est):
        rng = np.random.default_rng(seeds.derive_seed(experiment.seed, seeds.HOLDOUT, r))
        sensors = np.sort(rng.choice(top, n_sensors, replace=False))
        alarms += iqr_anomaly(bl, FeatureVector.from_estimates(sensors, e))[1]
    report["false_alarm"] = alarms / holdout
    report["detection_overall"] = float(np.mean(list(report["detection"].values())))
    return report
