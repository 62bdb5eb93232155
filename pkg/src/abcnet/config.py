"""Experiment specification: JSON file plus command-line overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .search import BCN_SCORES, STRATEGIES
from .sketch import MAX_P, MIN_P
from .traffic import DISTRIBUTIONS

__all__ = ["ConfigError", "ExperimentSpec", "load_spec", "apply_overrides"]


class ConfigError(ValueError):
    pass


@dataclass
class TrafficSpec:
    distribution: str = "gaussian"
    noise: list[float] = field(default_factory=lambda: [1.0, 1.0])


@dataclass
class SimSpec:
    interval_size: int = 50_000
    intervals: int = 1
    precision: int = 12
    oracle: bool = False
    sparse: bool = True


@dataclass
class SearchSpec:
    strategies: list[str] = field(default_factory=lambda: ["BCN"])
    C: int = 20
    K: int = 20
    max_hops: int = 7
    trials: int = 20
    bcn_score: str = "max"


@dataclass
class DetectSpec:
    R: int = 50
    interval_size: int = 200_000
    sensor_ranks: list[int] = field(default_factory=lambda: [10, 30])
    failure_ranks: list[int] = field(default_factory=lambda: [1, 7])
    per_class: int = 50
    folds: int = 10
    theta: float = 0.9
    noise: list[float] = field(default_factory=lambda: [0.8, 1.2])
    presence_sizes: list[int] = field(default_factory=lambda: [10, 20, 30, 50])
    presence_pool: int = 200
    presence_sensors: int = 20
    presence_trials: int = 10
    holdout_runs: int = 20


@dataclass
class ExperimentSpec:
    graph: str = "synthetic:airports"
    seed: int = 0
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    sim: SimSpec = field(default_factory=SimSpec)
    search: SearchSpec = field(default_factory=SearchSpec)
    detect: DetectSpec = field(default_factory=DetectSpec)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> ExperimentSpec:
        t, s, q, d = self.traffic, self.sim, self.search, self.detect
        _check(t.distribution in DISTRIBUTIONS, f"traffic.distribution must be one of {DISTRIBUTIONS}")
        for name, rng in (("traffic.noise", t.noise), ("detect.noise", d.noise)):
            _check(len(rng) == 2 and 0 < rng[0] <= rng[1], f"{name} must be [lo, hi] with 0 < lo <= hi")
        _check(s.interval_size >= 1 and s.intervals >= 1, "sim.interval_size and sim.intervals must be >= 1")
        _check(MIN_P <= s.precision <= MAX_P, f"sim.precision must lie in [{MIN_P}, {MAX_P}]")
        q.strategies = [x.upper().replace("-", "") for x in q.strategies]
        _check(q.strategies and all(x in STRATEGIES for x in q.strategies), f"search.strategies must be drawn from {STRATEGIES}")
        _check(q.bcn_score in BCN_SCORES, f"search.bcn_score must be one of {BCN_SCORES}")
        _check(q.C >= 1 and q.K >= 1 and q.max_hops >= 0 and q.trials >= 1, "search C, K, trials must be >= 1 and max_hops >= 0")
        _check(d.R >= 2, "detect.R must be >= 2")
        _check(d.interval_size >= 1, "detect.interval_size must be >= 1")
        for name in ("sensor_ranks", "failure_ranks"):
            lo_hi = getattr(d, name)
            _check(len(lo_hi) == 2 and 1 <= lo_hi[0] <= lo_hi[1], f"detect.{name} must be [first, last] 1-based ranks")
        _check(d.per_class >= 2 and d.folds >= 2, "detect.per_class and detect.folds must be >= 2")
        _check(d.per_class >= d.folds, "detect.per_class must be at least detect.folds")
        _check(d.theta > 0, "detect.theta must be positive")
        _check(d.presence_sensors >= 1 and d.presence_trials >= 1 and d.holdout_runs >= 1,
               "detect presence settings must be >= 1")
        _check(all(1 <= k < d.presence_pool for k in d.presence_sizes), "detect.presence_sizes must lie in [1, presence_pool)")
        return self


def _check(ok: bool, message: str) -> None:
    if not ok:
        raise ConfigError(message)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown field(s) in {where or 'config'}: {', '.join(unknown)}")
    kw = {}
    for name, value in data.items():
        proto = getattr(cls(), name)
        path = f"{where}.{name}" if where else name
        if is_dataclass(proto):
            kw[name] = _build(type(proto), value, path)
        else:
            kw[name] = _coerce(proto, value, path)
    return cls(**kw)


def _coerce(proto, value, path: str):
    if isinstance(proto, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{path} must be true or false")
    if isinstance(proto, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{path} must be an integer")
    if isinstance(proto, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{path} must be a number")
    if isinstance(proto, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{path} must be a string")
    if isinstance(proto, list):
        if isinstance(value, list):
            return list(value)
        raise ConfigError(f"{path} must be a list")
    return value


def load_spec(path: str | Path | None = None) -> ExperimentSpec:
    if path is None:
        return ExperimentSpec()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return _build(ExperimentSpec, data, "")


def apply_overrides(spec: ExperimentSpec, pairs: list[str]) -> ExperimentSpec:
    """Apply ``section.field=value`` overrides; values are parsed as JSON
    when possible, else taken as strings."""
    data = spec.to_dict()
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config section {p!r} in {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config field {key!r}")
        node[parts[-1]] = value
    return _build(ExperimentSpec, data, "")
