"""Command-line entry point: ``abcnet <command> [--config F] [--seed N] ...``.

Every command writes into ``--out-dir`` (default ``abc-out``):

    simulate/   abc_interval_<i>.csv, manifest.json
    baseline/   baseline.json, baseline.csv, whiskers.csv, manifest.json
    search/     trace_<strategy>_<trial>.csv, metrics.json
    detect/     samples.csv, confusion.csv, samples_noisy.csv, confusion_noisy.csv,
                accuracy.json, presence.json
    sensors/    matrix.csv, cover.json
    report/     whiskers.csv, topk_curves.csv, confusion*.csv, oracle.csv

Exit codes: 0 ok, 1 bad configuration, 2 I/O problem, 3 missing prerequisite.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import seeds
from .config import ConfigError, ExperimentSpec, apply_overrides, load_spec
from .datasets import load_graph
from .detect import (
    BaselineStats,
    build_baseline,
    cross_validate,
    failure_samples,
    feature_label_matrix,
    min_sensor_cover,
    presence_study,
    write_confusion_csv,
    write_matrix_csv,
    write_samples_csv,
)
from .graph import GraphParseError
from .search import AbcView, SearchConfig, rank_nodes, run_search
from .simulator import Experiment, SimConfigError, SimState, interval_deltas, run_interval, write_abc_csv
from .traffic import TrafficConfigError

log = logging.getLogger("abcnet")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DEPENDENCY = 0, 1, 2, 3


class DependencyError(RuntimeError):
    pass


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _experiment(spec: ExperimentSpec, interval_size: int, noise=None) -> Experiment:
    g = load_graph(spec.graph, seed=spec.seed)
    return Experiment.build(
        g, seed=spec.seed, interval_size=interval_size, distribution=spec.traffic.distribution,
        noise_range=tuple(noise or spec.traffic.noise), precision=spec.sim.precision, sparse=spec.sim.sparse,
    )


def _require(path: Path, command: str) -> Path:
    if not path.is_file():
        raise DependencyError(f"{path} not found; run `abcnet {command}` first")
    return path


def _load_baseline(out: Path) -> BaselineStats:
    return BaselineStats.from_json(_require(out / "baseline" / "baseline.json", "baseline").read_text())


def cmd_simulate(spec: ExperimentSpec, out: Path, jobs: int) -> None:
    d = out / "simulate"
    d.mkdir(parents=True, exist_ok=True)
    ex = _experiment(spec, spec.sim.interval_size)
    cfg = ex.config(seeds.SIMULATE, 0, track_edges=False, oracle=spec.sim.oracle, intervals=spec.sim.intervals)
    state = SimState.for_config(ex.graph, cfg)
    history = []
    for i in range(cfg.intervals):
        run_interval(ex.graph, ex.routes, ex.traffic, cfg, state, i)
        est = state.node_estimates()
        history.append(est)
        with open(d / f"abc_interval_{i}.csv", "w", newline="") as fh:
            write_abc_csv(fh, est, state.exact_node_counts() if state.oracle else None)
    manifest = {
        "experiment": ex.manifest(),
        "config": spec.to_dict(),
        "sim_seed": cfg.seed,
        "transactions": state.transactions,
        "dropped_pairs": state.dropped_pairs,
        "interval_deltas": interval_deltas(history),
    }
    if state.oracle:
        exact = state.exact_node_counts()
        est = history[-1]
        big = exact >= 100
        rel = np.abs(est[big] - exact[big]) / exact[big]
        manifest["oracle"] = {
            "pearson": float(np.corrcoef(est, exact)[0, 1]),
            "nodes_exact_ge_100": int(big.sum()),
            "max_rel_error": float(rel.max()) if rel.size else 0.0,
        }
    _dump(d / "manifest.json", manifest)


def cmd_baseline(spec: ExperimentSpec, out: Path, jobs: int) -> None:
    d = out / "baseline"
    d.mkdir(parents=True, exist_ok=True)
    ex = _experiment(spec, spec.detect.interval_size)
    bl = build_baseline(ex, spec.detect.R, jobs=jobs)
    (d / "baseline.json").write_text(bl.to_json() + "\n")
    with open(d / "baseline.csv", "w", newline="") as fh:
        bl.write_csv(fh)
    with open(d / "whiskers.csv", "w", newline="") as fh:
        bl.write_whiskers(fh, min(50, bl.node_count))
    _dump(d / "manifest.json", {"experiment": ex.manifest(), "R": bl.R, "config": spec.to_dict()})


def cmd_search(spec: ExperimentSpec, out: Path, jobs: int) -> None:
    bl = _load_baseline(out)
    d = out / "search"
    d.mkdir(parents=True, exist_ok=True)
    q = spec.search
    ex = _experiment(spec, spec.detect.interval_size)
    if bl.node_count != ex.graph.node_count:
        raise ConfigError("baseline was built for a different graph")
    view = AbcView.from_state(ex.run(seeds.SEARCH, 0, track_edges=True))
    truth = rank_nodes(bl.mean)
    metrics = {"K": q.K, "C": q.C, "max_hops": q.max_hops, "trials": q.trials, "strategies": {}}
    for strategy in q.strategies:
        curves = []
        for t in range(q.trials):
            cfg = SearchConfig(strategy, q.C, q.max_hops, q.K, seeds.derive_seed(spec.seed, seeds.SEARCH, t),
                               bcn_score=q.bcn_score)
            res = run_search(view, cfg)
            with open(d / f"trace_{strategy}_{t}.csv", "w", newline="") as fh:
                res.write_trace(fh)
            curves.append(res.curves(bl.mean, q.max_hops))
        hits = np.array([[c["hits"] for c in cur] for cur in curves], dtype=float)
        ratio = np.array([[c["ratio"] for c in cur] for cur in curves])
        metrics["strategies"][strategy] = {
            "hits_mean": hits.mean(axis=0).tolist(),
            "hits_se": (hits.std(axis=0, ddof=1) / np.sqrt(len(hits))).tolist() if len(hits) > 1 else [0.0] * hits.shape[1],
            "ratio_mean": ratio.mean(axis=0).tolist(),
            "final_top_k": [cur[-1]["hits"] for cur in curves],
        }
    metrics["baseline_top_k"] = truth[: q.K]
    _dump(d / "metrics.json", metrics)


def _classes(bl: BaselineStats, spec: ExperimentSpec) -> dict[int, tuple[int, ...]]:
    lo, hi = spec.detect.failure_ranks
    out = {0: ()}
    for r in range(lo, hi + 1):
        out[r] = (int(bl.nodes_at_ranks([r])[0]),)
    return out


def cmd_detect(spec: ExperimentSpec, out: Path, jobs: int) -> None:
    bl = _load_baseline(out)
    d = out / "detect"
    d.mkdir(parents=True, exist_ok=True)
    det = spec.detect
    ex = _experiment(spec, det.interval_size)
    if bl.node_count != ex.graph.node_count:
        raise ConfigError("baseline was built for a different graph")
    lo, hi = det.sensor_ranks
    sensors = bl.nodes_at_ranks(range(lo, hi + 1)).tolist()
    classes = _classes(bl, spec)
    fold_seed = seeds.derive_seed(spec.seed, seeds.FOLDS)
    result = {"sensors": sensors, "classes": {str(k): list(v) for k, v in classes.items()},
              "cell_semantics": "multi-class nearest centroid, stratified k-fold"}
    for tag, noise in (("", None), ("_noisy", det.noise)):
        exp = ex if noise is None else ex.with_noise(*noise)
        X, y = failure_samples(exp, sensors, classes, det.per_class, jobs=jobs)
        cv = cross_validate(X, y, det.folds, fold_seed)
        with open(d / f"samples{tag}.csv", "w", newline="") as fh:
            write_samples_csv(fh, X, y, sensors)
        with open(d / f"confusion{tag}.csv", "w", newline="") as fh:
            write_confusion_csv(fh, cv)
        result["clean" if not tag else "noisy"] = cv.to_dict()
    result["accuracy_drop"] = result["clean"]["accuracy"] - result["noisy"]["accuracy"]
    _dump(d / "accuracy.json", result)
    presence = presence_study(ex, bl, det.presence_sizes, det.presence_pool, det.presence_sensors,
                              det.presence_trials, det.holdout_runs, jobs)
    _dump(d / "presence.json", presence)


def _read_samples(path: Path) -> tuple[np.ndarray, np.ndarray, list[int]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    sensors = [int(h.split("_", 1)[1]) for h in rows[0][1:]]
    y = np.array([int(r[0]) for r in rows[1:]])
    X = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return X, y, sensors


def cmd_sensors(spec: ExperimentSpec, out: Path, jobs: int) -> None:
    X, y, sensors = _read_samples(_require(out / "detect" / "samples.csv", "detect"))
    d = out / "sensors"
    d.mkdir(parents=True, exist_ok=True)
    labels = sorted(int(c) for c in set(y.tolist()) if c != 0)
    M = feature_label_matrix(X, y, labels, spec.detect.folds, seeds.derive_seed(spec.seed, seeds.SENSORS))
    with open(d / "matrix.csv", "w", newline="") as fh:
        write_matrix_csv(fh, M, sensors, labels)
    cover = min_sensor_cover(M, spec.detect.theta)
    _dump(d / "cover.json", {
        "theta": spec.detect.theta,
        "cell_semantics": "binary label-vs-normal accuracy of one sensor",
        "selected_sensors": [sensors[i] for i in cover.selected],
        "selected_rows": cover.selected,
        "uncovered_labels": [labels[j] for j in cover.uncovered],
    })


def cmd_report(spec: ExperimentSpec, out: Path, jobs: int) -> None:
    d = out / "report"
    d.mkdir(parents=True, exist_ok=True)
    whiskers = _require(out / "baseline" / "whiskers.csv", "baseline")
    shutil.copyfile(whiskers, d / "whiskers.csv")
    metrics = json.loads(_require(out / "search" / "metrics.json", "search").read_text())
    with open(d / "topk_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "hop", "hits_mean", "hits_se", "ratio_mean"])
        for name, m in sorted(metrics["strategies"].items()):
            for hop, (h, se, r) in enumerate(zip(m["hits_mean"], m["hits_se"], m["ratio_mean"])):
                w.writerow([name, hop, f"{h:.4f}", f"{se:.4f}", f"{r:.6f}"])
    for name in ("confusion.csv", "confusion_noisy.csv"):
        shutil.copyfile(_require(out / "detect" / name, "detect"), d / name)
    matrix = out / "sensors" / "matrix.csv"
    if matrix.is_file():
        shutil.copyfile(matrix, d / "feature_label_matrix.csv")
    sim = sorted((out / "simulate").glob("abc_interval_*.csv"), key=lambda p: int(p.stem.rsplit("_", 1)[1]))
    if sim:
        shutil.copyfile(sim[-1], d / "oracle.csv")


COMMANDS = {
    "simulate": cmd_simulate,
    "search": cmd_search,
    "baseline": cmd_baseline,
    "detect": cmd_detect,
    "sensors": cmd_sensors,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abcnet", description="Active betweenness cardinality toolkit")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON experiment spec")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out-dir", default="abc-out", help="output directory")
    p.add_argument("--graph", help="edge-list path, dataset name or synthetic:<name>")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. --set sim.interval_size=1000")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = load_spec(args.config)
        extra = list(args.overrides)
        if args.seed is not None:
            extra.append(f"seed={args.seed}")
        if args.graph is not None:
            extra.append(f"graph={json.dumps(args.graph)}")
        spec = apply_overrides(spec, extra).validate()
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](spec, out, args.jobs)
    except DependencyError as exc:
        print(f"abcnet: dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except GraphParseError as exc:
        print(f"abcnet: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, TrafficConfigError, SimConfigError, ValueError) as exc:
        print(f"abcnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"abcnet: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
