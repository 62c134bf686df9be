"""Command-line surface: train, oracle, benchmark, export-similarity.

Exit codes: 0 success, 1 runtime/numeric failure, 2 config/parse error,
3 guard violation. The HENCLER_SEED environment variable overrides the
configured seed for every command.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import tracemalloc
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dual import bicluster, eigen_form_check, stationarity_residual
from .evaluate import assign_clusters, nmi
from .graphio import AttributedGraph, load_graph, random_walk_pe
from .loss import EPS_DEG
from .model import HenclerParams, ModelDims, init_params, load_checkpoint, \
    map_features, project, save_checkpoint, similarity_matrix
from .synthetic import planted_block_similarity, random_sparse_graph
from .trainer import RunRecord, TrainConfig, train

__all__ = ["main", "run_benchmark", "ConfigError", "GuardExceeded"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_GUARD = 3

DENSE_GUARD_NODES = 5000  # materializing S above this needs an explicit override

_TRAIN_KEYS = {"num_clusters", "epochs", "learning_rate", "hidden", "d_f", "s",
               "k_pe", "seed", "loss", "tie_maps", "eval_every",
               "kmeans_restarts", "precision"}
_CONFIG_KEYS = _TRAIN_KEYS | {"edge_path", "feature_path", "label_path",
                              "directed", "output_dir"}


class ConfigError(ValueError):
    """Bad run configuration (unknown key, missing file, malformed JSON)."""


class GuardExceeded(RuntimeError):
    """A size guard was hit without an explicit override."""


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} "
                          f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {sorted(unknown)}")
    for key in ("edge_path", "feature_path"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required key {key!r}")
    return doc


def _resolve_seed(seed: int) -> int:
    env = os.environ.get("HENCLER_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"HENCLER_SEED must be an integer, got {env!r}") \
                from exc
    return seed


def _load_dataset(doc: dict) -> AttributedGraph:
    return load_graph(doc["edge_path"], doc["feature_path"],
                      doc.get("label_path"), directed=doc.get("directed", True))


def _train_config(doc: dict, g: AttributedGraph, overrides: dict) -> TrainConfig:
    fields = {k: doc[k] for k in _TRAIN_KEYS if k in doc}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    if "num_clusters" not in fields or fields["num_clusters"] is None:
        if g.num_classes is None:
            raise ConfigError("num_clusters missing and no labels to infer it")
        fields["num_clusters"] = g.num_classes
    try:
        config = TrainConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training configuration: {exc}") from exc
    return config


def _write_assignment(path, assignment) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("node,cluster\n")
        for node, cluster in enumerate(assignment):
            handle.write(f"{node},{cluster}\n")


def _write_embeddings(path, emb) -> None:
    s = emb.source.shape[1]
    header = ",".join(["node"] + [f"e{i}" for i in range(s)]
                      + [f"r{i}" for i in range(s)])
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(header + "\n")
        for node in range(emb.source.shape[0]):
            row = [str(node)] + [repr(float(x)) for x in emb.source[node]] \
                + [repr(float(x)) for x in emb.target[node]]
            handle.write(",".join(row) + "\n")


def _single_run(g: AttributedGraph, config: TrainConfig, pe) \
        -> tuple[HenclerParams, RunRecord]:
    return train(g, config, pe=pe)


def cmd_train(args) -> int:
    doc = load_config(args.config)
    g = _load_dataset(doc)
    config = _train_config(doc, g, {"loss": args.loss,
                                    "tie_maps": args.tie_maps or None})
    base_seed = _resolve_seed(config.seed)
    out_dir = Path(args.output_dir or doc.get("output_dir", "hencler_out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    pe = random_walk_pe(g, config.k_pe)
    seeds = [base_seed + i for i in range(args.repeats)]
    configs = [TrainConfig(**{**asdict(config), "seed": s}) for s in seeds]
    if args.parallel and args.repeats > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_single_run, [g] * len(configs), configs,
                                    [pe] * len(configs)))
    else:
        results = [_single_run(g, c, pe) for c in configs]

    records = [record for _, record in results]
    metrics: dict = {"config": {**asdict(config), "seeds": seeds},
                     "runs": [r.to_dict() for r in records]}
    tracked = [r for r in records if r.best_nmi is not None]
    if tracked:
        best_nmis = np.array([r.best_nmi for r in tracked])
        best_f1s = np.array([r.best_f1 for r in tracked])
        metrics["aggregate"] = {
            "best_nmi_mean": float(best_nmis.mean()),
            "best_nmi_std": float(best_nmis.std()),
            "best_f1_mean": float(best_f1s.mean()),
            "best_f1_std": float(best_f1s.std()),
        }
        print(f"best NMI {best_nmis.mean():.4f} +- {best_nmis.std():.4f}  "
              f"best F1 {best_f1s.mean():.4f} +- {best_f1s.std():.4f}")
    total_wall = sum(r.wall_time_s for r in records)
    print(f"trained {len(records)} run(s) in {total_wall:.1f}s")

    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=1),
                                          encoding="utf-8")
    params = results[0][0]
    save_checkpoint(params, out_dir / "checkpoint.json")
    emb = project(map_features(g, pe, params), params)
    assignment = assign_clusters(emb, config.num_clusters,
                                 restarts=config.kmeans_restarts,
                                 seed=base_seed)
    _write_assignment(out_dir / "assignment.csv", assignment)
    _write_embeddings(out_dir / "embeddings.csv", emb)
    return EXIT_OK


def _materialized_factors(g, pe, params, max_nodes):
    if g.num_nodes > max_nodes:
        raise GuardExceeded(
            f"{g.num_nodes} nodes exceeds the dense-similarity guard "
            f"({max_nodes}); pass --max-nodes to override")
    sf = map_features(g, pe, params)
    return sf, similarity_matrix(sf)


def cmd_oracle(args) -> int:
    out_dir = Path(args.output_dir or "hencler_oracle")
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args.seed)

    if args.synthetic == "blocks":
        sizes = [int(x) for x in args.block_sizes.split(",")]
        sim, labels = planted_block_similarity(sizes, noise=args.noise,
                                               seed=seed)
        rows, cols, solution = bicluster(sim, k=len(sizes), seed=seed)
        row_nmi = nmi(rows, labels)
        col_nmi = nmi(cols, labels)
        print(f"planted blocks: row NMI {row_nmi:.4f}  col NMI {col_nmi:.4f}")
        _write_assignment(out_dir / "row_clusters.csv", rows)
        _write_assignment(out_dir / "col_clusters.csv", cols)
        return EXIT_OK

    if args.config is None:
        raise ConfigError("oracle needs --config (or --synthetic blocks)")
    doc = load_config(args.config)
    g = _load_dataset(doc)
    config = _train_config(doc, g, {})
    pe = random_walk_pe(g, config.k_pe)
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
    else:
        dims = ModelDims(d_x=g.feature_dim, k_pe=config.k_pe,
                         hidden=config.hidden, d_f=config.d_f,
                         s=config.latent_dim)
        params = init_params(dims, seed=seed, tied=config.tie_maps)
    sf, sim = _materialized_factors(g, pe, params, args.max_nodes)
    rows, cols, solution = bicluster(sim, k=config.num_clusters, seed=seed,
                                     restarts=config.kmeans_restarts)
    d1 = np.maximum(sim.sum(axis=1), EPS_DEG)
    d2 = np.maximum(sim.sum(axis=0), EPS_DEG)
    residuals = {
        "stationarity": stationarity_residual(sf, solution, 1.0 / d1, 1.0 / d2),
        "eigen_form": eigen_form_check(sim, solution),
    }
    report = {"residuals": residuals}
    if g.labels is not None:
        report["row_nmi"] = nmi(rows, g.labels)
        report["col_nmi"] = nmi(cols, g.labels)
        print(f"row NMI {report['row_nmi']:.4f}  col NMI {report['col_nmi']:.4f}")
    print(f"stationarity residual {residuals['stationarity']:.3e}  "
          f"eigen-form residual {residuals['eigen_form']:.3e}")
    _write_assignment(out_dir / "row_clusters.csv", rows)
    _write_assignment(out_dir / "col_clusters.csv", cols)
    (out_dir / "oracle.json").write_text(json.dumps(report, indent=1),
                                         encoding="utf-8")
    return EXIT_OK


def run_benchmark(sizes, epochs: int = 30, seed: int = 0,
                  avg_degree: float = 8.0, k_pe: int = 8,
                  measure_memory: bool = True) -> dict:
    """Time fixed-epoch training at each size; optionally record peak memory.

    Graph generation and positional encodings are preprocessing and stay
    outside the timed window. Memory peaks come from a short 3-epoch run
    under tracemalloc (the training loop reaches steady state immediately).
    """
    rows = []
    for n in sizes:
        g = random_sparse_graph(n, avg_degree=avg_degree, seed=seed)
        config = TrainConfig(num_clusters=2, epochs=epochs, eval_every=0,
                             seed=seed, k_pe=k_pe, precision="float32")
        pe = random_walk_pe(g, k_pe)
        started = time.perf_counter()
        train(g, config, pe=pe)
        seconds = time.perf_counter() - started
        row = {"n": int(n), "seconds": seconds}
        if measure_memory:
            short = TrainConfig(**{**asdict(config), "epochs": 3})
            tracemalloc.start()
            train(g, short, pe=pe)
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
            row["peak_mb"] = peak / 1e6
        rows.append(row)
    ns = np.array([row["n"] for row in rows], dtype=np.float64)
    secs = np.array([row["seconds"] for row in rows])
    if len(rows) >= 2:
        slope, intercept = np.polyfit(ns, secs, 1)
        predicted = slope * ns + intercept
        ss_res = float(np.sum((secs - predicted) ** 2))
        ss_tot = float(np.sum((secs - secs.mean()) ** 2))
        r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        r_squared = 1.0
    return {"rows": rows, "r_squared": r_squared}


def cmd_benchmark(args) -> int:
    sizes = [int(x) for x in args.sizes.split(",")]
    seed = _resolve_seed(args.seed)
    result = run_benchmark(sizes, epochs=args.epochs, seed=seed,
                           measure_memory=args.memory)
    out_path = Path(args.output)
    with open(out_path, "w", encoding="utf-8") as handle:
        header = "n,seconds" + (",peak_mb" if args.memory else "")
        handle.write(header + "\n")
        for row in result["rows"]:
            line = f"{row['n']},{row['seconds']:.4f}"
            if args.memory:
                line += f",{row['peak_mb']:.2f}"
            handle.write(line + "\n")
        handle.write(f"# linear_fit_r_squared = {result['r_squared']:.6f}\n")
    print(f"linear-fit R^2 = {result['r_squared']:.4f}")
    for row in result["rows"]:
        extra = f"  peak {row['peak_mb']:.1f} MB" if args.memory else ""
        print(f"n={row['n']}: {row['seconds']:.2f}s{extra}")
    return EXIT_OK


def cmd_export_similarity(args) -> int:
    doc = load_config(args.config)
    g = _load_dataset(doc)
    config = _train_config(doc, g, {})
    pe = random_walk_pe(g, config.k_pe)
    params = load_checkpoint(args.checkpoint)
    _, sim = _materialized_factors(g, pe, params, args.max_nodes)
    if g.labels is not None:
        order = np.argsort(g.labels, kind="stable")
    else:
        warnings.warn("no labels available; exporting in node order")
        order = np.arange(g.num_nodes)
    sorted_sim = sim[np.ix_(order, order)]
    asymmetry = float(np.max(np.abs(sim - sim.T)))
    print(f"max |S - S^T| = {asymmetry:.3e}")
    out_path = Path(args.output)
    with open(out_path, "w", encoding="utf-8") as handle:
        for row in sorted_sim:
            handle.write(",".join(repr(float(x)) for x in row) + "\n")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hencler",
        description="Node clustering on heterophilous graphs via a learned "
                    "asymmetric similarity")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train and write run artifacts")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--repeats", type=int, default=1)
    p_train.add_argument("--parallel", action="store_true")
    p_train.add_argument("--loss", choices=["all", "wksvd", "reconstr"],
                         default=None)
    p_train.add_argument("--tie-maps", action="store_true", dest="tie_maps")
    p_train.add_argument("--output-dir", default=None)
    p_train.set_defaults(func=cmd_train)

    p_oracle = sub.add_parser("oracle",
                              help="exact dual solve on the materialized "
                                   "similarity")
    p_oracle.add_argument("--config")
    p_oracle.add_argument("--checkpoint", default=None)
    p_oracle.add_argument("--synthetic", choices=["blocks"], default=None)
    p_oracle.add_argument("--block-sizes", default="10,10,10")
    p_oracle.add_argument("--noise", type=float, default=0.01)
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--max-nodes", type=int, default=DENSE_GUARD_NODES)
    p_oracle.add_argument("--output-dir", default=None)
    p_oracle.set_defaults(func=cmd_oracle)

    p_bench = sub.add_parser("benchmark", help="time fixed-epoch training "
                                               "across graph sizes")
    p_bench.add_argument("--sizes", default="1000,2000,4000,8000")
    p_bench.add_argument("--epochs", type=int, default=30)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--memory", action="store_true")
    p_bench.add_argument("--output", default="benchmark.csv")
    p_bench.set_defaults(func=cmd_benchmark)

    p_export = sub.add_parser("export-similarity",
                              help="materialize S as label-sorted CSV")
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--config", required=True)
    p_export.add_argument("--max-nodes", type=int, default=DENSE_GUARD_NODES)
    p_export.add_argument("--output", default="similarity.csv")
    p_export.set_defaults(func=cmd_export_similarity)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardExceeded as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except Exception as exc:  # runtime/numeric failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
