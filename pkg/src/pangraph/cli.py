"""Command-line surface.

Subcommands: generate-pointpattern, train, evaluate, centrality,
met-inspect, check-grad. Exit codes: 0 success, 1 runtime failure,
2 usage or configuration error. PAN_NUM_THREADS caps worker parallelism
where a command supports it (dataset generation).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import centrality as ct
from .data_io import DataError, Dataset, SplitSpec, load_dataset, save_dataset, split_dataset
from .graph import CsrGraph, GraphError, graph_from_edges
from .layers import LayerError, PoolVariant
from .met import NormMode, SeriesWeights, met_matrix
from .pointpattern import (ClassSpec, FeatureMode, PatternKind,
                           PointPatternError, ThresholdGraphConfig,
                           dataset_summary, generate_dataset)
from .trainer import (ConfigError, ModelConfig, TaskKind, TrainerError,
                      apply_override, build_model, evaluate as eval_model,
                      gradient_check, load_checkpoint, load_config_file,
                      model_config_from_dict, run_experiment)

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("PAN_NUM_THREADS", "").strip()
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def _parse_node_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError as e:
        raise ConfigError(f"--nodes expects MIN..MAX, got {text!r}") from e


def _load_graph_ref(ref: str) -> tuple[Dataset, int, CsrGraph]:
    """Resolve a DATASET:INDEX reference."""
    path, sep, idx_text = ref.rpartition(":")
    if not sep or not path:
        raise ConfigError(f"--graph-from expects PATH:INDEX, got {ref!r}")
    try:
        index = int(idx_text)
    except ValueError as e:
        raise ConfigError(f"bad graph index {idx_text!r}") from e
    if not Path(path).is_file():
        raise ConfigError(f"dataset not found: {path}")
    ds = load_dataset(path)
    if not 0 <= index < len(ds.graphs):
        raise ConfigError(f"graph index {index} outside 0..{len(ds.graphs) - 1}")
    return ds, index, ds.graphs[index]


def cmd_generate(args) -> int:
    kinds = [PatternKind.parse(tok) for tok in args.classes.split(",") if tok]
    if not kinds:
        raise ConfigError("--classes must name at least one pattern kind")
    if PatternKind.RSA in kinds and args.phi_rsa == 0.0:
        sys.stderr.write("warning: --phi-rsa 0 makes the RSA class identical "
                         "to Poisson\n")
    specs = []
    for kind in kinds:
        if kind is PatternKind.HD:
            specs.append(ClassSpec.hd(args.phi_hd))
        elif kind is PatternKind.POISSON:
            specs.append(ClassSpec.poisson())
        else:
            specs.append(ClassSpec.rsa(args.phi_rsa))
    node_range = _parse_node_range(args.nodes)
    cfg = ThresholdGraphConfig(threshold_factor=args.threshold_factor,
                               feature_mode=FeatureMode(args.feature_mode))
    ds = generate_dataset(specs, args.per_class, node_range, args.seed,
                          graph_cfg=cfg, mc_sweeps=args.sweeps,
                          num_workers=_workers(args.per_class * len(specs)))
    save_dataset(ds, args.out)
    stats = dataset_summary(ds)
    print(json.dumps({"out": str(args.out), **stats}))
    return 0


def cmd_train(args) -> int:
    config = load_config_file(args.config)
    for item in args.override or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--override expects key=value, got {item!r}")
        apply_override(config, key, value)
    if args.seed is not None:
        config.setdefault("optim", {})["seed"] = args.seed
    if args.out:
        config.setdefault("output", {})["dir"] = args.out
    report = run_experiment(config)
    print(json.dumps({"test_metric": report.test_metric,
                      "best_epoch": report.best_epoch,
                      "epochs": len(report.train_loss),
                      "output": config.get("output", {}).get("dir")}))
    return 0


def _split_indices(ds: Dataset, split: str, spec: SplitSpec) -> np.ndarray:
    train, val, test = split_dataset(ds, spec)
    table = {"train": train, "val": val, "test": test,
             "all": np.arange(len(ds.graphs))}
    if split not in table:
        raise ConfigError(f"unknown split {split!r}")
    return table[split]


def cmd_evaluate(args) -> int:
    if not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    if not Path(args.dataset).is_file():
        raise ConfigError(f"dataset not found: {args.dataset}")
    model = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    if ds.graphs and ds.feature_dim != model.feature_dim:
        raise ConfigError(
            f"checkpoint expects feature dim {model.feature_dim}, dataset "
            f"has {ds.feature_dim}")
    extra = getattr(model, "checkpoint_extra", {})
    split_info = extra.get("split", {})
    spec = SplitSpec(tuple(split_info.get("fractions", (0.8, 0.1, 0.1))),
                     int(split_info.get("seed", 0)))
    indices = _split_indices(ds, args.split, spec)
    metric = eval_model(model, ds, indices)
    task = model.cfg.task.value
    if args.json:
        print(json.dumps({"metric": metric, "n": int(len(indices)),
                          "task": task, "split": args.split}))
    else:
        name = "accuracy" if task == "classify" else "mae"
        print(f"{args.split} {name}: {metric:.6f} ({len(indices)} graphs)")
    return 0


def _hybrid_scores(g: CsrGraph, model) -> np.ndarray:
    """Hybrid pooling score of the first block, from a trained checkpoint."""
    cfg = model.cfg
    block = cfg.blocks[0]
    if block.pool is None or not block.pool.uses_projection:
        raise ConfigError("checkpoint's first block has no projection pooling")
    theta = model.params.get("theta" if cfg.share_theta else "conv0.theta")
    met = met_matrix(g.adj, SeriesWeights(theta), cfg.mode)
    x = met.m @ g.features @ model.params["conv0.W"]
    if len(cfg.blocks) > 1:
        x = np.maximum(x, 0.0)
    score = x @ model.params["pool0.p"]
    if block.pool.uses_beta:
        score = score + model.params["pool0.beta"][0] * met.diag
    return score


def cmd_centrality(args) -> int:
    ds, index, g = _load_graph_ref(args.graph_from)
    measures = [ct.Measure.parse(tok) for tok in args.measures.split(",") if tok]
    if not measures:
        raise ConfigError("--measures must name at least one measure")
    weights = (SeriesWeights.from_weights([float(w) for w in args.weights.split(",")])
               if args.weights else SeriesWeights.uniform(args.cutoff))
    mode = NormMode.parse(args.mode)
    model = None
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    out: dict = {
        "graph": {"dataset": args.graph_from, "nodes": g.node_count},
        "top_frac": args.top_frac,
        "positions": (ds.positions[index].tolist()
                      if ds.positions is not None else None),
        "measures": {},
    }
    for measure in measures:
        if measure is ct.Measure.DEGREE:
            values = ct.degree_centrality(g)
        elif measure is ct.Measure.EIGENVECTOR:
            values = ct.eigenvector_centrality(g)
        elif measure is ct.Measure.SUBGRAPH_SERIES:
            values = ct.subgraph_centrality_series(g)
        elif measure is ct.Measure.SUBGRAPH_EXACT:
            values = ct.subgraph_centrality_exact(g)
        elif measure is ct.Measure.MET_DIAG:
            values = met_matrix(g.adj, weights, mode).diag
        elif measure is ct.Measure.MET_DIAG_UNNORM:
            values = met_matrix(g.adj, weights, mode).diag_unnorm
        else:
            if model is None:
                raise ConfigError("measure 'hybrid' requires --checkpoint")
            values = _hybrid_scores(g, model)
        selected = ct.top_fraction(values, args.top_frac)
        out["measures"][measure.value] = {
            "values": [float(v) for v in values],
            "selected": [int(i) for i in selected],
        }
    text = json.dumps(out)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_met_inspect(args) -> int:
    _, _, g = _load_graph_ref(args.graph_from)
    if args.weights:
        w = [float(tok) for tok in args.weights.split(",")]
        if any(v <= 0 for v in w):
            raise ConfigError("--weights must all be positive")
        if len(w) != args.cutoff + 1:
            raise ConfigError(f"--weights needs L+1={args.cutoff + 1} values, got {len(w)}")
        weights = SeriesWeights.from_weights(w)
    else:
        weights = SeriesWeights.uniform(args.cutoff)
    mode = NormMode.parse(args.mode)
    met = met_matrix(g.adj, weights, mode)
    row_sums = met.m.sum(axis=1)
    if args.json:
        print(json.dumps({
            "mode": mode.value, "cutoff": met.cutoff,
            "z": met.z.tolist(), "diag": met.diag.tolist(),
            "row_sums": row_sums.tolist(),
            "matrix": met.m.tolist() if g.node_count <= 12 else None,
        }))
        return 0
    with np.printoptions(precision=6, suppress=True):
        print(f"mode={mode.value} cutoff={met.cutoff} nodes={g.node_count}")
        print(f"Z: {met.z}")
        print(f"diag(M): {met.diag}")
        print(f"row sums: {row_sums}")
        if g.node_count <= 12:
            print("M:")
            print(met.m)
    return 0


_DEFAULT_CHECK_MODEL = {
    "blocks": [{"out_dim": 6, "cutoff": 2, "pool": "hybrid", "ratio": 0.6}],
    "mode": "sym",
    "readout": "mean",
    "head_dims": [],
    "task": "classify",
    "num_classes": 3,
}


def cmd_check_grad(args) -> int:
    if args.config:
        config = load_config_file(args.config)
        model_cfg = model_config_from_dict(config.get("model", _DEFAULT_CHECK_MODEL))
    else:
        model_cfg = model_config_from_dict(_DEFAULT_CHECK_MODEL)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    n, d = 10, args.feature_dim
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < 0.4]
    edges += [(i, i + 1) for i in range(n - 1)]  # keep it connected
    g1 = graph_from_edges(sorted(set(edges)), n, rng.standard_normal((n, d)), label=0)
    g2 = graph_from_edges([(0, 1), (1, 2), (2, 3)], 4,
                          rng.standard_normal((4, d)), label=1)
    model = build_model(model_cfg, d, rng)
    errors = gradient_check(model, [g1, g2], [0, 1], eps=args.eps)
    worst = max(errors.values())
    for name in sorted(errors):
        print(f"{name}: {errors[name]:.3e}")
    print(f"max: {worst:.3e} (threshold 1e-4)")
    return 0 if worst < 1e-4 else RUNTIME_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pangraph",
        description="Path-integral graph convolution/pooling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-pointpattern",
                       help="simulate HD/Poisson/RSA patterns into a dataset")
    p.add_argument("--classes", default="hd,poisson,rsa")
    p.add_argument("--phi-rsa", type=float, default=0.3)
    p.add_argument("--phi-hd", type=float, default=0.5)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--nodes", required=True, help="MIN..MAX node count range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweeps", type=int, default=10000)
    p.add_argument("--threshold-factor", type=float, default=4.0)
    p.add_argument("--feature-mode", default="scalar_degree",
                   choices=[m.value for m in FeatureMode])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run a training experiment from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test",
                   choices=["train", "val", "test", "all"])
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("centrality",
                       help="emit node-importance values and top-fraction sets")
    p.add_argument("--graph-from", required=True, metavar="DATASET:INDEX")
    p.add_argument("--measures", default="dc,ec,sc")
    p.add_argument("--top-frac", type=float, default=0.2)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--cutoff", type=int, default=4)
    p.add_argument("--weights", default=None, help="w0,...,wL (default uniform)")
    p.add_argument("--mode", default="sym")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_centrality)

    p = sub.add_parser("met-inspect", help="print Z, diag(M), and row sums")
    p.add_argument("--graph-from", required=True, metavar="DATASET:INDEX")
    p.add_argument("--L", dest="cutoff", type=int, default=4)
    p.add_argument("--weights", default=None, help="w0,...,wL (default uniform)")
    p.add_argument("--mode", default="sym",
                   choices=["sym", "rw", "sender", "unnorm"])
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_met_inspect)

    p = sub.add_parser("check-grad",
                       help="finite-difference check of every parameter group")
    p.add_argument("--config", default=None)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-dim", type=int, default=3)
    p.set_defaults(func=cmd_check_grad)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ct.CentralityError, LayerError) as e:
        sys.stderr.write(json.dumps({"error": str(e), "kind": "config"}) + "\n")
        return USAGE_ERROR
    except (TrainerError, DataError, PointPatternError, GraphError,
            OSError, ValueError) as e:
        sys.stderr.write(json.dumps({"error": str(e), "kind": "runtime"}) + "\n")
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
