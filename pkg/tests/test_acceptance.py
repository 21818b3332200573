"""Acceptance gate: one test per release criterion.

Every test prints a single [PASS]/[FAIL] line (collected into the terminal
summary by conftest) so the gate can be audited at a glance. The two
simulation-heavy criteria (7 and 8) run reduced-scale protocols with widened
tolerances and explicit wall-clock budgets.
"""

import contextlib
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from pangraph import (
    Dataset,
    FeatureMode,
    NormMode,
    PanConvLayer,
    PanPoolLayer,
    PoolVariant,
    SeriesWeights,
    ThresholdGraphConfig,
    build_model,
    degree_centrality,
    eigenvector_centrality,
    generate_dataset,
    gradient_check,
    graph_from_edges,
    hd_pattern,
    load_dataset,
    met_matrix,
    min_periodic_distance,
    panconv_forward,
    parse_tu_dataset,
    path_count,
    pool_score,
    renormalized_power_diag,
    rsa_pattern,
    run_experiment,
    save_dataset,
    standard_classes,
    subgraph_centrality_exact,
    subgraph_centrality_series,
)
from pangraph.cli import main as cli_main
from pangraph.pointpattern import dataset_summary
from pangraph.trainer import ModelConfig, model_config_from_dict

from conftest import ACCEPTANCE_LINES, dfs_walk_count, gcn_reference, random_graph
from test_data_io import assert_datasets_equal, write_tu

NORMALIZED_MODES = (NormMode.SYMMETRIC, NormMode.RANDOM_WALK, NormMode.SENDER)


def _emit(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


@contextlib.contextmanager
def criterion(number: int, desc: str):
    info = {}
    try:
        yield info
    except BaseException:
        note = f" ({info['note']})" if "note" in info else ""
        _emit(f"[FAIL] criterion {number}: {desc}{note}")
        raise
    note = f" ({info['note']})" if "note" in info else ""
    _emit(f"[PASS] criterion {number}: {desc}{note}")


def test_criterion_01_gcn_equivalence():
    with criterion(1, "PANConv(L=1, unit weights, sym) equals the GCN layer "
                      "within 1e-12 on 100 random graphs") as info:
        start = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(101))
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(2, 51))
            g = random_graph(rng, n, 0.2, features=3)
            w = rng.standard_normal((3, 4))
            layer = PanConvLayer(weights=SeriesWeights.from_weights([1.0, 1.0]),
                                 w_dense=w, mode=NormMode.SYMMETRIC)
            out, _ = panconv_forward(g.features, g, layer)
            ref = gcn_reference(g.adj.to_dense(), g.features, w)
            worst = max(worst, float(np.abs(out - ref).max()))
        elapsed = time.perf_counter() - start
        info["note"] = f"max err {worst:.2e}, {elapsed:.2f}s"
        assert worst < 1e-12
        assert elapsed < 5.0


def test_criterion_02_end_to_end_gradients():
    with criterion(2, "finite-difference gradcheck < 1e-4 for every "
                      "parameter, all five pooling variants") as info:
        start = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(202))
        edges = [(i, i + 1) for i in range(9)]
        edges += [(int(a), int(b)) for a, b in
                  rng.integers(0, 10, size=(8, 2)) if a != b]
        g = graph_from_edges(sorted(set(tuple(sorted(e)) for e in edges)), 10,
                             rng.standard_normal((10, 3)), label=1)
        worst = 0.0
        for variant in ("hybrid", "um", "xum", "m", "xhm"):
            cfg = model_config_from_dict({
                "blocks": [{"out_dim": 5, "cutoff": 2, "pool": variant,
                            "ratio": 0.5}],
                "head_dims": [4], "num_classes": 2})
            model = build_model(cfg, 3, rng)
            errors = gradient_check(model, [g], [1], eps=1e-5)
            worst = max(worst, max(errors.values()))
        elapsed = time.perf_counter() - start
        info["note"] = f"max rel err {worst:.2e}, {elapsed:.2f}s"
        assert worst < 1e-4
        assert elapsed < 30.0


def test_criterion_03_met_invariants():
    with criterion(3, "MET invariants (row sums, symmetry, shared diagonal, "
                      "L=0 identity, rescale invariance) at 1e-12 on 100 "
                      "graphs") as info:
        rng = np.random.Generator(np.random.PCG64(303))
        worst = 0.0
        for _ in range(100):
            g = random_graph(rng, int(rng.integers(2, 30)), 0.3)
            cutoff = int(rng.integers(1, 5))
            w = np.exp(rng.normal(0.0, 0.5, size=cutoff + 1))
            weights = SeriesWeights.from_weights(w)
            mets = {mode: met_matrix(g.adj, weights, mode)
                    for mode in NORMALIZED_MODES}
            rw = mets[NormMode.RANDOM_WALK].m
            worst = max(worst, float(np.abs(rw.sum(axis=1) - 1.0).max()))
            sym = mets[NormMode.SYMMETRIC].m
            worst = max(worst, float(np.abs(sym - sym.T).max()))
            diags = [mets[mode].diag for mode in NORMALIZED_MODES]
            worst = max(worst, float(np.abs(diags[0] - diags[1]).max()),
                        float(np.abs(diags[0] - diags[2]).max()))
            eye = met_matrix(g.adj, SeriesWeights.from_weights(w[:1]),
                             NormMode.SYMMETRIC).m
            worst = max(worst, float(np.abs(eye - np.eye(g.node_count)).max()))
            rescaled = met_matrix(g.adj, SeriesWeights.from_weights(3.7 * w),
                                  NormMode.SYMMETRIC).m
            worst = max(worst, float(np.abs(rescaled - sym).max()))
        info["note"] = f"max deviation {worst:.2e}"
        assert worst < 1e-12


def test_criterion_04_subgraph_centrality_oracle():
    with criterion(4, "series (K=30) matches dense eigendecomposition within "
                      "1e-8 on 50 graphs; K3 closed form at 1e-9") as info:
        rng = np.random.Generator(np.random.PCG64(404))
        worst = 0.0
        checked = 0
        while checked < 50:
            g = random_graph(rng, int(rng.integers(2, 21)), 0.2)
            lam1 = float(np.linalg.eigvalsh(g.adj.to_dense()).max())
            if lam1 > 6.0:
                continue  # keep the truncation tail below the tolerance
            checked += 1
            diff = np.abs(subgraph_centrality_series(g, 30)
                          - subgraph_centrality_exact(g))
            worst = max(worst, float(diff.max()))
        k3 = graph_from_edges([(0, 1), (1, 2), (0, 2)], 3)
        closed = (math.exp(2.0) + 2.0 * math.exp(-1.0)) / 3.0
        k3_err = float(np.abs(subgraph_centrality_series(k3, 30)
                              - closed).max())
        info["note"] = f"max err {worst:.2e}, K3 err {k3_err:.2e}"
        assert worst < 1e-8
        assert k3_err < 1e-9


def test_criterion_05_centrality_limits():
    with criterion(5, "UM score (L=2) reproduces the degree ordering; "
                      "renormalized diag(A^50) reproduces the squared-Perron "
                      "ordering, 50 graphs each") as info:
        rng = np.random.Generator(np.random.PCG64(505))
        layer = PanPoolLayer(p=np.zeros(0), variant=PoolVariant.UM)
        for _ in range(50):
            g = random_graph(rng, int(rng.integers(4, 25)), 0.35)
            deg = degree_centrality(g)
            met = met_matrix(g.adj, SeriesWeights.uniform(2),
                             NormMode.SYMMETRIC)
            score = pool_score(np.ones((g.node_count, 1)), met, met.z, layer)
            np.testing.assert_array_equal(
                np.sign(score[:, None] - score[None, :]),
                np.sign(deg[:, None] - deg[None, :]))

        checked = 0
        while checked < 50:
            g = random_graph(rng, int(rng.integers(5, 25)), 0.3,
                             connected=True)
            a = g.adj.to_dense()
            if np.trace(a @ a @ a) == 0:
                continue  # non-bipartite graphs only
            v = eigenvector_centrality(g)
            target = v * v
            gaps = np.diff(np.sort(target))
            if gaps.min() < 1e-6:
                continue  # distinct Perron entries required
            lam = np.sort(np.abs(np.linalg.eigvalsh(a)))
            if (lam[-2] / lam[-1]) ** 50 > 0.1 * gaps.min():
                continue  # n=50 must suffice for ranking convergence
            checked += 1
            diag = renormalized_power_diag(g, 50)
            assert diag.argmax() == target.argmax()
            np.testing.assert_array_equal(np.argsort(diag),
                                          np.argsort(target))
        info["note"] = "orderings identical on all 100 graphs"


def test_criterion_06_walk_count_oracle():
    with criterion(6, "path_count equals brute-force DFS enumeration for all "
                      "(i, j, n<=5) on 20 graphs") as info:
        rng = np.random.Generator(np.random.PCG64(606))
        checks = 0
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(2, 9)), 0.4)
            dense = g.adj.to_dense()
            for n in range(6):
                for i in range(g.node_count):
                    for j in range(g.node_count):
                        assert path_count(g.adj, i, j, n) == dfs_walk_count(
                            dense, i, j, n)
                        checks += 1
        info["note"] = f"{checks} walk counts"


def test_criterion_07_point_pattern_generators():
    with criterion(7, "zero hard-core violations (100 HD + 100 RSA); "
                      "phi=0.3 corpus stats within 8% of 478 nodes / 3265 "
                      "edges on a 300-graph sample") as info:
        start = time.perf_counter()
        rng = np.random.Generator(np.random.PCG64(707))
        violations = 0
        for k in range(100):
            n = int(rng.integers(50, 151))
            pat = rsa_pattern(n, 0.3, rng=rng)
            if min_periodic_distance(pat) < 2.0 * pat.radius - 1e-12:
                violations += 1
        for k in range(100):
            n = int(rng.integers(50, 151))
            pat = hd_pattern(n, 0.5, sweeps=300, rng=rng)
            if min_periodic_distance(pat) < 2.0 * pat.radius - 1e-12:
                violations += 1
        assert violations == 0

        ds = generate_dataset(standard_classes(), 100, (100, 1000), seed=0)
        stats = dataset_summary(ds)
        elapsed = time.perf_counter() - start
        info["note"] = (f"avg nodes {stats['avg_nodes']:.1f}, avg edges "
                        f"{stats['avg_edges']:.1f}, {elapsed:.0f}s")
        assert abs(stats["avg_nodes"] - 478.0) <= 0.08 * 478.0
        assert abs(stats["avg_edges"] - 3265.0) <= 0.08 * 3265.0
        assert elapsed < 600.0


def test_criterion_08_desk_scale_classification(tmp_path):
    with criterion(8, "PAN (3 blocks, L=4, Hybrid) mean test accuracy >= "
                      "0.85 over seeds {0,1,2} and >= the L=1 TopKOnly "
                      "baseline on identical splits") as info:
        start = time.perf_counter()
        cfg = ThresholdGraphConfig(feature_mode=FeatureMode.ONE_HOT_DEGREE,
                                   one_hot_cap=32)
        ds = generate_dataset(standard_classes(0.3), 300, (100, 200), seed=8,
                              graph_cfg=cfg)
        ds_path = tmp_path / "desk.pards"
        save_dataset(ds, ds_path)

        def accuracies(block):
            out = []
            for seed in (0, 1, 2):
                report = run_experiment({
                    "dataset": {"path": str(ds_path)},
                    "model": {"blocks": [dict(block) for _ in range(3)]},
                    "optim": {"epochs": 20, "batch_size": 32, "seed": seed},
                    "split": {"fractions": [0.8, 0.1, 0.1], "seed": seed},
                })
                out.append(report.test_metric)
            return out

        pan = accuracies({"out_dim": 64, "cutoff": 4, "pool": "hybrid",
                          "ratio": 0.5})
        gcn = accuracies({"out_dim": 64, "cutoff": 1, "pool": "topk_only",
                          "ratio": 0.5})
        mean_pan = float(np.mean(pan))
        mean_gcn = float(np.mean(gcn))
        elapsed = time.perf_counter() - start
        info["note"] = (f"PAN mean {mean_pan:.3f} {pan}, baseline mean "
                        f"{mean_gcn:.3f} {gcn}, {elapsed:.0f}s")
        assert mean_pan >= 0.85
        assert mean_pan >= mean_gcn
        assert elapsed < 45 * 60


def _proteins_dir():
    candidates = [os.environ.get("PANGRAPH_TU_DIR", "")]
    here = Path(__file__).resolve().parent.parent
    candidates += [str(here / "data" / "PROTEINS"), str(here / "data")]
    for cand in candidates:
        if cand and (Path(cand) / "PROTEINS_A.txt").is_file():
            return Path(cand)
    return None


def test_criterion_09_proteins_smoke(tmp_path):
    directory = _proteins_dir()
    if directory is None:
        _emit("[SKIP] criterion 9: PROTEINS files not present "
              "(set PANGRAPH_TU_DIR or place them under data/PROTEINS)")
        pytest.skip("PROTEINS dataset not available")
    with criterion(9, "PROTEINS parses to 1113 graphs / 2 classes and a "
                      "5-epoch run beats the majority-class floor") as info:
        ds = parse_tu_dataset(directory, "PROTEINS")
        assert len(ds) == 1113
        assert ds.num_classes == 2
        report = run_experiment({
            "dataset": {"tu_dir": str(directory), "name": "PROTEINS"},
            "model": {"blocks": [
                {"out_dim": 512, "cutoff": 4, "pool": "hybrid", "ratio": 0.5},
                {"out_dim": 256, "cutoff": 4, "pool": "hybrid", "ratio": 0.5},
                {"out_dim": 128, "cutoff": 4, "pool": None}]},
            "optim": {"epochs": 5, "batch_size": 32, "seed": 0},
        })
        info["note"] = f"test accuracy {report.test_metric:.3f}"
        assert np.all(np.isfinite(report.train_loss))
        assert report.test_metric > 0.59


def test_criterion_10_cli_determinism(tmp_path):
    with criterion(10, "identical config+seed reproduces byte-identical "
                       "train metrics and generated datasets") as info:
        graphs = [graph_from_edges([(i, i + 1) for i in range(n - 1)], n,
                                   label=0) for n in range(5, 10)]
        graphs += [graph_from_edges([(i, j) for i in range(n)
                                     for j in range(i + 1, n)], n, label=1)
                   for n in range(5, 10)]
        ds_path = tmp_path / "toy.pards"
        save_dataset(Dataset(graphs=graphs, num_classes=2), ds_path)
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({
            "dataset": {"path": str(ds_path)},
            "model": {"blocks": [{"out_dim": 6, "cutoff": 2,
                                  "pool": "hybrid", "ratio": 0.6}]},
            "optim": {"learning_rate": 0.01, "epochs": 2, "batch_size": 4,
                      "seed": 0},
        }))
        for run in ("run_a", "run_b"):
            code = cli_main(["train", "--config", str(config_path),
                             "--out", str(tmp_path / run)])
            assert code == 0
        metrics_a = (tmp_path / "run_a" / "metrics.csv").read_bytes()
        metrics_b = (tmp_path / "run_b" / "metrics.csv").read_bytes()
        assert metrics_a == metrics_b

        for name in ("gen_a.pards", "gen_b.pards"):
            code = cli_main(["generate-pointpattern", "--per-class", "2",
                             "--nodes", "30..40", "--seed", "7", "--sweeps",
                             "50", "--out", str(tmp_path / name)])
            assert code == 0
        assert ((tmp_path / "gen_a.pards").read_bytes()
                == (tmp_path / "gen_b.pards").read_bytes())
        info["note"] = "metrics.csv and dataset bytes identical"


def test_criterion_11_parser_and_format(tmp_path):
    with criterion(11, "TU fixture parses to the expected graphs; PANDS1 "
                       "round-trip exact; corrupted CRC detected") as info:
        write_tu(tmp_path, "toy", [(1, 2), (2, 1), (2, 3), (3, 2)],
                 (1, 1, 1), (1,))
        tu = parse_tu_dataset(tmp_path, "toy")
        assert len(tu) == 1 and tu.num_classes == 1
        np.testing.assert_array_equal(
            tu.graphs[0].adj.to_dense(), [[0, 1, 0], [1, 0, 1], [0, 1, 0]])

        ds = generate_dataset(standard_classes(), 2, (20, 30), seed=3,
                              mc_sweeps=50)
        path = tmp_path / "round.pards"
        save_dataset(ds, path)
        assert_datasets_equal(ds, load_dataset(path))

        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0x01
        (tmp_path / "bad.pards").write_bytes(bytes(raw))
        from pangraph import DataError
        with pytest.raises(DataError, match="checksum"):
            load_dataset(tmp_path / "bad.pards")
        info["note"] = "6-graph round trip bitwise equal"
