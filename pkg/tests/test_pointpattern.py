import math

import numpy as np
import pytest

from pangraph.pointpattern import (ClassSpec, FeatureMode, PatternKind,
                                   PointPatternError, ThresholdGraphConfig,
                                   derive_seed, generate_dataset, hd_pattern,
                                   metropolis_chain, min_periodic_distance,
                                   pattern_to_graph, poisson_pattern,
                                   radius_for, rsa_pattern, sample_node_count,
                                   simulate, standard_classes,
                                   threshold_radius, PointPattern,
                                   PointPatternConfig)


def test_radius_formula_hand_value():
    assert radius_for(100, 0.3) == pytest.approx(0.0309019, abs=1e-7)
    assert radius_for(100, 0.3) == pytest.approx(math.sqrt(0.3 / (100 * math.pi)))
    assert radius_for(50, 0.0) == 0.0


def test_threshold_radius_is_phi_half_radius():
    n = 123
    assert threshold_radius(n) == pytest.approx(4 * math.sqrt(0.5 / (n * math.pi)))
    assert threshold_radius(n, factor=2.0) == pytest.approx(
        2 * math.sqrt(0.5 / (n * math.pi)))


def test_poisson_points_in_box():
    p = poisson_pattern(500, rng=0)
    assert p.points.shape == (500, 2)
    assert p.points.min() >= 0.0 and p.points.max() < 1.0
    assert p.kind is PatternKind.POISSON


def test_poisson_nearest_neighbor_statistics():
    # For intensity lambda, the mean nearest-neighbor distance on the torus
    # is 1 / (2 sqrt(lambda)); check a generous 5-sigma band.
    n = 2000
    p = poisson_pattern(n, rng=123)
    from scipy.spatial import cKDTree
    tree = cKDTree(p.points, boxsize=1.0)
    d, _ = tree.query(p.points, k=2)
    observed = d[:, 1].mean()
    expect = 1.0 / (2.0 * math.sqrt(n))
    sigma = 0.5 * expect / math.sqrt(n)  # rough scale of the sample error
    assert abs(observed - expect) < 5 * sigma


def test_rsa_respects_hard_core():
    for seed in range(5):
        pat = rsa_pattern(150, 0.3, rng=seed)
        assert min_periodic_distance(pat) >= 2 * radius_for(150, 0.3) - 1e-12


def test_rsa_zero_phi_degenerates_to_uniform():
    pat = rsa_pattern(80, 0.0, rng=4)
    assert pat.n == 80
    assert pat.radius == 0.0


def test_rsa_infeasible_density_raises():
    with pytest.raises(PointPatternError):
        rsa_pattern(200, 0.58, rng=0, max_attempts=200_000)


def test_hd_respects_hard_core_at_half_packing():
    pat = hd_pattern(200, 0.5, sweeps=500, rng=7)
    assert min_periodic_distance(pat) >= 2 * radius_for(200, 0.5) - 1e-12
    assert pat.kind is PatternKind.HD


def test_hd_acceptance_rate_in_tuning_band():
    start = rsa_pattern(200, 0.5, rng=11)
    moved, rate = metropolis_chain(start, sweeps=400,
                                   displacement=0.25 * 2 * radius_for(200, 0.5),
                                   seed=99)
    assert 0.2 < rate < 0.9
    assert min_periodic_distance(moved) >= 2 * radius_for(200, 0.5) - 1e-12


def test_hd_deterministic_for_seed():
    a = hd_pattern(120, 0.5, sweeps=300, rng=5)
    b = hd_pattern(120, 0.5, sweeps=300, rng=5)
    np.testing.assert_array_equal(a.points, b.points)


def test_simulate_dispatches_all_kinds():
    for kind, phi in ((PatternKind.POISSON, 0.0), (PatternKind.RSA, 0.2),
                      (PatternKind.HD, 0.5)):
        cfg = PointPatternConfig(kind=kind, n_points=60, phi=phi, seed=3,
                                 mc_sweeps=50)
        pat = simulate(cfg)
        assert pat.kind is kind and pat.n == 60


def _pair_plus_fillers(p0, p1):
    # The cutoff scales with point count, so pad the pair of interest up to
    # N=100 with a grid of fillers; assertions only look at edge (0, 1).
    xs = np.linspace(0.05, 0.95, 10)
    grid = np.stack(np.meshgrid(xs, xs), axis=-1).reshape(-1, 2)[:98]
    pts = np.vstack([[p0, p1], grid])
    return PointPattern(points=pts, box=1.0, radius=0.0,
                        kind=PatternKind.POISSON)


def test_boundary_pair_not_connected():
    # Plain distance between these two is 0.98, far above the N=100 cutoff,
    # even though the periodic distance 0.02 is well inside it.
    pat = _pair_plus_fillers((0.01, 0.5), (0.99, 0.5))
    cut = threshold_radius(100)
    assert 0.02 < cut < 0.98
    dense = pattern_to_graph(pat, ThresholdGraphConfig()).adj.to_dense()
    assert dense[0, 1] == 0 and dense[1, 0] == 0


def test_close_interior_pair_connected():
    # Same 0.02 separation as the boundary pair, but away from the walls.
    pat = _pair_plus_fillers((0.49, 0.5), (0.51, 0.5))
    dense = pattern_to_graph(pat, ThresholdGraphConfig()).adj.to_dense()
    assert dense[0, 1] == 1 and dense[1, 0] == 1


def test_pattern_to_graph_strict_threshold():
    # Pairs a hair inside the cutoff connect, a hair outside do not.
    cut = threshold_radius(100)
    for scale, want in ((1 - 1e-9, 1), (1 + 1e-9, 0)):
        pat = _pair_plus_fillers((0.2, 0.5), (0.2 + cut * scale, 0.5))
        dense = pattern_to_graph(pat, ThresholdGraphConfig()).adj.to_dense()
        assert dense[0, 1] == want


def test_scalar_degree_features():
    pat = poisson_pattern(50, rng=6)
    g = pattern_to_graph(pat, ThresholdGraphConfig(), label=2)
    assert g.features.shape == (50, 1)
    np.testing.assert_array_equal(g.features[:, 0], g.adj.row_degrees())
    assert g.label == 2


def test_one_hot_degree_features_capped():
    pat = poisson_pattern(60, rng=8)
    cfg = ThresholdGraphConfig(feature_mode=FeatureMode.ONE_HOT_DEGREE,
                               one_hot_cap=5)
    g = pattern_to_graph(pat, cfg)
    assert g.features.shape == (60, 6)
    np.testing.assert_allclose(g.features.sum(axis=1), 1.0)
    hot = g.features.argmax(axis=1)
    np.testing.assert_array_equal(hot, np.minimum(g.adj.row_degrees(), 5))


def test_derive_seed_distinct_and_stable():
    seeds = {derive_seed(0, label, k) for label in range(3) for k in range(100)}
    assert len(seeds) == 300
    assert derive_seed(42, 1, 2) == derive_seed(42, 1, 2)
    assert derive_seed(42, 1, 2) != derive_seed(42, 2, 1)


def test_sample_node_count_bounds_and_skew():
    counts = [sample_node_count(u, (100, 1000))
              for u in np.linspace(0, 1, 4001)]
    assert min(counts) >= 100 and max(counts) <= 1000
    mean = np.mean(counts)
    assert 440 < mean < 505  # skewed well below the uniform mean of 550
    assert sample_node_count(0.0, (100, 1000)) == 100


def test_generate_dataset_labels_and_classes():
    ds = generate_dataset(standard_classes(0.3), 2, (20, 40), seed=1,
                          mc_sweeps=50)
    assert len(ds.graphs) == 6
    assert ds.num_classes == 3
    assert [g.label for g in ds.graphs] == [0, 0, 1, 1, 2, 2]
    assert ds.positions is not None and len(ds.positions) == 6
    for g, pos in zip(ds.graphs, ds.positions):
        assert pos.shape == (g.node_count, 2)


def test_generate_dataset_worker_invariance():
    classes = (ClassSpec.poisson(), ClassSpec.rsa(0.25))
    a = generate_dataset(classes, 3, (20, 40), seed=5, mc_sweeps=50,
                         num_workers=1)
    b = generate_dataset(classes, 3, (20, 40), seed=5, mc_sweeps=50,
                         num_workers=4)
    for ga, gb in zip(a.graphs, b.graphs):
        np.testing.assert_array_equal(ga.features, gb.features)
        np.testing.assert_array_equal(ga.adj.col_idx, gb.adj.col_idx)
    for pa, pb in zip(a.positions, b.positions):
        np.testing.assert_array_equal(pa, pb)


def test_generate_dataset_validates_inputs():
    with pytest.raises(PointPatternError):
        generate_dataset(standard_classes(), 0, (10, 20), seed=0)
    with pytest.raises(PointPatternError):
        generate_dataset(standard_classes(), 1, (20, 10), seed=0)
