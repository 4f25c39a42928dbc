import logging

import numpy as np
import pytest
from scipy import linalg, stats

from oracles import blocks_bruteforce, edges_bruteforce
from spatial_ordinal.dgp import (
    DgpSpec,
    apply_transform,
    build_weight_matrix,
    make_rng,
    sample_iid_field,
    sample_points_uniform,
    sar_sample,
    sar_solve,
    transform_name,
)
from spatial_ordinal.errors import InvalidInputError
from spatial_ordinal.geometry import PointCloud, SpatialGraph, bfs_distances
from spatial_ordinal.wald import Geometry, run_test


def test_points_deterministic():
    a = sample_points_uniform(50, 3)
    assert np.array_equal(a, sample_points_uniform(50, 3))
    assert not np.array_equal(a[0], sample_points_uniform(50, 4)[0])
    assert a.shape == (50, 2) and a.min() >= 0 and a.max() < 1


def test_points_mean():
    pts = sample_points_uniform(10_000, 11)
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.02)


def test_points_validation():
    with pytest.raises(InvalidInputError):
        sample_points_uniform(0)


def test_rng_streams_are_keyed():
    a = make_rng(5, 1, 2).random(4)
    assert np.array_equal(a, make_rng(5, 1, 2).random(4))
    assert not np.array_equal(a, make_rng(5, 2, 1).random(4))
    assert isinstance(make_rng(5).bit_generator, np.random.Philox)
    g = np.random.default_rng(0)
    assert make_rng(g) is g


def test_weight_matrix_collinear():
    W = build_weight_matrix(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), 1).toarray()
    assert W[1].tolist() == [0.5, 0.0, 0.5]
    assert W[0].tolist() == [0.0, 1.0, 0.0]


def test_weight_matrix_row_stochastic(rng):
    pts = rng.random((300, 2))
    for k in (1, 2, 3):
        W = build_weight_matrix(pts, k)
        assert np.max(np.abs(np.asarray(W.sum(axis=1)).ravel() - 1)) < 1e-12
        assert np.all(W.diagonal() == 0)
        assert abs(W).sum(axis=1).max() == pytest.approx(1.0)


def test_weight_matrix_support_matches_bruteforce(rng):
    pts = rng.random((60, 2))
    W = build_weight_matrix(pts, 3).tocoo()
    support = {(min(i, j), max(i, j)) for i, j in zip(W.row, W.col)}
    assert support == edges_bruteforce(blocks_bruteforce(pts, 4))


def test_weight_matrix_validation(rng):
    with pytest.raises(InvalidInputError):
        build_weight_matrix(rng.random((3, 2)), 3)


def test_sar_rho_zero_is_noise():
    W = build_weight_matrix(sample_points_uniform(40, 1), 3)
    eps = make_rng(9).standard_normal(40)
    assert np.array_equal(sar_solve(W, 0.0, eps), eps)
    assert np.array_equal(sar_sample(W, 0.0, 9), eps)


@pytest.mark.parametrize("rho", [-0.9, 0.3, 0.8, 0.95])
def test_sar_matches_dense_solve(rho):
    n = 200
    W = build_weight_matrix(sample_points_uniform(n, 2), 3)
    eps = make_rng(4).standard_normal(n)
    x = sar_solve(W, rho, eps)
    dense = linalg.solve(np.eye(n) - rho * W.toarray(), eps)
    assert np.max(np.abs(x - dense)) < 1e-9
    assert np.max(np.abs(x - rho * (W @ x) - eps)) < 1e-9


def test_sar_validation():
    W = build_weight_matrix(sample_points_uniform(10, 1), 2)
    for rho in (1.0, -1.0, 1.5):
        with pytest.raises(InvalidInputError):
            sar_sample(W, rho)
    with pytest.raises(InvalidInputError):
        DgpSpec(10, rho=1.0)


def test_sar_correlation_decays_with_graph_distance():
    n, reps = 2000, 300
    pts = sample_points_uniform(n, 21)
    W = build_weight_matrix(pts, 3)
    X = np.array([sar_sample(W, 0.8, make_rng(21, r)) for r in range(reps)])
    corr = np.corrcoef(X.T)
    # Hop distances on the weight graph for a sample of sources.
    g = SpatialGraph(n, W.indptr, W.indices)
    by_h = {h: [] for h in range(1, 5)}
    for s in range(0, n, 10):
        d = bfs_distances(g, s, 4).distances
        for h in by_h:
            by_h[h].extend(np.abs(corr[s, d == h]))
    means = [np.mean(by_h[h]) for h in range(1, 5)]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_transforms():
    x = np.array([0.0, np.pi / 2])
    assert np.array_equal(apply_transform(x, "identity"), x)
    assert np.allclose(apply_transform(x, "sin"), [0, 1])
    assert np.allclose(apply_transform([1.0, np.e, -np.e], "log_abs"), [0, 1, 1])
    assert np.allclose(apply_transform([1.0, np.e], "logabs"), [0, 1])
    assert transform_name("log|.|") == "log_abs"
    with pytest.raises(InvalidInputError):
        apply_transform(x, "cube")


def test_log_abs_zero_is_finite(caplog):
    with caplog.at_level(logging.WARNING):
        out = apply_transform([0.0, 1.0], "log_abs")
    assert np.isfinite(out).all()
    assert out[0] == np.log(np.finfo(float).tiny)
    assert "zeros" in caplog.text


def test_iid_field():
    assert np.array_equal(sample_iid_field(20, 1), sample_iid_field(20, 1))
    g = sample_iid_field(100_000, 2)
    assert abs(g.var() - 1) < 0.02
    u = sample_iid_field(1000, 2, "uniform")
    assert u.min() >= 0 and u.max() < 1
    with pytest.raises(InvalidInputError):
        sample_iid_field(10, 1, "cauchy")


@pytest.mark.slow
def test_null_distribution_free():
    """Gaussian and uniform i.i.d. values give the same law of the statistic."""
    n, reps = 300, 2000
    geo = Geometry.build(sample_points_uniform(n, 5), 3)
    out = {}
    for dist in ("gaussian", "uniform"):
        out[dist] = [
            run_test(PointCloud(geo.points, sample_iid_field(n, make_rng(5, i, len(dist)), dist)),
                     3, geometry=geo).statistic
            for i in range(reps)
        ]
    assert stats.ks_2samp(out["gaussian"], out["uniform"]).statistic < 0.05


def test_weight_support_is_symmetric(rng):
    W = build_weight_matrix(rng.random((200, 2)), 2)
    A = (W.toarray() != 0)
    assert np.array_equal(A, A.T)
