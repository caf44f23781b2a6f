import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from softvoronoi import InvalidInputError
from softvoronoi.assign import responsibilities
from softvoronoi.cluster import (
    entropic_objective,
    hard_distortion,
    kmeans,
    kmeans_many,
    kmeans_plusplus_init,
    random_init,
    soft_distortion,
    softrbf_fit,
    softrbf_fit_many,
    softrbf_step,
)
from softvoronoi.geometry import Dataset, optimal_permutation_match, pairwise_sq_distances
from softvoronoi.seeding import make_rng
from softvoronoi.synthdata import KINDS, GenSpec, generate
from oracles import central_difference, fixed_r_loss, min_distortion_over_assignments

col = np.array
MODES = ("softmax", "entmax15")


# -- K-Means ----------------------------------------------------------------

def test_kmeans_single_cluster_mean():
    res = kmeans(col([[0.0], [2.0]]), col([[1.0]]))
    assert res.centroids.tolist() == [[1.0]]
    assert res.iterations_run == 1 and res.converged


def test_kmeans_two_cells():
    res = kmeans(col([[0.0], [1.0], [10.0], [11.0]]), col([[0.0], [10.0]]))
    assert res.centroids.tolist() == [[0.5], [10.5]]
    assert res.labels.tolist() == [0, 0, 1, 1]


def test_kmeans_two_cells_is_best_partition():
    X = col([[0.0], [1.0], [10.0], [11.0]])
    res = kmeans(X, col([[0.0], [10.0]]))
    assert res.distortion_history[-1] == pytest.approx(min_distortion_over_assignments(X, res.centroids))


def test_kmeans_empty_cluster_keeps_centroid():
    X = col([[0.0], [1.0], [2.0]])
    res = kmeans(X, col([[1.0], [100.0]]))
    assert res.centroids[1, 0] == 100.0
    assert res.centroids[0, 0] == 1.0


def test_kmeans_rejects_n_below_k():
    with pytest.raises(InvalidInputError, match="n >= k"):
        kmeans(col([[0.0], [1.0]]), col([[0.0], [1.0], [2.0]]))


def test_kmeans_rejects_bad_arguments():
    X = col([[0.0], [1.0]])
    with pytest.raises(InvalidInputError):
        kmeans(X, col([[0.0]]), T=0)
    with pytest.raises(InvalidInputError):
        kmeans(X, col([[0.0]]), tol=-1.0)
    with pytest.raises(InvalidInputError, match="dimension"):
        kmeans(X, col([[0.0, 1.0]]))


def test_kmeans_respects_iteration_cap():
    X = generate(GenSpec("spiral")).points
    res = kmeans(X, X[:3], T=2)
    assert res.iterations_run == 2 and not res.converged
    assert res.distortion_history.shape == (3,)


@pytest.mark.parametrize("kind", KINDS)
def test_kmeans_distortion_never_increases(kind):
    X = generate(GenSpec(kind, seed=3)).points
    for seed in range(10):
        res = kmeans(X, random_init(X, 3, make_rng(seed)))
        h = res.distortion_history
        assert np.all(np.diff(h) <= 1e-12 * h[:-1])
        assert h[-1] == pytest.approx(hard_distortion(X, res.centroids), rel=1e-12)


def test_kmeans_converged_means_fixed_point():
    X = generate(GenSpec("moons")).points
    res = kmeans(X, random_init(X, 3, make_rng(1)))
    assert res.converged
    D = pairwise_sq_distances(X, res.centroids)
    labels = np.argmin(D, axis=1)
    for j in range(3):
        np.testing.assert_allclose(res.centroids[j], X[labels == j].mean(axis=0), rtol=1e-12, atol=1e-12)


def test_kmeans_many_matches_individual_runs():
    X = generate(GenSpec("circles")).points
    inits = np.stack([random_init(X, 3, make_rng(s)) for s in range(6)])
    for batch_res, mu0 in zip(kmeans_many(X, inits), inits):
        single = kmeans(X, mu0)
        np.testing.assert_array_equal(batch_res.centroids, single.centroids)
        np.testing.assert_array_equal(batch_res.distortion_history, single.distortion_history)
        assert batch_res.iterations_run == single.iterations_run


# -- initialization ---------------------------------------------------------

def test_random_init_draws_distinct_points():
    X = np.arange(20.0).reshape(10, 2)
    mu = random_init(X, 4, make_rng(0))
    assert len({tuple(r) for r in mu}) == 4
    assert all(any((r == x).all() for x in X) for r in mu)


def test_kmeans_plusplus_init_rows_are_data_points():
    X = generate(GenSpec("blobs")).points
    mu = kmeans_plusplus_init(X, 3, make_rng(2))
    assert all(any((r == x).all() for x in X) for r in mu)


# -- objectives -------------------------------------------------------------

def test_hard_distortion_examples():
    assert hard_distortion(col([[0.0], [2.0]]), col([[1.0]])) == 2.0
    X = np.random.default_rng(0).normal(size=(5, 2))
    assert hard_distortion(X, np.vstack([X, [[9.0, 9.0]]])) == 0.0


def test_hard_distortion_matches_enumeration():
    rng = np.random.default_rng(1)
    for n in range(1, 8):
        X, M = rng.normal(size=(n, 2)), rng.normal(size=(3, 2))
        assert hard_distortion(X, M) == pytest.approx(min_distortion_over_assignments(X, M), rel=1e-12)


def test_soft_distortion_examples():
    X, M = col([[0.0], [2.0]]), col([[0.0], [2.0]])
    assert soft_distortion(X, M, np.full((2, 2), 0.5)) == 4.0
    rng = np.random.default_rng(2)
    X, M = rng.normal(size=(9, 2)), rng.normal(size=(3, 2))
    R, _ = responsibilities(pairwise_sq_distances(X, M), 1.0, "hard")
    assert soft_distortion(X, M, R) == hard_distortion(X, M)


def test_soft_distortion_matches_plain_sum():
    rng = np.random.default_rng(3)
    X, M = rng.normal(size=(6, 2)), rng.normal(size=(3, 2))
    R = rng.dirichlet(np.ones(3), size=6)
    assert soft_distortion(X, M, R) == pytest.approx(fixed_r_loss(X, M, R), rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, (7, 2), elements=st.floats(-10, 10)), arrays(np.float64, (3, 2), elements=st.floats(-10, 10)),
       st.integers(0, 2**32 - 1))
def test_soft_distortion_never_below_hard(X, M, seed):
    R = np.random.default_rng(seed).dirichlet(np.ones(3), size=7)
    assert soft_distortion(X, M, R) >= hard_distortion(X, M)


def test_soft_distortion_rejects_bad_R():
    with pytest.raises(InvalidInputError):
        soft_distortion(col([[0.0]]), col([[0.0]]), col([[-1.0]]))
    with pytest.raises(InvalidInputError):
        soft_distortion(col([[0.0]]), col([[0.0]]), np.ones((2, 1)))


def test_entropic_objective_examples():
    rng = np.random.default_rng(4)
    X, M = rng.normal(size=(8, 2)), rng.normal(size=(3, 2))
    R, _ = responsibilities(pairwise_sq_distances(X, M), 1.0, "hard")
    assert entropic_objective(X, M, R, 0.7) == pytest.approx(hard_distortion(X, M), rel=1e-14)
    U = np.full((8, 3), 1 / 3)
    sigma = 0.4
    entropy_term = entropic_objective(X, M, U, sigma) - soft_distortion(X, M, U)
    assert entropy_term == pytest.approx(-2 * sigma**2 * 8 * np.log(3), rel=1e-10)


def test_softmax_minimizes_entropic_objective():
    rng = np.random.default_rng(5)
    X, M, sigma = rng.normal(size=(6, 2)), rng.normal(size=(3, 2)), 0.8
    R, _ = responsibilities(pairwise_sq_distances(X, M), sigma, "softmax")
    best = entropic_objective(X, M, R, sigma)
    for _ in range(1000):
        assert best <= entropic_objective(X, M, rng.dirichlet(np.ones(3), size=6), sigma) + 1e-9


# -- SoftRBF step -----------------------------------------------------------

@pytest.mark.parametrize("mode", MODES)
def test_step_lands_on_weighted_mean(mode):
    rng = np.random.default_rng(6)
    X, M = rng.normal(size=(40, 2)), rng.normal(size=(3, 2))
    new, R, stats = softrbf_step(X, M, 0.6, mode)
    np.testing.assert_allclose(stats.mass, R.sum(axis=0), rtol=1e-13)
    np.testing.assert_allclose(stats.weighted_sum, R.T @ X, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(new, stats.weighted_sum / stats.mass[:, None], rtol=1e-12)
    assert stats.mass.sum() == pytest.approx(40, abs=1e-9)
    stepped = M - stats.step_size[:, None] * stats.gradient
    np.testing.assert_allclose(new, stepped, rtol=1e-10, atol=1e-12)


def test_step_with_equal_distances_moves_everything_to_global_mean():
    X = col([[1.0, 0.0], [-1.0, 0.0], [0.0, 3.0], [0.0, -3.0]])
    M = np.zeros((3, 2))
    for mode in MODES:
        new, R, _ = softrbf_step(X, M, 0.5, mode)
        np.testing.assert_allclose(R, 1 / 3)
        np.testing.assert_allclose(new, np.tile(X.mean(axis=0), (3, 1)), atol=1e-15)


@pytest.mark.parametrize("mode", MODES)
def test_gradient_matches_finite_difference_with_fixed_R(mode):
    rng = np.random.default_rng(7)
    X, M = rng.normal(size=(15, 2)), rng.normal(size=(3, 2))
    _, R, stats = softrbf_step(X, M, 0.9, mode)
    h = 1e-6 * Dataset(X).radius
    fd = central_difference(lambda mu: fixed_r_loss(X, mu, R), M, h)
    np.testing.assert_allclose(stats.gradient, fd, rtol=1e-5, atol=1e-7)


def test_frozen_cluster_does_not_move():
    X = col([[0.0], [0.1], [0.2]])
    M = col([[0.1], [50.0]])
    new, R, stats = softrbf_step(X, M, 1e-2, "entmax15")
    assert stats.frozen.tolist() == [False, True]
    assert new[1, 0] == 50.0 and stats.step_size[1] == 0.0


def test_step_equals_kmeans_update_in_the_hard_regime():
    X = generate(GenSpec("blobs")).points
    M = random_init(X, 3, make_rng(3))
    new, _, _ = softrbf_step(X, M, 1e-3, "entmax15")
    km = kmeans(X, M, T=1)
    np.testing.assert_array_equal(new, km.centroids)


# -- SoftRBF fit ------------------------------------------------------------

@pytest.mark.parametrize("mode", MODES)
def test_fit_with_one_iteration_is_one_step(mode):
    rng = np.random.default_rng(8)
    X, M = rng.normal(size=(30, 2)), rng.normal(size=(3, 2))
    res = softrbf_fit(X, M, 0.5, T=1, mode=mode)
    new, _, _ = softrbf_step(X, M, 0.5, mode)
    np.testing.assert_array_equal(res.centroids, new)
    assert res.loss_history.shape == (2,)
    assert res.iterations_run == 1


@pytest.mark.parametrize("mode", MODES)
def test_fit_returns_responsibilities_at_final_centroids(mode):
    X = generate(GenSpec("moons")).points
    res = softrbf_fit(X, X[:3], 0.2, T=20, mode=mode)
    R, _ = responsibilities(pairwise_sq_distances(X, res.centroids), 0.2, mode)
    np.testing.assert_array_equal(res.responsibilities, R)
    assert np.all(np.isfinite(res.loss_history))


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("kind", KINDS)
def test_cold_fit_matches_kmeans(kind, mode):
    data = generate(GenSpec(kind))
    mu0 = random_init(data, 3, make_rng(11))
    km = kmeans(data, mu0)
    soft = softrbf_fit(data, mu0, 1e-3, mode=mode)
    _, dist = optimal_permutation_match(km.centroids, soft.centroids)
    assert dist <= 1e-3 * data.radius


def test_fit_many_matches_single_fits():
    X = generate(GenSpec("spiral")).points
    inits = np.stack([random_init(X, 3, make_rng(s)) for s in range(4)])
    for res, mu0 in zip(softrbf_fit_many(X, inits, 0.05, T=30, mode="softmax"), inits):
        single = softrbf_fit(X, mu0, 0.05, T=30, mode="softmax")
        np.testing.assert_array_equal(res.centroids, single.centroids)
        np.testing.assert_array_equal(res.loss_history, single.loss_history)


def test_fit_counts_zero_mass_events():
    X = col([[0.0], [0.1], [0.2]])
    res = softrbf_fit(X, col([[0.1], [50.0]]), 1e-2, T=5, mode="entmax15")
    assert res.zero_mass_events == 5
    assert res.centroids[1, 0] == 50.0


def test_fit_rejects_bad_sigma_and_mode():
    X = col([[0.0], [1.0]])
    with pytest.raises(InvalidInputError):
        softrbf_fit(X, col([[0.0]]), 0.0)
    with pytest.raises(InvalidInputError):
        softrbf_fit(X, col([[0.0]]), 1.0, mode="hard")
