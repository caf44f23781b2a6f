"""scikit-learn style wrappers around ``kmeans`` and ``softrbf_fit``."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import InvalidInputError, as_centroids, check_mode, check_positive_int, check_sigma
from .assign import hard_assign, responsibilities
from .cluster import DEFAULT_ITERATIONS, hard_distortion, kmeans, kmeans_plusplus_init, random_init, softrbf_fit
from .geometry import pairwise_sq_distances
from .seeding import make_rng


def _initial_centroids(X, k, init, random_state):
    if isinstance(init, str):
        if isinstance(random_state, np.random.Generator):
            rng = random_state
        else:
            rng = make_rng(0 if random_state is None else int(random_state))
        if init == "random":
            return random_init(X, k, rng)
        if init == "k-means++":
            return kmeans_plusplus_init(X, k, rng)
        raise InvalidInputError(f"init must be 'random', 'k-means++' or an array, got {init!r}")
    mu0 = as_centroids(init, d=X.shape[1], name="init")
    if mu0.shape[0] != k:
        raise InvalidInputError(f"init has {mu0.shape[0]} rows, expected n_clusters={k}")
    return mu0


class _CentroidModel(ClusterMixin, TransformerMixin, BaseEstimator):
    def _check_X(self, X, reset):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if reset:
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"X has {X.shape[1]} features, model was fit with {self.n_features_in_}")
        return X

    def predict(self, X):
        """Index of the nearest centroid for each row of ``X``."""
        check_is_fitted(self, "cluster_centers_")
        X = self._check_X(X, reset=False)
        return hard_assign(pairwise_sq_distances(X, self.cluster_centers_))

    def transform(self, X):
        """Squared distances from each row of ``X`` to each centroid, shape (n, k)."""
        check_is_fitted(self, "cluster_centers_")
        X = self._check_X(X, reset=False)
        return pairwise_sq_distances(X, self.cluster_centers_)

    def score(self, X, y=None):
        """Negative hard distortion of ``X`` under the fitted centroids."""
        check_is_fitted(self, "cluster_centers_")
        return -hard_distortion(self._check_X(X, reset=False), self.cluster_centers_)


class LloydKMeans(_CentroidModel):
    """Hard K-Means by Lloyd iterations from a single initialization.

    Parameters
    ----------
    n_clusters : int
    max_iter : int
        Upper bound on Lloyd updates.
    tol : float or None
        Stop once no centroid moves by ``tol``; ``None`` means ``1e-9 * radius``.
    init : {'random', 'k-means++'} or array of shape (n_clusters, n_features)
    random_state : int, numpy Generator or None
    """

    def __init__(self, n_clusters=3, max_iter=DEFAULT_ITERATIONS, tol=None, init="random", random_state=None):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.init = init
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._check_X(X, reset=True)
        k = check_positive_int(self.n_clusters, "n_clusters")
        mu0 = _initial_centroids(X, k, self.init, self.random_state)
        result = kmeans(X, mu0, check_positive_int(self.max_iter, "max_iter"), self.tol)
        self.cluster_centers_ = result.centroids
        self.labels_ = result.labels
        self.inertia_ = float(result.distortion_history[-1])
        self.n_iter_ = result.iterations_run
        self.converged_ = result.converged
        self.result_ = result
        return self


class SoftRBFClustering(_CentroidModel):
    """SoftRBF centroids with softmax or entmax-1.5 responsibilities.

    Runs exactly ``max_iter`` soft updates at temperature ``sigma``.
    ``predict_proba`` returns the responsibilities of new points under the
    fitted centroids; ``predict`` returns nearest-centroid labels, which agree
    with the responsibility argmax.
    """

    def __init__(self, n_clusters=3, sigma=0.1, mode="entmax15", max_iter=DEFAULT_ITERATIONS, init="random",
                 random_state=None):
        self.n_clusters = n_clusters
        self.sigma = sigma
        self.mode = mode
        self.max_iter = max_iter
        self.init = init
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._check_X(X, reset=True)
        k = check_positive_int(self.n_clusters, "n_clusters")
        check_sigma(self.sigma)
        check_mode(self.mode)
        mu0 = _initial_centroids(X, k, self.init, self.random_state)
        result = softrbf_fit(X, mu0, self.sigma, check_positive_int(self.max_iter, "max_iter"), self.mode)
        self.cluster_centers_ = result.centroids
        self.responsibilities_ = result.responsibilities
        self.labels_ = hard_assign(pairwise_sq_distances(X, result.centroids))
        self.loss_ = float(result.loss_history[-1])
        self.n_iter_ = result.iterations_run
        self.result_ = result
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = self._check_X(X, reset=False)
        R, _ = responsibilities(pairwise_sq_distances(X, self.cluster_centers_), self.sigma, self.mode)
        return R
