"""Lloyd K-Means, the SoftRBF centroid optimizer, and the clustering objectives.

The fit routines accept a single (k, d) initialization or a stack
(B, k, d) of them; a stack runs B independent fits in lock-step, which is
how the evaluation harness amortizes interpreter overhead. Results for one
member of a stack do not depend on the other members.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    InvalidInputError,
    as_centroids,
    as_points,
    check_mode,
    check_positive_int,
    check_sigma,
)
from .assign import _argmin_lanes, _one_hot_lanes, _responsibilities_lanes
from .geometry import _sq_distances_lanes, pairwise_sq_distances

#: Clusters whose responsibility mass is at most MASS_FLOOR_PER_POINT * n are frozen.
MASS_FLOOR_PER_POINT = 1e-12
#: Default K-Means tolerance, relative to the dataset radius.
KMEANS_TOL_PER_RADIUS = 1e-9
DEFAULT_ITERATIONS = 150


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    distortion_history: np.ndarray
    iterations_run: int
    converged: bool


@dataclass
class GradientStats:
    """Sufficient statistics of one SoftRBF step.

    ``gradient`` and ``step_size`` are the per-cluster quantities
    ``2 (mass_j mu_j - w_j)`` and ``1 / (2 mass_j)``; frozen clusters carry
    ``step_size = 0``.
    """

    mass: np.ndarray
    weighted_sum: np.ndarray
    gradient: np.ndarray
    step_size: np.ndarray
    frozen: np.ndarray


@dataclass
class SoftRBFResult:
    centroids: np.ndarray
    responsibilities: np.ndarray
    loss_history: np.ndarray
    iterations_run: int
    mode: str
    sigma: float
    zero_mass_events: int = 0
    renormalized_rows: int = 0
    loss_increases: int = field(default=0)


# -- initialization ---------------------------------------------------------

def random_init(X, k: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` distinct data points drawn uniformly without replacement."""
    X = as_points(X)
    k = check_positive_int(k, "k")
    if X.shape[0] < k:
        raise InvalidInputError(f"need n >= k, got n={X.shape[0]}, k={k}")
    idx = rng.choice(X.shape[0], size=k, replace=False)
    return X[np.sort(idx)].copy()


def kmeans_plusplus_init(X, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: each new center drawn with probability proportional to D^2."""
    X = as_points(X)
    k = check_positive_int(k, "k")
    n = X.shape[0]
    if n < k:
        raise InvalidInputError(f"need n >= k, got n={n}, k={k}")
    centers = [X[rng.integers(n)]]
    closest = pairwise_sq_distances(X, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            i = rng.choice(n, p=closest / total)
        else:
            i = rng.integers(n)
        centers.append(X[i])
        closest = np.minimum(closest, pairwise_sq_distances(X, X[i][None, :])[:, 0])
    return np.array(centers)


# -- objectives -------------------------------------------------------------

def hard_distortion(X, M) -> float:
    """``sum_i min_j ||x_i - mu_j||^2``."""
    D = pairwise_sq_distances(X, M)
    return float(np.sum(D.min(axis=-1)))


def _soft_distortion_lanes(D: np.ndarray, R: np.ndarray) -> np.ndarray:
    # each row is its nearest distance plus a nonnegative convex excess, so
    # the result can never round below the hard distortion
    nearest = D.min(axis=0)
    excess = np.sum(R * (D - nearest), axis=0)
    return np.sum(nearest + excess, axis=-1)


def soft_distortion(X, M, R) -> float:
    """Responsibility-weighted distortion ``sum_ij R_ij ||x_i - mu_j||^2`` for row-stochastic ``R``."""
    D = pairwise_sq_distances(X, M)
    R = _check_responsibilities(R, D.shape)
    return float(_soft_distortion_lanes(np.moveaxis(D, -1, 0), np.moveaxis(R, -1, 0)))


def entropic_objective(X, M, R, sigma) -> float:
    """Soft distortion plus ``2 sigma^2 sum_ij R_ij log R_ij`` (with 0 log 0 = 0)."""
    sigma = check_sigma(sigma)
    D = pairwise_sq_distances(X, M)
    R = _check_responsibilities(R, D.shape)
    safe = np.where(R > 0, R, 1.0)
    neg_entropy = np.sum(np.where(R > 0, R * np.log(safe), 0.0))
    return float(np.sum(R * D) + 2.0 * sigma * sigma * neg_entropy)


def _check_responsibilities(R, shape) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != shape:
        raise InvalidInputError(f"responsibilities have shape {R.shape}, expected {shape}")
    if np.any(R < 0) or not np.all(np.isfinite(R)):
        raise InvalidInputError("responsibilities must be finite and nonnegative")
    return R


# -- shared update (lanes layout: centroids (k, ..., d), weights (k, ..., n)) --

def _weighted_sums(W: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cluster masses (k, ...) and weighted point sums (k, ..., d).

    Every sum is a reduction along the contiguous point axis, so its rounding
    does not depend on how many fits share the stack (a BLAS product would).
    """
    wsum = np.stack([np.sum(W * X[:, j], axis=-1) for j in range(X.shape[1])], axis=-1)
    return W.sum(axis=-1), wsum


def _centroid_update(mu, mass, wsum, floor):
    movable = mass > floor
    safe = np.where(movable, mass, 1.0)
    new = np.where(movable[..., None], wsum / safe[..., None], mu)
    return new, movable


def _lanes(M: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(M, -2, 0))


def _unlanes(mu: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(mu, 0, -2))


# -- K-Means ----------------------------------------------------------------

def _default_tol(X: np.ndarray) -> float:
    return KMEANS_TOL_PER_RADIUS * float(np.sqrt(np.max(np.sum(X * X, axis=1))))


def _lloyd(X, mu0, T, tol):
    mu = _lanes(mu0)
    k, batch = mu.shape[0], mu.shape[1]
    active = np.ones(batch, dtype=bool)
    converged = np.zeros(batch, dtype=bool)
    iters = np.zeros(batch, dtype=np.int64)
    D = _sq_distances_lanes(X, mu)
    labels = _argmin_lanes(D)
    history = np.full((T + 1, batch), np.nan)
    history[0] = D.min(axis=0).sum(axis=-1)
    for t in range(1, T + 1):
        step_labels = _argmin_lanes(D)
        mass, wsum = _weighted_sums(_one_hot_lanes(step_labels, k), X)
        new, _ = _centroid_update(mu, mass, wsum, 0.0)
        shift = np.sqrt(np.max(np.sum((new - mu) ** 2, axis=-1), axis=0))
        mu = np.where(active[:, None], new, mu)
        labels = np.where(active[:, None], step_labels, labels)
        iters += active
        D = _sq_distances_lanes(X, mu)
        history[t] = np.where(active, D.min(axis=0).sum(axis=-1), np.nan)
        done = active & (shift < tol)
        converged |= done
        active &= ~done
        if not active.any():
            break
    mu = _unlanes(mu)
    return [
        KMeansResult(
            centroids=mu[b].copy(),
            labels=labels[b].copy(),
            distortion_history=history[: iters[b] + 1, b].copy(),
            iterations_run=int(iters[b]),
            converged=bool(converged[b]),
        )
        for b in range(batch)
    ]


def kmeans_many(X, mu0s, T: int = DEFAULT_ITERATIONS, tol: float | None = None) -> list[KMeansResult]:
    """Run Lloyd iterations from each (k, d) initialization in the stack ``mu0s``."""
    X = as_points(X)
    mu0s = as_centroids(mu0s, d=X.shape[1], name="mu0", batched=True)
    if mu0s.ndim != 3:
        raise InvalidInputError(f"mu0s must be (B, k, d), got shape {mu0s.shape}")
    T = check_positive_int(T, "T")
    if X.shape[0] < mu0s.shape[1]:
        raise InvalidInputError(f"need n >= k, got n={X.shape[0]}, k={mu0s.shape[1]}")
    tol = _default_tol(X) if tol is None else float(tol)
    if tol < 0:
        raise InvalidInputError("tol must be >= 0")
    return _lloyd(X, mu0s, T, tol)


def kmeans(X, mu0, T: int = DEFAULT_ITERATIONS, tol: float | None = None) -> KMeansResult:
    """Lloyd's algorithm from the initial centroids ``mu0``.

    Alternates nearest-centroid assignment with the cell-mean update; a
    centroid whose cell is empty keeps its position. Stops once no centroid
    moves by ``tol`` or more (default ``1e-9 * radius``), or after ``T``
    iterations. ``distortion_history[t]`` is the distortion after ``t``
    updates, starting with the initialization.
    """
    mu0 = as_centroids(mu0, name="mu0")
    return kmeans_many(X, mu0[None], T, tol)[0]


# -- SoftRBF ----------------------------------------------------------------

def _soft_step(X, mu, D, sigma, mode, floor):
    R, renormalized = _responsibilities_lanes(D, sigma, mode)
    mass, wsum = _weighted_sums(R, X)
    # the step mu - grad / (2 mass) equals wsum / mass; it is evaluated in that
    # closed form so a hard responsibility matrix reproduces the K-Means mean exactly
    new, movable = _centroid_update(mu, mass, wsum, floor)
    return new, R, mass, wsum, movable, renormalized


def softrbf_step(X, M, sigma, mode: str = "entmax15"):
    """One SoftRBF update.

    Returns ``(new_centroids, R, stats)``. Responsibilities ``R`` are computed
    at ``M`` from the logits ``-D / (2 sigma^2)``; each cluster with mass
    above the floor moves to ``w_j / r_j``, which is where a gradient step on
    the fixed-responsibility loss with step size ``1 / (2 r_j)`` lands.
    Clusters at or below the floor stay put and are flagged in ``stats.frozen``.
    """
    X = as_points(X)
    M = as_centroids(M, d=X.shape[1], batched=True)
    sigma = check_sigma(sigma)
    check_mode(mode)
    mu = _lanes(M)
    D = _sq_distances_lanes(X, mu)
    floor = MASS_FLOOR_PER_POINT * X.shape[0]
    new, R, mass, wsum, movable, _ = _soft_step(X, mu, D, sigma, mode, floor)
    mass, wsum, movable = np.moveaxis(mass, 0, -1), _unlanes(wsum), np.moveaxis(movable, 0, -1)
    gradient = 2.0 * (mass[..., None] * M - wsum)
    step = np.where(movable, 0.5 / np.where(movable, mass, 1.0), 0.0)
    stats = GradientStats(mass=mass, weighted_sum=wsum, gradient=gradient, step_size=step, frozen=~movable)
    return _unlanes(new), np.ascontiguousarray(np.moveaxis(R, 0, -1)), stats


def _softrbf(X, mu0, sigma, T, mode):
    mu = _lanes(mu0)
    floor = MASS_FLOOR_PER_POINT * X.shape[0]
    batch = mu.shape[1]
    loss = np.empty((T + 1, batch))
    zero_mass = np.zeros(batch, dtype=np.int64)
    renorm = np.zeros(batch, dtype=np.int64)
    D = _sq_distances_lanes(X, mu)
    for t in range(T):
        new, R, _, _, movable, ren = _soft_step(X, mu, D, sigma, mode, floor)
        loss[t] = _soft_distortion_lanes(D, R)
        zero_mass += np.sum(~movable, axis=0)
        renorm += ren
        mu = new
        D = _sq_distances_lanes(X, mu)
    R, ren = _responsibilities_lanes(D, sigma, mode)
    loss[T] = _soft_distortion_lanes(D, R)
    return _unlanes(mu), np.moveaxis(R, 0, -1), loss, zero_mass, renorm + ren
def softrbf_fit_many(X, mu0s, sigma, T: int = DEFAULT_ITERATIONS, mode: str = "entmax15") -> list[SoftRBFResult]:
    """Run ``softrbf_fit`` from each (k, d) initialization in the stack ``mu0s``."""
    X = as_points(X)
    mu0s = as_centroids(mu0s, d=X.shape[1], name="mu0", batched=True)
    if mu0s.ndim != 3:
        raise InvalidInputError(f"mu0s must be (B, k, d), got shape {mu0s.shape}")
    sigma = check_sigma(sigma)
    check_mode(mode)
    T = check_positive_int(T, "T")
    mu, R, loss, zero_mass, renorm = _softrbf(X, mu0s, sigma, T, mode)
    return [
        SoftRBFResult(
            centroids=mu[b].copy(),
            responsibilities=R[b].copy(),
            loss_history=loss[:, b].copy(),
            iterations_run=T,
            mode=mode,
            sigma=sigma,
            zero_mass_events=int(zero_mass[b]),
            renormalized_rows=int(renorm[b]),
            loss_increases=int(np.count_nonzero(np.diff(loss[:, b]) > 0)),
        )
        for b in range(mu.shape[0])
    ]


def softrbf_fit(X, mu0, sigma, T: int = DEFAULT_ITERATIONS, mode: str = "entmax15") -> SoftRBFResult:
    """Iterate ``softrbf_step`` exactly ``T`` times from ``mu0``.

    ``loss_history[t]`` is the soft distortion at the centroids after ``t``
    steps (``T + 1`` entries). The loss is not guaranteed to decrease, since
    responsibilities change between steps; increases are counted in
    ``loss_increases`` rather than raised. The returned responsibilities are
    those of the final centroids.
    """
    mu0 = as_centroids(mu0, name="mu0")
    return softrbf_fit_many(X, mu0[None], sigma, T, mode)[0]
