"""Squared distances and permutation-aligned comparison of centroid sets."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._validation import InvalidInputError, as_centroids, as_points

#: Largest k for which the exhaustive k! permutation search is allowed.
MAX_EXHAUSTIVE_K = 10


@dataclass(frozen=True, eq=False)
class Dataset:
    """An (n, d) point cloud with optional ground-truth labels.

    The points array is copied and made read-only on construction.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    name: str = field(default="data", compare=False)

    def __post_init__(self):
        pts = as_points(self.points, "points").copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).copy()
            if labels.shape != (pts.shape[0],):
                raise InvalidInputError("labels must have one entry per point")
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @cached_property
    def radius(self) -> float:
        """Largest Euclidean norm over the points."""
        return float(np.sqrt(np.max(np.sum(self.points * self.points, axis=1))))


def _sq_distances_lanes(X: np.ndarray, lanes: np.ndarray) -> np.ndarray:
    """Squared distances laid out as (k, ..., n) for centroid lanes (k, ..., d)."""
    out = np.zeros(lanes.shape[:-1] + (X.shape[0],))
    for c in range(X.shape[1]):
        diff = X[:, c] - lanes[..., c, None]
        out += diff * diff
    return out


def pairwise_sq_distances(X, M) -> np.ndarray:
    """Squared Euclidean distances between points and centroids.

    ``X`` is (n, d); ``M`` is (k, d) or a stack (..., k, d). Returns (n, k),
    or (..., n, k) for stacked centroids. Each entry is summed from squared
    coordinate differences rather than through the
    ``|x|^2 + |m|^2 - 2<x, m>`` identity, which cancels badly near zero.
    """
    X = as_points(X)
    M = as_centroids(M, d=X.shape[1], batched=True)
    return np.ascontiguousarray(np.moveaxis(_sq_distances_lanes(X, np.moveaxis(M, -2, 0)), 0, -1))


def _check_perm(perm, k: int) -> tuple[int, ...]:
    try:
        perm = tuple(int(p) for p in perm)
    except (TypeError, ValueError):
        raise InvalidInputError(f"perm must be a sequence of integers, got {perm!r}") from None
    if len(perm) != k or sorted(perm) != list(range(k)):
        raise InvalidInputError(f"perm must be a bijection on range({k}), got {perm}")
    return perm


def centroid_set_distance(A, B, perm=None) -> float:
    """Sum over j of ``||A[j] - B[perm[j]]||`` (plain, not squared, norms)."""
    A = as_centroids(A, name="A")
    B = as_centroids(B, d=A.shape[1], name="B")
    if A.shape != B.shape:
        raise InvalidInputError(f"centroid sets differ in shape: {A.shape} vs {B.shape}")
    k = A.shape[0]
    perm = tuple(range(k)) if perm is None else _check_perm(perm, k)
    return float(np.sum(np.linalg.norm(A - B[list(perm)], axis=1)))


def optimal_permutation_match(A, B, method: str = "exhaustive") -> tuple[tuple[int, ...], float]:
    """Find the relabelling of ``B`` closest to ``A``.

    Returns ``(perm, value)`` where ``perm[j]`` is the row of ``B`` matched to
    ``A[j]`` and ``value`` is the summed distance under that matching.

    ``method="exhaustive"`` scans all k! permutations in lexicographic order
    and keeps the first strict minimum, so ties resolve to the
    lexicographically smallest permutation. It refuses k > 10.
    ``method="assignment"`` solves the same linear assignment problem with
    the Hungarian algorithm and works for any k.
    """
    A = as_centroids(A, name="A")
    B = as_centroids(B, d=A.shape[1], name="B")
    if A.shape != B.shape:
        raise InvalidInputError(f"centroid sets differ in shape: {A.shape} vs {B.shape}")
    k = A.shape[0]
    cost = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)

    if method == "assignment":
        rows, cols = linear_sum_assignment(cost)
        perm = tuple(int(c) for c in cols[np.argsort(rows)])
        return perm, float(np.sum(cost[np.arange(k), list(perm)]))
    if method != "exhaustive":
        raise InvalidInputError(f"unknown matching method {method!r}")
    if k > MAX_EXHAUSTIVE_K:
        raise InvalidInputError(
            f"exhaustive matching is limited to k <= {MAX_EXHAUSTIVE_K} (got k={k}); "
            "pass method='assignment' to use the Hungarian solver"
        )

    rows = np.arange(k)
    best_perm, best = None, np.inf
    for perm in itertools.permutations(range(k)):
        value = float(np.sum(cost[rows, perm]))
        if value < best:
            best_perm, best = perm, value
    return best_perm, best
