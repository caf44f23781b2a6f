"""Responsibility maps from squared distances.

Public functions take distances shaped (..., n, k) and work row by row
along the last axis. Internally the maps run on a "lanes" layout (k, ..., n)
where each cluster is one slice, which keeps the per-row work for small k
vectorized over all rows at once. Ties always resolve to the lowest index.
"""
from __future__ import annotations

import logging

import numpy as np

from ._validation import InvalidInputError, check_mode, check_sigma

logger = logging.getLogger(__name__)

#: Row-sum error above which rows are renormalized (and the event counted).
ROWSUM_TOL = 1e-12
#: Up to this many lanes the descending sort uses a compare-exchange network.
NETWORK_SORT_MAX_K = 16


def _as_distances(D) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim < 1 or D.shape[-1] < 1:
        raise InvalidInputError(f"distance array must have at least one column, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise InvalidInputError("distance array contains non-finite entries")
    return D


def _to_lanes(A: np.ndarray) -> np.ndarray:
    return np.moveaxis(A, -1, 0)


def _from_lanes(A: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(A, 0, -1))


# -- lane kernels -------------------------------------------------------------

def _argmin_lanes(D: np.ndarray) -> np.ndarray:
    best = D[0]
    idx = np.zeros(best.shape, dtype=np.intp)
    for j in range(1, D.shape[0]):
        better = D[j] < best
        best = np.where(better, D[j], best)
        idx[better] = j
    return idx


def _one_hot_lanes(labels: np.ndarray, k: int) -> np.ndarray:
    lanes = np.arange(k).reshape((k,) + (1,) * labels.ndim)
    return (labels[None] == lanes).astype(np.float64)


def _softmax_lanes(Z: np.ndarray) -> np.ndarray:
    # shifting by the row max makes the dominant term exactly exp(0) = 1
    E = np.exp(Z - Z.max(axis=0))
    return E / E.sum(axis=0)


def _sorted_desc_lanes(A: np.ndarray) -> list[np.ndarray]:
    k = A.shape[0]
    if k > NETWORK_SORT_MAX_K:
        return list(-np.sort(-A, axis=0))
    lanes = list(A)
    # odd-even transposition network: k rounds leave the lanes sorted
    for r in range(k):
        for i in range(r % 2, k - 1, 2):
            a, b = lanes[i], lanes[i + 1]
            lanes[i], lanes[i + 1] = np.maximum(a, b), np.minimum(a, b)
    return lanes


def _entmax15_lanes(Z: np.ndarray) -> np.ndarray:
    k = Z.shape[0]
    half = (Z - Z.max(axis=0)) / 2.0
    srt = _sorted_desc_lanes(half)
    s1 = np.zeros(half.shape[1:])
    s2 = np.zeros(half.shape[1:])
    taus = []
    support = np.zeros(half.shape[1:], dtype=np.intp)
    for rho in range(1, k + 1):
        v = srt[rho - 1]
        s1 = s1 + v
        s2 = s2 + v * v
        mean = s1 / rho
        spread = rho * (s2 / rho - mean * mean)
        tau = mean - np.sqrt(np.maximum((1.0 - spread) / rho, 0.0))
        support += tau <= v
        taus.append(tau)
    tau_star = taus[0]
    for rho in range(2, k + 1):
        tau_star = np.where(support == rho, taus[rho - 1], tau_star)
    return np.maximum(half - tau_star, 0.0) ** 2


def _responsibilities_lanes(D: np.ndarray, sigma: float, mode: str):
    """Responsibilities in lanes layout and per-matrix counts of renormalized rows."""
    if mode == "hard":
        return _one_hot_lanes(_argmin_lanes(D), D.shape[0]), np.zeros(D.shape[1:-1], dtype=np.intp)
    Z = D * (-1.0 / (2.0 * sigma * sigma))
    R = _softmax_lanes(Z) if mode == "softmax" else _entmax15_lanes(Z)
    sums = R.sum(axis=0)
    bad = np.abs(sums - 1.0) > ROWSUM_TOL
    count = np.count_nonzero(bad, axis=-1)
    if np.any(count):
        logger.warning("renormalized %d responsibility rows (|rowsum - 1| > %g)", int(np.sum(count)), ROWSUM_TOL)
        R = np.where(bad, R / sums, R)
    return R, count


# -- public API ---------------------------------------------------------------

def hard_assign(D) -> np.ndarray:
    """Index of the nearest centroid per row; ties go to the lowest index."""
    return _argmin_lanes(_to_lanes(_as_distances(D)))


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[..., None] == np.arange(k)).astype(np.float64)


def entmax15(z) -> np.ndarray:
    """Exact 1.5-entmax along the last axis of ``z``.

    Returns ``p_j = [(z_j - tau)/2]_+^2`` with ``tau`` chosen so each row
    sums to one. ``tau`` is found in closed form: sort ``z/2`` in descending
    order, and for each candidate support size s solve the quadratic that
    normalizes the top s entries; the support is the set of sizes whose
    threshold stays at or below the s-th sorted entry.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise InvalidInputError("entmax15 needs at least one coordinate")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("entmax15 input contains non-finite entries")
    return _from_lanes(_entmax15_lanes(_to_lanes(z)))


def entmax_threshold(z) -> np.ndarray:
    """The normalizing ``tau`` of ``entmax15`` in the ``[(z - tau)/2]_+^2`` convention."""
    z = np.asarray(z, dtype=np.float64)
    p = entmax15(z)
    top = np.argmax(p, axis=-1)[..., None]
    z_top = np.take_along_axis(z, top, axis=-1)[..., 0]
    return z_top - 2.0 * np.sqrt(np.take_along_axis(p, top, axis=-1)[..., 0])


def distance_logits(D, sigma) -> np.ndarray:
    """``-D / (2 sigma^2)``."""
    sigma = check_sigma(sigma)
    return -_as_distances(D) / (2.0 * sigma * sigma)


def responsibilities(D, sigma, mode: str = "softmax") -> tuple[np.ndarray, int]:
    """Responsibilities for ``mode`` plus the number of rows that needed renormalizing."""
    check_mode(mode, ("softmax", "entmax15", "hard"))
    D = _as_distances(D)
    sigma = check_sigma(sigma) if mode != "hard" else 1.0
    R, count = _responsibilities_lanes(_to_lanes(D), sigma, mode)
    return _from_lanes(R), int(np.sum(count))


def softmax_responsibilities(D, sigma) -> np.ndarray:
    """Gaussian-kernel softmax ``exp(-D/(2 sigma^2))`` normalized per row.

    Evaluated with the row maximum subtracted, so tiny sigma yields exact
    one-hot rows rather than 0/0.
    """
    return responsibilities(D, sigma, "softmax")[0]


def entmax_responsibilities(D, sigma) -> np.ndarray:
    """1.5-entmax of the logits ``-D/(2 sigma^2)``, row by row; rows may be exactly sparse."""
    return responsibilities(D, sigma, "entmax15")[0]
