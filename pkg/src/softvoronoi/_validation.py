"""Input validation helpers shared by the functional API and the estimators."""
from __future__ import annotations

import math

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


def as_points(X, name: str = "X") -> np.ndarray:
    """Return ``X`` as a finite float64 array of shape (n, d)."""
    points = getattr(X, "points", X)
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D (n, d), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must have n >= 1 and d >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def as_centroids(M, d: int | None = None, name: str = "centroids", batched: bool = False) -> np.ndarray:
    """Return centroids as float64 of shape (k, d), or (..., k, d) when ``batched``."""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim < 2 or (arr.ndim > 2 and not batched):
        raise InvalidInputError(f"{name} must be 2-D (k, d), got shape {arr.shape}")
    if arr.shape[-2] < 1:
        raise InvalidInputError(f"{name} must have k >= 1")
    if d is not None and arr.shape[-1] != d:
        raise InvalidInputError(
            f"dimension mismatch: {name} has d={arr.shape[-1]}, data has d={d}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_sigma(sigma) -> float:
    sigma = float(sigma)
    if not (math.isfinite(sigma) and sigma > 0.0):
        raise InvalidInputError(f"sigma must be positive and finite, got {sigma!r}")
    return sigma


def check_mode(mode: str, allowed=("softmax", "entmax15")) -> str:
    if mode not in allowed:
        raise InvalidInputError(f"mode must be one of {allowed}, got {mode!r}")
    return mode


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise InvalidInputError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
