"""Seeded 2-D benchmark geometries and CSV input/output for point sets."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import InvalidInputError
from .geometry import Dataset
from .seeding import make_rng

KINDS = ("blobs", "moons", "spiral", "circles")

DEFAULT_PARAMS = {
    "blobs": {"centers": 3, "spread": 0.5, "center_radius": 4.0},
    "moons": {"noise": 0.05},
    "spiral": {"arms": 3, "radius": 3.0, "turns": 1.0, "noise": 0.05},
    "circles": {"factor": 0.5, "noise": 0.05},
}


@dataclass(frozen=True)
class GenSpec:
    kind: str
    n: int = 300
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise InvalidInputError(f"n must be a positive integer, got {self.n!r}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise InvalidInputError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        merged = {**DEFAULT_PARAMS[self.kind], **self.params}
        if merged.get("noise", 0.0) < 0 or merged.get("spread", 0.0) < 0:
            raise InvalidInputError("noise and spread must be >= 0")
        if self.kind == "circles" and not 0 < merged["factor"] < 1:
            raise InvalidInputError("circles factor must lie in (0, 1)")
        object.__setattr__(self, "params", merged)

    def to_dict(self) -> dict:
        return asdict(self)


def _split(n: int, parts: int) -> list[int]:
    return [n // parts + (1 if i < n % parts else 0) for i in range(parts)]


def _blobs(n, rng, centers, spread, center_radius):
    sizes = _split(n, centers)
    angles = 2 * math.pi * np.arange(centers) / centers
    means = center_radius * np.column_stack([np.cos(angles), np.sin(angles)])
    labels = np.repeat(np.arange(centers), sizes)
    return means[labels] + spread * rng.standard_normal((n, 2)), labels


def _moons(n, rng, noise):
    n_out, n_in = _split(n, 2)
    t_out = np.linspace(0, math.pi, n_out)
    t_in = np.linspace(0, math.pi, n_in)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = np.column_stack([1 - np.cos(t_in), 0.5 - np.sin(t_in)])
    labels = np.repeat([0, 1], [n_out, n_in])
    return np.vstack([outer, inner]) + noise * rng.standard_normal((n, 2)), labels


def _spiral(n, rng, arms, radius, turns, noise):
    sizes = _split(n, arms)
    parts = []
    for a, size in enumerate(sizes):
        t = np.linspace(0, 1, size)
        theta = 2 * math.pi * (turns * t + a / arms)
        parts.append(radius * t[:, None] * np.column_stack([np.cos(theta), np.sin(theta)]))
    labels = np.repeat(np.arange(arms), sizes)
    return np.vstack(parts) + noise * rng.standard_normal((n, 2)), labels


def _circles(n, rng, factor, noise):
    n_out, n_in = _split(n, 2)
    t_out = np.linspace(0, 2 * math.pi, n_out, endpoint=False)
    t_in = np.linspace(0, 2 * math.pi, n_in, endpoint=False)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = factor * np.column_stack([np.cos(t_in), np.sin(t_in)])
    labels = np.repeat([0, 1], [n_out, n_in])
    return np.vstack([outer, inner]) + noise * rng.standard_normal((n, 2)), labels


_GENERATORS = {"blobs": _blobs, "moons": _moons, "spiral": _spiral, "circles": _circles}


def generate(spec: GenSpec) -> Dataset:
    """Draw the dataset described by ``spec``; identical specs give identical points.

    blobs: ``centers`` isotropic Gaussians (std ``spread``) evenly spaced on a
    circle of radius ``center_radius``, points split evenly.
    moons: two interleaved unit half-circles, the second shifted by (1, -0.5).
    spiral: ``arms`` Archimedean arms whose radius grows from 0 to ``radius``
    over ``turns`` revolutions.
    circles: concentric rings of radius 1 and ``factor``.
    All kinds add isotropic Gaussian noise of std ``noise`` where applicable.
    """
    if not isinstance(spec, GenSpec):
        spec = GenSpec(**spec)
    rng = make_rng(spec.seed)
    points, labels = _GENERATORS[spec.kind](spec.n, rng, **spec.params)
    params = ",".join(f"{k}={v}" for k, v in sorted(spec.params.items()))
    return Dataset(points, labels, name=f"{spec.kind}(n={spec.n},seed={spec.seed},{params})")


# -- CSV --------------------------------------------------------------------

def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def save_csv(data, path, header: bool = True) -> None:
    """Write one point per row with round-trip (``repr``) precision."""
    points = getattr(data, "points", data)
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{j}" for j in range(points.shape[1])])
        for row in points:
            writer.writerow([repr(float(v)) for v in row])


def load_csv(path) -> Dataset:
    """Read a numeric CSV, one point per row, skipping a single non-numeric header row."""
    path = Path(path)
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            cells = [cell.strip() for cell in row]
            if lineno == 1 and not all(_is_number(c) for c in cells):
                continue
            try:
                values = [float(c) for c in cells]
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise InvalidInputError(f"{path}:{lineno}: non-numeric value {bad!r}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise InvalidInputError(f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            if not all(math.isfinite(v) for v in values):
                raise InvalidInputError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    return Dataset(np.array(rows), name=path.stem)
