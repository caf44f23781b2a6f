"""Convergence measurement: temperature schedules, the fixed and resampled
initialization protocols, power-law rate fits, and the separation-based
deviation bounds.

The unit of work is one (experiment, sigma index) cell holding all ``M``
trials. Cells are pure functions of the config, so a sweep can be spread
over any number of worker processes and reassembled in grid order without
changing a single bit of output.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import spearmanr

from ._validation import InvalidInputError, as_points, check_mode, check_positive_int
from .assign import hard_assign, one_hot, responsibilities
from .cluster import KMeansResult, kmeans_many, random_init, softrbf_fit_many
from .geometry import Dataset, optimal_permutation_match, pairwise_sq_distances
from .seeding import derive_seed, make_rng
from .synthdata import GenSpec, generate

PROTOCOLS = ("fixed", "resampled")
PROTOCOL_IDS = {"fixed": 0, "resampled": 1}
ENTMAX_RATIO_SPREAD = 50.0


# -- schedule ---------------------------------------------------------------

@dataclass(frozen=True)
class SigmaSchedule:
    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if not values or not all(math.isfinite(v) and v > 0 for v in values):
            raise InvalidInputError("schedule values must be positive and finite")
        object.__setattr__(self, "values", values)

    @property
    def sigma_min(self) -> float:
        return min(self.values)

    @property
    def sigma_max(self) -> float:
        return max(self.values)

    @property
    def L(self) -> int:
        return len(self.values)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


def sigma_schedule(sigma_min: float = 1e-3, sigma_max: float = 1e-1, L: int = 50) -> SigmaSchedule:
    """Geometric grid ``sigma_min * (sigma_max / sigma_min) ** (t / (L - 1))`` for t = 0..L-1."""
    L = check_positive_int(L, "L", minimum=2)
    if not (0 < sigma_min < sigma_max and math.isfinite(sigma_max)):
        raise InvalidInputError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
    ratio = sigma_max / sigma_min
    values = [sigma_min * ratio ** (t / (L - 1)) for t in range(L)]
    values[0], values[-1] = float(sigma_min), float(sigma_max)
    return SigmaSchedule(tuple(values))


# -- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    dataset: GenSpec
    k: int = 3
    T: int = 150
    M: int = 200
    schedule: SigmaSchedule = field(default_factory=sigma_schedule)
    mode: str = "entmax15"
    protocol: str = "fixed"
    master_seed: int = 0

    def __post_init__(self):
        check_positive_int(self.k, "k", minimum=2)
        check_positive_int(self.T, "T")
        check_positive_int(self.M, "M")
        check_mode(self.mode)
        if self.protocol not in PROTOCOLS:
            raise InvalidInputError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.dataset.n < self.k:
            raise InvalidInputError(f"dataset has n={self.dataset.n} < k={self.k}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schedule"] = list(self.schedule.values)
        return out


# -- curves -----------------------------------------------------------------

@dataclass
class CurvePoint:
    sigma: float
    discrepancies: np.ndarray
    max_centroid_devs: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.discrepancies))

    @property
    def std(self) -> float:
        d = self.discrepancies
        return float(np.std(d, ddof=1)) if d.size > 1 else 0.0

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.discrepancies.size)

    @property
    def mean_max_dev(self) -> float:
        return float(np.mean(self.max_centroid_devs))


@dataclass
class ConvergenceCurve:
    protocol: str
    dataset: str
    mode: str
    points: list[CurvePoint]
    diagnostics: dict = field(default_factory=dict)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([p.sigma for p in self.points])

    @property
    def means(self) -> np.ndarray:
        return np.array([p.mean for p in self.points])

    def spearman(self) -> float:
        """Rank correlation between sigma and the mean discrepancy (NaN for a flat curve)."""
        if len(self.points) < 2 or np.all(self.means == self.means[0]):
            return float("nan")
        return float(spearmanr(self.sigmas, self.means).statistic)


def _init_stack(X, k, M, master_seed, protocol, sigma_index):
    pid = PROTOCOL_IDS[protocol]
    return np.stack([
        random_init(X, k, make_rng(derive_seed(master_seed, pid, sigma_index, trial)))
        for trial in range(M)
    ])


_dataset_cache: dict[str, Dataset] = {}
_kmeans_cache: dict[tuple, list[KMeansResult]] = {}


def _dataset(spec: GenSpec) -> Dataset:
    key = json.dumps(spec.to_dict(), sort_keys=True)
    if key not in _dataset_cache:
        _dataset_cache[key] = generate(spec)
    return _dataset_cache[key]


def _fixed_kmeans(cfg: ExperimentConfig):
    X = _dataset(cfg.dataset).points
    key = (json.dumps(cfg.dataset.to_dict(), sort_keys=True), cfg.k, cfg.T, cfg.M, cfg.master_seed)
    if key not in _kmeans_cache:
        inits = _init_stack(X, cfg.k, cfg.M, cfg.master_seed, "fixed", 0)
        _kmeans_cache[key] = (inits, kmeans_many(X, inits, cfg.T))
    return _kmeans_cache[key]


def _compare(km_results, soft_results):
    disc = np.empty(len(km_results))
    max_dev = np.empty(len(km_results))
    for i, (km, soft) in enumerate(zip(km_results, soft_results)):
        perm, disc[i] = optimal_permutation_match(km.centroids, soft.centroids)
        max_dev[i] = np.max(np.linalg.norm(km.centroids - soft.centroids[list(perm)], axis=1))
    return disc, max_dev


def _diagnostics(km_results, soft_results) -> dict:
    return {
        "zero_mass_events": sum(s.zero_mass_events for s in soft_results),
        "renormalized_rows": sum(s.renormalized_rows for s in soft_results),
        "loss_increase_runs": sum(1 for s in soft_results if s.loss_history[-1] > s.loss_history[0]),
        "kmeans_unconverged": sum(1 for km in km_results if not km.converged),
        "kmeans_monotonicity_violations": sum(1 for km in km_results if not distortion_is_monotone(km)),
    }


def distortion_is_monotone(km: KMeansResult, rel: float = 1e-12) -> bool:
    """True when no K-Means iteration raised the distortion (beyond ``rel`` round-off)."""
    h = km.distortion_history
    return bool(np.all(h[1:] <= h[:-1] * (1 + rel) + rel))


def run_cell(cfg: ExperimentConfig, sigma_index: int) -> tuple[CurvePoint, dict]:
    """All ``M`` trials of one protocol at one schedule temperature."""
    X = _dataset(cfg.dataset).points
    sigma = cfg.schedule.values[sigma_index]
    if cfg.protocol == "fixed":
        inits, km = _fixed_kmeans(cfg)
        diag_km = km if sigma_index == 0 else []
    else:
        inits = _init_stack(X, cfg.k, cfg.M, cfg.master_seed, "resampled", sigma_index)
        km = diag_km = kmeans_many(X, inits, cfg.T)
    soft = softrbf_fit_many(X, inits, sigma, cfg.T, cfg.mode)
    disc, max_dev = _compare(km, soft)
    return CurvePoint(sigma, disc, max_dev), _diagnostics(diag_km, soft)


def _merge_diagnostics(parts) -> dict:
    total: dict = {}
    for part in parts:
        for key, value in part.items():
            total[key] = total.get(key, 0) + value
    return total


def _assemble(cfg, cells) -> ConvergenceCurve:
    return ConvergenceCurve(
        protocol=cfg.protocol,
        dataset=cfg.dataset.kind,
        mode=cfg.mode,
        points=[point for point, _ in cells],
        diagnostics=_merge_diagnostics(d for _, d in cells),
    )


def run_fixed_init(cfg: ExperimentConfig) -> ConvergenceCurve:
    """Discrepancy curve with one pool of ``M`` initializations shared by every sigma.

    K-Means runs once per initialization; SoftRBF runs from the same
    initialization at each sigma and is compared to that K-Means solution
    under the best relabelling.
    """
    if cfg.protocol != "fixed":
        raise InvalidInputError("run_fixed_init needs protocol='fixed'")
    return _assemble(cfg, [run_cell(cfg, i) for i in range(cfg.schedule.L)])


def run_resampled(cfg: ExperimentConfig) -> ConvergenceCurve:
    """Discrepancy curve with fresh initializations for every (sigma, trial) pair.

    Each trial's seed is ``derive_seed(master_seed, 1, sigma_index, trial)``;
    K-Means and SoftRBF share that initialization.
    """
    if cfg.protocol != "resampled":
        raise InvalidInputError("run_resampled needs protocol='resampled'")
    return _assemble(cfg, [run_cell(cfg, i) for i in range(cfg.schedule.L)])


def run_experiment(cfg: ExperimentConfig) -> ConvergenceCurve:
    return run_fixed_init(cfg) if cfg.protocol == "fixed" else run_resampled(cfg)


def _run_task(task):
    cfg, sigma_index = task
    return run_cell(cfg, sigma_index)


def run_grid(configs: list[ExperimentConfig], workers: int = 1) -> list[ConvergenceCurve]:
    """Run every (config, sigma) cell, optionally across processes; output order is fixed."""
    tasks = [(cfg, i) for cfg in configs for i in range(cfg.schedule.L)]
    if workers <= 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    curves, pos = [], 0
    for cfg in configs:
        curves.append(_assemble(cfg, results[pos: pos + cfg.schedule.L]))
        pos += cfg.schedule.L
    return curves


# -- rate fit ---------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    m: float
    b: float
    r2: float
    points_used: int
    points_excluded: int = 0
    fit_range: str = "full"

    def to_dict(self) -> dict:
        return asdict(self)


def lower_half(sigmas, values):
    """The entries belonging to the smaller-sigma half of a schedule."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(sigmas, kind="stable")
    keep = order[: (len(order) + 1) // 2]
    return sigmas[keep], values[keep]


def loglog_fit(curve, values=None, fit_range: str = "full") -> RateFit:
    """Least-squares line through ``(log sigma, log R)`` for the points with ``R > 0``.

    Pass a ``ConvergenceCurve`` or two arrays ``(sigmas, values)``.
    ``fit_range="lower_half"`` restricts the fit to the smaller half of the
    sigmas. Returns slope ``m``, intercept ``b = log C`` and ``r2``.
    """
    if isinstance(curve, ConvergenceCurve):
        sigmas, values = curve.sigmas, curve.means
    else:
        sigmas, values = np.asarray(curve, dtype=np.float64), np.asarray(values, dtype=np.float64)
    if sigmas.shape != values.shape:
        raise InvalidInputError("sigmas and values differ in length")
    if fit_range == "lower_half":
        sigmas, values = lower_half(sigmas, values)
    elif fit_range != "full":
        raise InvalidInputError(f"fit_range must be 'full' or 'lower_half', got {fit_range!r}")
    usable = values > 0
    if np.count_nonzero(usable) < 2:
        raise InvalidInputError(
            f"insufficient positive discrepancies for a log-log fit: {np.count_nonzero(usable)} of {values.size}"
        )
    x = np.log(sigmas[usable])
    y = np.log(values[usable])
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise InvalidInputError("log-log fit needs at least two distinct sigmas")
    m = float(xc @ yc) / sxx
    b = float(y.mean() - m * x.mean())
    ss_tot = float(yc @ yc)
    ss_res = float(np.sum((yc - m * xc) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RateFit(m, b, r2, int(usable.sum()), int((~usable).sum()), fit_range)


# -- separation and bounds --------------------------------------------------

@dataclass(frozen=True)
class SeparationStats:
    R: float
    alpha: float
    gamma_min: float


def separation_stats(X, km) -> SeparationStats:
    """Radius, smallest Voronoi-cell fraction and smallest nearest/second-nearest gap.

    Cells and gaps are taken with respect to the centroids in ``km`` (a
    ``KMeansResult`` or a (k, d) array); gaps use plain Euclidean distances.
    """
    X = as_points(X)
    C = getattr(km, "centroids", km)
    D = pairwise_sq_distances(X, C)
    k = D.shape[1]
    counts = np.bincount(hard_assign(D), minlength=k)
    radius = float(np.sqrt(np.max(np.sum(X * X, axis=1))))
    if k < 2:
        return SeparationStats(radius, float(counts.min() / X.shape[0]), float("inf"))
    near = np.sqrt(np.sort(D, axis=1)[:, :2])
    return SeparationStats(radius, float(counts.min() / X.shape[0]), float(np.min(near[:, 1] - near[:, 0])))


def soft_centroid_deviation(X, centroids, sigma, mode: str = "softmax"):
    """Distance from each soft centroid to its hard cell mean at fixed centroids.

    Responsibilities are evaluated at ``centroids`` (shape (k, d) or a stack
    (..., k, d)); the soft centroid ``sum_i r_ij x_i / sum_i r_ij`` is
    compared with the mean of the Voronoi cell ``S_j``. The difference is
    accumulated as ``sum_i (r_ij - 1[i in S_j]) (x_i - mean_j) / sum_i r_ij``
    so that deviations far below machine epsilon are still resolved.

    Returns ``(deviation, mass_ok)``: per-centroid deviations (NaN for empty
    cells) and whether every cell keeps at least half its points' mass,
    ``sum_{i in S_j} r_ij >= |S_j| / 2``.
    """
    X = as_points(X)
    D = pairwise_sq_distances(X, centroids)
    k = D.shape[-1]
    R, _ = responsibilities(D, sigma, mode)
    H = one_hot(hard_assign(D), k)
    own = H > 0
    others = R.sum(axis=-1, keepdims=True) - R
    delta = np.where(own, -others, R)
    counts, sums = H.sum(axis=-2), np.einsum("...nk,nd->...kd", H, X)
    safe = np.where(counts > 0, counts, 1.0)
    means = sums / safe[..., None]
    diff = X[:, None, :] - means[..., None, :, :]
    numer = np.einsum("...nk,...nkd->...kd", delta, diff)
    mass = R.sum(axis=-2)
    dev = np.linalg.norm(numer, axis=-1) / mass
    dev = np.where(counts > 0, dev, np.nan)
    own_mass = np.sum(np.where(own, R, 0.0), axis=-2)
    mass_ok = np.all(own_mass >= counts / 2.0, axis=-1)
    return dev, mass_ok


@dataclass(frozen=True)
class BoundReport:
    mode: str
    sigma: float
    deviation: float
    applicable: bool
    passed: bool | None
    bound: float | None = None
    ratio: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def exponential_bound(stats: SeparationStats, k: int, sigma: float) -> float:
    """``(2R / alpha) (k - 1) exp(-gamma_min^2 / (2 sigma^2))``."""
    return (2.0 * stats.R / stats.alpha) * (k - 1) * math.exp(-(stats.gamma_min ** 2) / (2.0 * sigma * sigma))


def check_bounds(stats: SeparationStats, k: int, sigma: float, deviation: float, mode: str,
                 mass_condition: bool = True) -> BoundReport:
    """Compare a measured max-centroid deviation with the temperature bound for ``mode``.

    softmax: pass/fail against ``exponential_bound``; only applicable when the
    margin and cell fraction are positive and ``mass_condition`` holds.
    entmax15: reports ``deviation / sigma``; its boundedness is judged across
    a schedule by ``entmax_ratio_check``.
    """
    check_mode(mode)
    deviation = float(deviation)
    if mode == "entmax15":
        return BoundReport(mode, sigma, deviation, True, None, ratio=deviation / sigma)
    if stats.gamma_min <= 0 or stats.alpha <= 0:
        return BoundReport(mode, sigma, deviation, False, deviation == 0.0 or None,
                           note="vacuous: zero margin or empty cell")
    if not mass_condition:
        return BoundReport(mode, sigma, deviation, False, deviation == 0.0 or None,
                           note="sigma outside the small-temperature regime (mass condition fails)")
    bound = exponential_bound(stats, k, sigma)
    return BoundReport(mode, sigma, deviation, True, deviation <= bound, bound=bound)


def entmax_ratio_check(sigmas, deviations, max_spread: float = ENTMAX_RATIO_SPREAD) -> dict:
    """Boundedness of ``deviation / sigma`` over the lower half of a schedule.

    Zero deviations satisfy any ``C * sigma`` bound and are counted but left
    out of the max/min spread; the check fails when fewer than two positive
    ratios remain.
    """
    s, dev = lower_half(sigmas, deviations)
    positive = dev > 0
    ratios = dev[positive] / s[positive]
    spread = float(ratios.max() / ratios.min()) if ratios.size >= 2 else float("inf")
    return {
        "points": int(s.size),
        "positive": int(positive.sum()),
        "max_ratio": float(ratios.max()) if ratios.size else 0.0,
        "min_ratio": float(ratios.min()) if ratios.size else 0.0,
        "spread": spread,
        "max_spread": max_spread,
        "passed": bool(ratios.size >= 2 and spread <= max_spread),
    }


def bound_report(cfg: ExperimentConfig) -> dict:
    """Bound checks at every schedule sigma for the fixed-pool K-Means solutions of ``cfg``."""
    X = _dataset(cfg.dataset).points
    _, km = _fixed_kmeans(replace(cfg, protocol="fixed"))
    C = np.stack([r.centroids for r in km])
    stats = [separation_stats(X, c) for c in C]
    rows = []
    for sigma in cfg.schedule:
        dev, mass_ok = soft_centroid_deviation(X, C, sigma, cfg.mode)
        max_dev = np.nanmax(dev, axis=-1)
        reports = [check_bounds(st, cfg.k, sigma, d, cfg.mode, bool(ok)) for st, d, ok in zip(stats, max_dev, mass_ok)]
        row = {"sigma": sigma, "mean_max_deviation": float(np.mean(max_dev)), "runs": len(reports)}
        if cfg.mode == "softmax":
            row.update(
                applicable=sum(r.applicable for r in reports),
                violations=sum(1 for r in reports if r.applicable and not r.passed),
            )
        else:
            row["ratio"] = row["mean_max_deviation"] / sigma
        rows.append(row)
    out = {"dataset": cfg.dataset.kind, "mode": cfg.mode, "k": cfg.k, "per_sigma": rows}
    if cfg.mode == "softmax":
        out["total_violations"] = sum(r["violations"] for r in rows)
    else:
        out["ratio_check"] = entmax_ratio_check(
            [r["sigma"] for r in rows], [r["mean_max_deviation"] for r in rows]
        )
    return out


# -- output -----------------------------------------------------------------

CURVE_COLUMNS = ("protocol", "dataset", "mode", "sigma", "mean_R", "std_R", "max_centroid_dev", "n_runs")


def write_curves_csv(curves, path) -> None:
    """Aggregated curve rows with round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for curve in curves:
            for p in curve.points:
                writer.writerow([curve.protocol, curve.dataset, curve.mode, repr(p.sigma), repr(p.mean),
                                 repr(p.std), repr(p.mean_max_dev), p.discrepancies.size])


def write_runs_csv(curves, path) -> None:
    """Per-trial raw discrepancies, for re-aggregation without re-running."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("protocol", "dataset", "mode", "sigma_index", "sigma", "trial", "discrepancy", "max_centroid_dev"))
        for curve in curves:
            for si, p in enumerate(curve.points):
                for trial, (d, m) in enumerate(zip(p.discrepancies, p.max_centroid_devs)):
                    writer.writerow([curve.protocol, curve.dataset, curve.mode, si, repr(p.sigma), trial,
                                     repr(float(d)), repr(float(m))])


def rate_fits(curve: ConvergenceCurve) -> list[dict]:
    """Full-range and lower-half fits for a curve; a fit that cannot be made records the reason."""
    out = []
    for fit_range in ("full", "lower_half"):
        try:
            rec = loglog_fit(curve, fit_range=fit_range).to_dict()
        except InvalidInputError as exc:
            rec = {"m": None, "b": None, "r2": None, "points_used": 0, "fit_range": fit_range, "error": str(exc)}
        rec["protocol"] = curve.protocol
        out.append(rec)
    return out
