"""Hard K-Means, SoftRBF clustering with softmax and entmax-1.5
responsibilities, and tools for measuring how soft centroids approach
K-Means fixed points as the temperature goes to zero."""
from ._validation import InvalidInputError
from .assign import entmax15, entmax_threshold, hard_assign, one_hot, responsibilities
from .cluster import (
    GradientStats,
    KMeansResult,
    SoftRBFResult,
    hard_distortion,
    kmeans,
    kmeans_plusplus_init,
    random_init,
    soft_distortion,
    softrbf_fit,
    softrbf_step,
)
from .estimators import LloydKMeans, SoftRBFClustering
from .evalharness import (
    ConvergenceCurve,
    ExperimentConfig,
    RateFit,
    check_bounds,
    loglog_fit,
    run_experiment,
    run_fixed_init,
    run_grid,
    run_resampled,
    separation_stats,
    sigma_schedule,
)
from .geometry import Dataset, centroid_set_distance, optimal_permutation_match, pairwise_sq_distances
from .synthdata import GenSpec, generate, load_csv, save_csv

__version__ = "0.1.0"

__all__ = [
    "ConvergenceCurve",
    "Dataset",
    "ExperimentConfig",
    "GenSpec",
    "GradientStats",
    "InvalidInputError",
    "KMeansResult",
    "LloydKMeans",
    "RateFit",
    "SoftRBFClustering",
    "SoftRBFResult",
    "centroid_set_distance",
    "check_bounds",
    "entmax15",
    "entmax_threshold",
    "generate",
    "hard_assign",
    "hard_distortion",
    "kmeans",
    "kmeans_plusplus_init",
    "load_csv",
    "loglog_fit",
    "one_hot",
    "optimal_permutation_match",
    "pairwise_sq_distances",
    "random_init",
    "responsibilities",
    "run_experiment",
    "run_fixed_init",
    "run_grid",
    "run_resampled",
    "save_csv",
    "separation_stats",
    "sigma_schedule",
    "soft_distortion",
    "softrbf_fit",
    "softrbf_step",
    "__version__",
]
