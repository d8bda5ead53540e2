"""Energy-landscape structure learning for event-split multivariate time series."""

from ._core import (
    Domain,
    PchslError,
    PolyHamiltonian,
    central_differences,
    false_recovery_fraction,
    fit_hamiltonian,
    fit_pca,
    fixed_points,
    hmc_sample,
    integrate,
    landscape_distance,
    norm_l2,
    run_pipeline,
    sir,
    tsne,
    __version__,
)

__all__ = [
    "Domain",
    "PchslError",
    "PolyHamiltonian",
    "central_differences",
    "false_recovery_fraction",
    "fit_hamiltonian",
    "fit_pca",
    "fixed_points",
    "hmc_sample",
    "integrate",
    "landscape_distance",
    "norm_l2",
    "run_pipeline",
    "sir",
    "tsne",
    "__version__",
]
