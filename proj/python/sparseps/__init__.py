"""Sparse propensity-score estimation of a mean with missing outcomes."""

from ._core import (
    ConfigError,
    DataError,
    Dataset,
    SparsePsError,
    __version__,
    dataset_to_csv,
    estimate_lasso,
    estimate_ps,
    fisher_info,
    fit_propensity_mle,
    generate_dataset,
    link_logistic,
    log_likelihood,
    ps_point_estimate,
    read_dataset_csv,
    run_bsps_chain,
    run_monte_carlo,
    run_obsps_chain,
    score,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "SparsePsError",
    "__version__",
    "dataset_to_csv",
    "estimate_lasso",
    "estimate_ps",
    "fisher_info",
    "fit_propensity_mle",
    "generate_dataset",
    "link_logistic",
    "log_likelihood",
    "ps_point_estimate",
    "read_dataset_csv",
    "run_bsps_chain",
    "run_monte_carlo",
    "run_obsps_chain",
    "score",
]
