"""Personal health mention classification with figurative usage features."""

from figphm._core import (
    ConfigError,
    DataError,
    classify,
    cohen_kappa,
    compute_metrics,
    cosine,
    figurative_verdicts,
    literal_usage_score,
    render_report,
    retrofit,
    run_experiment,
    stratified_kfold,
    tokenize,
)

__all__ = [
    "ConfigError",
    "DataError",
    "classify",
    "cohen_kappa",
    "compute_metrics",
    "cosine",
    "figurative_verdicts",
    "literal_usage_score",
    "render_report",
    "retrofit",
    "run_experiment",
    "stratified_kfold",
    "tokenize",
]
