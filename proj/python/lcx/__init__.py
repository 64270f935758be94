# SPDX-License-Identifier: Apache-2.0
"""Learning-curve extrapolation with a prior-fitted transformer and an MCMC baseline."""

from ._lcx import (
    ChainConfig,
    ConfigError,
    IoError,
    LcxError,
    NormalizationSpec,
    NumericError,
    PPD,
    Predictor,
    commands,
    cutoff_index,
    denormalize,
    normalize,
    predict,
    rank_aggregate,
    sample_prior,
    score,
    simulate,
    subsample,
)

__all__ = [
    "ChainConfig",
    "ConfigError",
    "IoError",
    "LcxError",
    "NormalizationSpec",
    "NumericError",
    "PPD",
    "Predictor",
    "commands",
    "cutoff_index",
    "denormalize",
    "normalize",
    "predict",
    "rank_aggregate",
    "sample_prior",
    "score",
    "simulate",
    "subsample",
]
