"""Sparse Kronecker-product covariance estimation (KGlasso, flip-flop, Glasso)."""

__version__ = "0.1.0"

from .errors import (AsymmetricMatrix, DimensionGuard, DimensionMismatch, InvalidTarget,
                     KroncovError, MaxSweepsExceeded, NotPositiveDefinite, SampleSizeTooSmall)
from .estimators import (EstimateResult, PenaltyPlan, compress_A, compress_B, ff_estimate,
                         ff_thres, glasso_full, kglasso, objective_J, schedule, scm)
from .glasso import GlassoOptions, GlassoResult, glasso_oracle, glasso_solve
from .sampler import KroneckerModel, SampleCov, make_model, sample_cov, sample_matrix_normal

__all__ = [
    "AsymmetricMatrix", "DimensionGuard", "DimensionMismatch", "InvalidTarget", "KroncovError",
    "MaxSweepsExceeded", "NotPositiveDefinite", "SampleSizeTooSmall",
    "EstimateResult", "PenaltyPlan", "compress_A", "compress_B", "ff_estimate", "ff_thres",
    "glasso_full", "kglasso", "objective_J", "schedule", "scm",
    "GlassoOptions", "GlassoResult", "glasso_oracle", "glasso_solve",
    "KroneckerModel", "SampleCov", "make_model", "sample_cov", "sample_matrix_normal",
]
