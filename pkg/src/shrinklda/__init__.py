"""High-dimensional LDA with whitening plus empirical-Bayes mean shrinkage.

Features are decorrelated with the square root of an estimated precision
matrix (independence rule, graphical lasso, LAM split estimator or the true
precision), then the whitened mean difference is estimated by the sample
mean, a kernel Tweedie estimator (NPEB), a grid NPMLE posterior mean, or
hard thresholding.
"""

__version__ = "0.1.0"

from .classifier import (
    DIFF,
    PERGROUP,
    DiscriminantRule,
    LabeledDataset,
    PrecisionWhitener,
    PredictionReport,
    ShrinkageLDA,
    classify,
    evaluate,
    fit_precision,
    fit_rule,
    loocv,
    loocv_grid,
    score,
    whiten,
)
from .exceptions import (
    ConvergenceFailure,
    IngestError,
    InsufficientData,
    InvalidInput,
    NotPositiveDefinite,
    ShapeMismatch,
)
from .precision import (
    GLASSO,
    IR,
    LAM,
    ORACLE,
    GlassoConfig,
    LamConfig,
    PrecisionEstimate,
    estimate_glasso,
    estimate_ir,
    estimate_lam,
    glasso,
    pool_precisions,
)
from .shrinkage import (
    HARD,
    NPEB,
    NPMLE,
    SM,
    MixingDistribution,
    ShrinkageResult,
    npmle_fit,
    posterior_mean,
    shrink,
    shrink_hard_threshold,
    shrink_npeb,
    shrink_npmle,
    shrink_sample_mean,
)

__all__ = [
    "__version__",
    "DIFF", "PERGROUP", "DiscriminantRule", "LabeledDataset", "PrecisionWhitener",
    "PredictionReport", "ShrinkageLDA", "classify", "evaluate", "fit_precision", "fit_rule",
    "loocv", "loocv_grid", "score", "whiten",
    "ConvergenceFailure", "IngestError", "InsufficientData", "InvalidInput",
    "NotPositiveDefinite", "ShapeMismatch",
    "GLASSO", "IR", "LAM", "ORACLE", "GlassoConfig", "LamConfig", "PrecisionEstimate",
    "estimate_glasso", "estimate_ir", "estimate_lam", "glasso", "pool_precisions",
    "HARD", "NPEB", "NPMLE", "SM", "MixingDistribution", "ShrinkageResult", "npmle_fit",
    "posterior_mean", "shrink", "shrink_hard_threshold", "shrink_npeb", "shrink_npmle",
    "shrink_sample_mean",
]
