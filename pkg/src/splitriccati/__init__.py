"""Low-rank splitting solver for matrix differential Riccati equations.

Factored Lie and Strang splitting with an exact quadratic flow, a 1D periodic
finite element front-end, dense brute-force oracles, and a convergence-study
harness with CSV / plot-data / figure output.
"""

from .errors import (
    DimensionMismatch,
    Instability,
    InvalidGrid,
    InvalidModeCount,
    NoConvergence,
    NonNestedGrids,
    NotPositiveDefinite,
    RankExplosion,
    SplitRiccatiError,
)
from .flows import (
    CoefficientProblem,
    SchemeConfig,
    Trajectory,
    f_flow,
    g_flow,
    integrate,
    lie_step,
    strang_step,
)
from .linalg import (
    CholeskyFactor,
    SpectralDecomposition,
    SymmetricMatrix,
    cholesky,
    generalized_eigh,
    semigroup_apply,
    weighted_spectral_norm_diff,
)
from .lowrank import LowRankFactor, compress, concat, empty_factor

__version__ = "0.1.0"

__all__ = [
    "CholeskyFactor",
    "CoefficientProblem",
    "DimensionMismatch",
    "Instability",
    "InvalidGrid",
    "InvalidModeCount",
    "LowRankFactor",
    "NoConvergence",
    "NonNestedGrids",
    "NotPositiveDefinite",
    "RankExplosion",
    "SchemeConfig",
    "SpectralDecomposition",
    "SplitRiccatiError",
    "SymmetricMatrix",
    "Trajectory",
    "cholesky",
    "compress",
    "concat",
    "empty_factor",
    "f_flow",
    "g_flow",
    "generalized_eigh",
    "integrate",
    "lie_step",
    "semigroup_apply",
    "strang_step",
    "weighted_spectral_norm_diff",
]
