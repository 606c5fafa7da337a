"""Exception types shared across the package."""


class SplitRiccatiError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(SplitRiccatiError):
    """Operands have incompatible shapes."""


class NotPositiveDefinite(SplitRiccatiError):
    """A matrix required to be positive definite is not."""


class NoConvergence(SplitRiccatiError):
    """An iterative eigensolver failed to converge."""


class RankExplosion(SplitRiccatiError):
    """A trajectory factor exceeded the configured rank cap."""


class InvalidGrid(SplitRiccatiError):
    """A periodic grid parameter is out of range."""


class InvalidModeCount(SplitRiccatiError):
    """Requested Fourier mode count is not resolvable on the grid."""


class NonNestedGrids(SplitRiccatiError):
    """Grid transfer requires the fine node count to be a multiple of the coarse one."""


class Instability(SplitRiccatiError):
    """An explicit integrator blew up; the step size is too large for the problem."""
