"""Low-rank factor representation P = Z Z^T and its rank-control operations.

Keeping a single tall factor (no signed core) makes every represented matrix
symmetric positive semidefinite by construction; the subproblem flows preserve
positivity, so an indefinite core is never needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch

__all__ = ["LowRankFactor", "empty_factor", "concat", "compress"]


@dataclass(frozen=True)
class LowRankFactor:
    """Tall matrix Z of shape (n, r) representing P = Z Z^T."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2:
            raise DimensionMismatch(f"factor must be 2-d, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ValueError("factor contains NaN or Inf entries")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def rank(self) -> int:
        return self.z.shape[1]

    def dense(self) -> np.ndarray:
        """Expand to the represented n x n matrix Z Z^T (testing/small n only)."""
        return self.z @ self.z.T

    def norm(self) -> float:
        """Spectral norm of the represented matrix, i.e. sigma_max(Z)^2."""
        if self.rank == 0:
            return 0.0
        gram = self.z.T @ self.z
        return float(np.max(la.eigvalsh(gram)))


def empty_factor(n: int) -> LowRankFactor:
    """Rank-0 factor representing the n x n zero matrix."""
    return LowRankFactor(np.zeros((n, 0)))


def concat(z1: LowRankFactor, z2: LowRankFactor) -> LowRankFactor:
    """Column concatenation; represents Z1 Z1^T + Z2 Z2^T exactly."""
    if z1.n != z2.n:
        raise DimensionMismatch(f"row counts differ: {z1.n} vs {z2.n}")
    return LowRankFactor(np.hstack([z1.z, z2.z]))


def compress(z: LowRankFactor, tol: float) -> LowRankFactor:
    """Drop directions with singular values at or below tol * sigma_1.

    Thin QR of Z followed by an SVD of the small triangular factor; retained
    columns are Q U_r diag(sigma_r). The represented matrix changes by at most
    2 tol sigma_1^2 + O(tol^2) in spectral norm and the rank never increases.
    A zero factor compresses to rank 0.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError(f"tolerance must be in (0, 1), got {tol}")
    if z.rank == 0:
        return z
    q, r = la.qr(z.z, mode="economic")
    u, s, _ = la.svd(r)
    if s.size == 0 or s[0] == 0.0:
        return empty_factor(z.n)
    keep = s > tol * s[0]
    k = int(np.count_nonzero(keep))
    if k == 0:
        return empty_factor(z.n)
    return LowRankFactor(q @ (u[:, :k] * s[:k]))
