"""Dense symmetric linear algebra primitives.

Cholesky factorization, generalized symmetric eigendecomposition, semigroup
(matrix exponential) actions on tall-skinny blocks, and spectral norms of
differences of low-rank factored matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

__all__ = [
    "SymmetricMatrix",
    "CholeskyFactor",
    "SpectralDecomposition",
    "cholesky",
    "generalized_eigh",
    "semigroup_apply",
    "weighted_spectral_norm_diff",
]

# Relative threshold below which generalized eigenvalues are snapped to zero,
# so null-space modes stay exactly invariant under long semigroup trajectories.
EIGENVALUE_CLIP = 1e-12


@dataclass(frozen=True)
class SymmetricMatrix:
    """Dense real symmetric matrix, symmetrized on construction.

    Assembly and accumulated arithmetic leave roundoff-level asymmetry that
    downstream symmetric eigensolvers must not see, so ``(X + X^T)/2`` is
    applied once here.
    """

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with positive diagonal, L L^T = original matrix."""

    l: np.ndarray

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float)
        l.setflags(write=False)
        object.__setattr__(self, "l", l)

    @property
    def n(self) -> int:
        return self.l.shape[0]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Generalized symmetric eigensystem A V = M V diag(w) with V^T M V = I.

    Eigenvalues are ascending. One decomposition per spatial grid is computed
    and cached by callers; every exponential action reuses it, so a single
    O(n^3) factorization amortizes over thousands of O(n^2 r) applications.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    mass: SymmetricMatrix
    # V^T M precomputed; semigroup_apply needs it on every call.
    _vtm: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        w = np.asarray(self.eigenvalues, dtype=float)
        v = np.asarray(self.vectors, dtype=float)
        w.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "eigenvalues", w)
        object.__setattr__(self, "vectors", v)
        if self._vtm is None:
            vtm = v.T @ self.mass.a
            vtm.setflags(write=False)
            object.__setattr__(self, "_vtm", vtm)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]


def cholesky(m: SymmetricMatrix) -> CholeskyFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If a non-positive pivot is encountered.
    """
    try:
        l = la.cholesky(m.a, lower=True)
    except la.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return CholeskyFactor(l)


def generalized_eigh(a: SymmetricMatrix, m: SymmetricMatrix) -> SpectralDecomposition:
    """Solve the generalized symmetric eigenproblem A v = w M v.

    M must be positive definite. Returned eigenvalues are ascending and the
    eigenvectors are M-orthonormal. Eigenvalues within ``EIGENVALUE_CLIP``
    (relative to the largest magnitude) are snapped to exactly zero.

    Raises
    ------
    DimensionMismatch
        If A and M have different sizes.
    NotPositiveDefinite
        If M fails its Cholesky factorization.
    NoConvergence
        If the symmetric eigensolver does not converge.
    """
    if a.n != m.n:
        raise DimensionMismatch(f"A is {a.n}x{a.n} but M is {m.n}x{m.n}")
    try:
        w, v = la.eigh(a.a, m.a)
    except la.LinAlgError as exc:
        msg = str(exc)
        if "positive definite" in msg or "leading minor" in msg:
            raise NotPositiveDefinite(msg) from exc
        raise NoConvergence(msg) from exc
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale > 0.0:
        w = np.where(np.abs(w) <= EIGENVALUE_CLIP * scale, 0.0, w)
    return SpectralDecomposition(w, v, m)


def semigroup_apply(decomp: SpectralDecomposition, t: float, x: np.ndarray) -> np.ndarray:
    """Apply exp(t M^{-1} A) to the columns of x.

    Computed as V diag(exp(t w)) V^T M x. For t == 0 the input is returned
    unchanged (exact semigroup identity, no roundoff).
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != decomp.n:
        raise DimensionMismatch(
            f"operand has {x.shape[0]} rows, decomposition is for n={decomp.n}"
        )
    if t == 0.0:
        return x
    y = decomp._vtm @ x
    y = np.exp(t * decomp.eigenvalues)[:, None] * y
    return decomp.vectors @ y


def weighted_spectral_norm_diff(z1, z2, lm: CholeskyFactor) -> float:
    """Spectral norm of L^T (Z1 Z1^T - Z2 Z2^T) L without dense n x n products.

    Builds W = [L^T Z1, L^T Z2] with signature D = diag(+I, -I), takes a thin
    QR of W and returns the largest absolute eigenvalue of R D R^T, which is
    (r1+r2) x (r1+r2).
    """
    a1 = z1.z if hasattr(z1, "z") else np.asarray(z1, dtype=float)
    a2 = z2.z if hasattr(z2, "z") else np.asarray(z2, dtype=float)
    n = lm.n
    if a1.shape[0] != n or a2.shape[0] != n:
        raise DimensionMismatch(
            f"factors have {a1.shape[0]} and {a2.shape[0]} rows, weight is {n}x{n}"
        )
    r1 = a1.shape[1]
    r2 = a2.shape[1]
    if r1 + r2 == 0:
        return 0.0
    w = lm.l.T @ np.hstack([a1, a2])
    r = la.qr(w, mode="economic")[1]
    signs = np.concatenate([np.ones(r1), -np.ones(r2)])
    core = r @ (signs[:, None] * r.T)
    core = 0.5 * (core + core.T)
    ev = la.eigvalsh(core)
    return float(np.max(np.abs(ev))) if ev.size else 0.0
