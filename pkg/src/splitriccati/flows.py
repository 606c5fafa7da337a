"""Subproblem flows and splitting steppers in low-rank factored form.

The matrix Riccati equation with mass matrices is transformed once to the
standard form

    dP/dt = D^T P + P D + q q^T - P (B B^T) P,   D = Astiff M^{-1},

so both flows act in plain coefficient space and share a single cached
generalized eigendecomposition of (Astiff, M). The affine flow is the
semigroup congruence plus a quadrature of the constant-source integral; the
quadratic flow is exact via the push-through identity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as la

from .errors import DimensionMismatch, NotPositiveDefinite, RankExplosion
from .linalg import (
    CholeskyFactor,
    SpectralDecomposition,
    SymmetricMatrix,
    cholesky,
    generalized_eigh,
    semigroup_apply,
)
from .lowrank import LowRankFactor, compress, concat

__all__ = [
    "CoefficientProblem",
    "SchemeConfig",
    "Trajectory",
    "g_flow",
    "f_flow",
    "lie_step",
    "strang_step",
    "integrate",
    "iterate_factors",
]

SCHEMES = ("lie", "strang")


@dataclass(frozen=True)
class CoefficientProblem:
    """Standard-form Riccati data in coefficient space.

    Attributes
    ----------
    mass, stiffness
        Galerkin mass matrix M and Laplacian form Astiff.
    decomp
        Generalized eigendecomposition of (Astiff, M) driving all
        exponential actions.
    b_factor
        n x m control factor; the quadratic term is P (b_factor b_factor^T) P.
    q_factor
        n x p source factor M^{-1} E^T; the constant term is q q^T.
    z0
        Low-rank factor of the initial coefficient matrix.
    horizon
        Final time T.
    mass_chol
        Cholesky factor of M, used by the weighted error norm.
    """

    mass: SymmetricMatrix
    stiffness: SymmetricMatrix
    decomp: SpectralDecomposition
    b_factor: np.ndarray
    q_factor: np.ndarray
    z0: LowRankFactor
    horizon: float
    mass_chol: CholeskyFactor

    def __post_init__(self):
        n = self.mass.n
        b = np.atleast_2d(np.asarray(self.b_factor, dtype=float))
        q = np.atleast_2d(np.asarray(self.q_factor, dtype=float))
        if b.shape[0] == 1 and n > 1:
            b = b.T
        if q.shape[0] == 1 and n > 1:
            q = q.T
        for name, arr in (("b_factor", b), ("q_factor", q)):
            if arr.shape[0] != n:
                raise DimensionMismatch(f"{name} has {arr.shape[0]} rows, expected {n}")
            arr.setflags(write=False)
        if self.z0.n != n:
            raise DimensionMismatch(f"z0 has {self.z0.n} rows, expected {n}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "b_factor", b)
        object.__setattr__(self, "q_factor", q)

    @property
    def n(self) -> int:
        return self.mass.n

    @classmethod
    def build(cls, mass, stiffness, b_factor, q_factor, z0, horizon) -> "CoefficientProblem":
        """Assemble the cached decomposition and mass Cholesky factor."""
        decomp = generalized_eigh(stiffness, mass)
        return cls(
            mass=mass,
            stiffness=stiffness,
            decomp=decomp,
            b_factor=b_factor,
            q_factor=q_factor,
            z0=z0,
            horizon=horizon,
            mass_chol=cholesky(mass),
        )

    def with_initial(self, z0: LowRankFactor) -> "CoefficientProblem":
        return replace(self, z0=z0)


@dataclass(frozen=True)
class SchemeConfig:
    """Stepper selection and resolution knobs.

    The step size is horizon / num_steps. quad_order Gauss-Legendre nodes
    resolve the affine flow's source integral; order 6 keeps quadrature error
    far below the splitting error at every tested step size.
    """

    scheme: str
    num_steps: int
    quad_order: int = 6
    compress_tol: float = 1e-15
    rank_cap: int = 2000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.quad_order < 2:
            raise ValueError(f"quad_order must be >= 2, got {self.quad_order}")
        if not 0.0 < self.compress_tol < 1.0:
            raise ValueError(f"compress_tol must be in (0, 1), got {self.compress_tol}")


@dataclass(frozen=True)
class Trajectory:
    """Factors at t = 0, tau, ..., T and the rank recorded at each step."""

    factors: list
    ranks: list

    @property
    def num_steps(self) -> int:
        return len(self.factors) - 1

    @property
    def max_rank(self) -> int:
        return max(self.ranks)


def g_flow(z: LowRankFactor, b_factor: np.ndarray, t: float) -> LowRankFactor:
    """Exact flow of dP/dt = -P S P, S = b_factor b_factor^T, over time t.

    With K = Z^T b_factor and C the Cholesky factor of I + t K K^T, the new
    factor is Z C^{-T}; the push-through identity makes this represent
    (I + t Z Z^T S)^{-1} Z Z^T. Rank never grows and positivity is structural.
    """
    if t < 0:
        raise NotPositiveDefinite(f"nonlinear flow needs t >= 0, got {t}")
    if t == 0.0 or z.rank == 0:
        return z
    b = np.atleast_2d(np.asarray(b_factor, dtype=float))
    if b.shape[0] == 1 and z.n > 1:
        b = b.T
    if b.shape[0] != z.n:
        raise DimensionMismatch(f"b_factor has {b.shape[0]} rows, factor has {z.n}")
    k = z.z.T @ b
    small = np.eye(z.rank) + t * (k @ k.T)
    c = la.cholesky(small, lower=True)
    return LowRankFactor(la.solve_triangular(c, z.z.T, lower=True).T)


def f_flow(
    problem: CoefficientProblem,
    z: LowRankFactor,
    t: float,
    quad_order: int = 6,
    compress_tol: float = 1e-15,
) -> LowRankFactor:
    """Flow of dP/dt = D^T P + P D + q q^T over time t, factored.

    The congruence part propagates the factor columns through the semigroup;
    the source integral int_0^t exp((t-s) D^T) q q^T exp((t-s) D) ds is
    replaced by Gauss-Legendre columns sqrt(w_i) exp((t-s_i) D^T) q. The
    concatenated factor is compressed, since this is the only place where
    rank grows.
    """
    if t < 0:
        raise ValueError(f"affine flow needs t >= 0, got {t}")
    if t == 0.0:
        return z
    propagated = LowRankFactor(semigroup_apply(problem.decomp, t, z.z))
    source = LowRankFactor(_source_columns(problem.decomp, problem.q_factor, t, quad_order))
    return compress(concat(propagated, source), compress_tol)


def _source_columns(decomp: SpectralDecomposition, q_factor, t, quad_order):
    # One n x n multiply for all quadrature nodes: scale V^T M q in the
    # eigenbasis per node, then map back through V.
    x, w = np.polynomial.legendre.leggauss(quad_order)
    s = 0.5 * t * (x + 1.0)
    w = 0.5 * t * w
    y = decomp._vtm @ q_factor
    lam = decomp.eigenvalues
    blocks = [
        np.sqrt(wi) * (np.exp((t - si) * lam)[:, None] * y) for si, wi in zip(s, w)
    ]
    return decomp.vectors @ np.hstack(blocks)


def lie_step(problem: CoefficientProblem, z: LowRankFactor, tau: float, config: SchemeConfig) -> LowRankFactor:
    """One first-order step: quadratic flow over tau, then affine flow over tau."""
    zg = g_flow(z, problem.b_factor, tau)
    return f_flow(problem, zg, tau, config.quad_order, config.compress_tol)


def strang_step(problem: CoefficientProblem, z: LowRankFactor, tau: float, config: SchemeConfig) -> LowRankFactor:
    """One symmetric second-order step: affine tau/2, quadratic tau, affine tau/2."""
    z1 = f_flow(problem, z, 0.5 * tau, config.quad_order, config.compress_tol)
    z2 = g_flow(z1, problem.b_factor, tau)
    return f_flow(problem, z2, 0.5 * tau, config.quad_order, config.compress_tol)


def iterate_factors(problem: CoefficientProblem, config: SchemeConfig):
    """Yield (step index, factor) pairs from 0 to num_steps.

    Streaming form of :func:`integrate`; callers that only need a subsample
    (reference trajectories, folded error norms) avoid storing every factor.
    """
    z = problem.z0
    yield 0, z
    tau = problem.horizon / config.num_steps
    step = lie_step if config.scheme == "lie" else strang_step
    for n in range(config.num_steps):
        z = step(problem, z, tau, config)
        if z.rank > config.rank_cap:
            raise RankExplosion(
                f"rank {z.rank} exceeded cap {config.rank_cap} at step {n + 1}; "
                "check the compression tolerance"
            )
        yield n + 1, z


def integrate(problem: CoefficientProblem, config: SchemeConfig) -> Trajectory:
    """Run the configured scheme over the whole horizon, keeping every factor."""
    factors = [z for _, z in iterate_factors(problem, config)]
    return Trajectory(factors, [z.rank for z in factors])
