"""Independent dense references for validating the low-rank machinery.

Everything here works on full n x n matrices and deliberately avoids the
factored code paths: the nonlinear flow is a direct LU solve, the affine flow
integral is a high-resolution trapezoid sum, and the full equation has a
classical RK4 integrator for small, mildly stiff instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import Instability
from .flows import CoefficientProblem
from .linalg import SpectralDecomposition, semigroup_apply

__all__ = [
    "DenseState",
    "dense_g_flow",
    "dense_f_flow",
    "dense_lie_step",
    "dense_strang_step",
    "dense_rk_reference",
    "dre_residual",
    "oracle_check_suite",
]

RK_MAX_SIZE = 32
RK_NORM_LIMIT = 1e8
TRAPEZOID_PANELS = 100_000


@dataclass(frozen=True)
class DenseState:
    """Dense symmetric iterate P at time t."""

    p: np.ndarray
    t: float


def _sym(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def dense_g_flow(p: np.ndarray, s: np.ndarray, t: float) -> np.ndarray:
    """Solve (I + t P S) P' = P by LU with partial pivoting, then symmetrize."""
    if t == 0.0:
        return np.array(p, dtype=float)
    n = p.shape[0]
    return _sym(la.solve(np.eye(n) + t * (p @ s), p))


def dense_f_flow(
    p: np.ndarray,
    decomp: SpectralDecomposition,
    q_factor: np.ndarray,
    t: float,
    panels: int = TRAPEZOID_PANELS,
) -> np.ndarray:
    """Congruence with the semigroup plus a trapezoid sum of the source integral."""
    if t == 0.0:
        return np.array(p, dtype=float)
    q = np.atleast_2d(np.asarray(q_factor, dtype=float))
    if q.shape[0] == 1 and decomp.n > 1:
        q = q.T
    congruence = semigroup_apply(decomp, t, semigroup_apply(decomp, t, p).T).T
    # Batched integrand columns exp((t - s_k) M^{-1} A) q over the panel grid.
    s_grid = np.linspace(0.0, t, panels + 1)
    y = decomp._vtm @ q
    scale = np.exp(np.outer(decomp.eigenvalues, t - s_grid))
    cols = decomp.vectors @ (scale[:, :, None] * y[:, None, :]).reshape(decomp.n, -1)
    weights = np.full(panels + 1, t / panels)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    cols *= np.sqrt(np.repeat(weights, q.shape[1]))
    return _sym(congruence + cols @ cols.T)


def dense_lie_step(problem: CoefficientProblem, p: np.ndarray, tau: float,
                   panels: int = TRAPEZOID_PANELS) -> np.ndarray:
    s = problem.b_factor @ problem.b_factor.T
    return dense_f_flow(dense_g_flow(p, s, tau), problem.decomp, problem.q_factor, tau, panels)


def dense_strang_step(problem: CoefficientProblem, p: np.ndarray, tau: float,
                      panels: int = TRAPEZOID_PANELS) -> np.ndarray:
    s = problem.b_factor @ problem.b_factor.T
    p1 = dense_f_flow(p, problem.decomp, problem.q_factor, 0.5 * tau, panels)
    p2 = dense_g_flow(p1, s, tau)
    return dense_f_flow(p2, problem.decomp, problem.q_factor, 0.5 * tau, panels)


def _standard_form_rhs(problem: CoefficientProblem):
    # D^T = M^{-1} Astiff; the returned closure evaluates the full right-hand side.
    dt = la.solve(problem.mass.a, problem.stiffness.a, assume_a="pos")
    s = problem.b_factor @ problem.b_factor.T
    qq = problem.q_factor @ problem.q_factor.T

    def rhs(p):
        return dt @ p + p @ dt.T + qq - p @ s @ p

    return rhs


def dense_rk_reference(problem: CoefficientProblem, num_steps: int) -> list[DenseState]:
    """Classical RK4 on the full standard-form equation; small instances only.

    Explicit stepping on the unregularized stiff system is only safe when the
    step resolves the fastest mode, hence the size guard and the blow-up check.

    Raises
    ------
    Instability
        If the iterate norm passes 1e8; the caller must shrink the step.
    """
    n = problem.n
    if n > RK_MAX_SIZE:
        raise ValueError(f"RK4 reference is restricted to n <= {RK_MAX_SIZE}, got {n}")
    rhs = _standard_form_rhs(problem)
    tau = problem.horizon / num_steps
    p = problem.z0.dense()
    states = [DenseState(p, 0.0)]
    for k in range(num_steps):
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * tau * k1)
        k3 = rhs(p + 0.5 * tau * k2)
        k4 = rhs(p + tau * k3)
        p = _sym(p + tau / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if la.norm(p, 2) > RK_NORM_LIMIT:
            raise Instability(
                f"iterate norm exceeded {RK_NORM_LIMIT:.0e} at step {k + 1}; "
                "the step size does not resolve the stiffness"
            )
        states.append(DenseState(p, (k + 1) * tau))
    return states


def dre_residual(p_sequence, problem: CoefficientProblem, t_min: float = 0.0) -> float:
    """Central finite-difference residual of the standard-form equation.

    Max over interior grid points (endpoints skipped; the exact solution's
    derivative need not exist at t = 0+) of

        || (P_{k+1} - P_{k-1}) / (2 tau) - rhs(P_k) ||_2.

    Points with t < t_min are additionally excluded.
    """
    mats = [st.p if isinstance(st, DenseState) else np.asarray(st, dtype=float)
            for st in p_sequence]
    if len(mats) < 3:
        raise ValueError("need at least 3 time points for a central difference")
    rhs = _standard_form_rhs(problem)
    tau = problem.horizon / (len(mats) - 1)
    worst = 0.0
    for k in range(1, len(mats) - 1):
        if k * tau < t_min:
            continue
        resid = (mats[k + 1] - mats[k - 1]) / (2.0 * tau) - rhs(mats[k])
        worst = max(worst, la.norm(resid, 2))
    return worst


def oracle_check_suite(seed: int = 2024):
    """Run the oracle-equivalence properties on fresh random instances.

    Returns a list of (name, passed, checks_executed, detail) tuples; detail
    is empty for passing properties. Used by the command-line self-test.
    """
    from . import flows
    from .linalg import SymmetricMatrix
    from .lowrank import LowRankFactor, compress

    rng = np.random.default_rng(seed)
    results = []

    def random_problem(n, rank):
        basis = rng.standard_normal((n, n))
        mass = SymmetricMatrix(basis @ basis.T + n * np.eye(n))
        w = rng.standard_normal((n, n))
        stiffness = SymmetricMatrix(-(w @ w.T) - 0.1 * np.eye(n))
        z0 = LowRankFactor(rng.standard_normal((n, rank)))
        return flows.CoefficientProblem.build(
            mass, stiffness, rng.standard_normal((n, 1)),
            rng.standard_normal((n, 1)), z0, 0.5,
        )

    def run_property(name, fn):
        try:
            count = fn()
            results.append((name, True, count, ""))
        except AssertionError as exc:
            results.append((name, False, 0, str(exc)))

    def check_g_flow_equiv():
        count = 0
        for _ in range(5):
            n = 8
            z = LowRankFactor(rng.standard_normal((n, 3)))
            b = rng.standard_normal((n, 1))
            s = b @ b.T
            t = float(rng.uniform(0.1, 1.0))
            low = flows.g_flow(z, b, t).dense()
            dense = dense_g_flow(z.dense(), s, t)
            err = la.norm(low - dense, 2) / max(la.norm(dense, 2), 1e-30)
            assert err <= 1e-12, f"low-rank vs dense nonlinear flow: {err:.2e}"
            p = z.dense()
            m = 20_000
            dt = t / m
            for _ in range(m):
                k1 = -p @ s @ p
                p1 = p + 0.5 * dt * k1
                k2 = -p1 @ s @ p1
                p2 = p + 0.5 * dt * k2
                k3 = -p2 @ s @ p2
                p3 = p + dt * k3
                k4 = -p3 @ s @ p3
                p = p + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            err = la.norm(low - p, 2) / max(la.norm(p, 2), 1e-30)
            assert err <= 1e-7, f"nonlinear flow vs RK4 substepping: {err:.2e}"
            count += 2
        return count

    def check_f_flow_equiv():
        count = 0
        for _ in range(3):
            problem = random_problem(6, 2)
            t = float(rng.uniform(0.05, 0.3))
            low = flows.f_flow(problem, problem.z0, t, quad_order=8).dense()
            dense = dense_f_flow(problem.z0.dense(), problem.decomp, problem.q_factor, t,
                                 panels=20_000)
            err = la.norm(low - dense, 2) / max(la.norm(dense, 2), 1e-30)
            assert err <= 1e-8, f"low-rank vs dense affine flow: {err:.2e}"
            count += 1
        return count

    def check_step_equiv():
        count = 0
        config = flows.SchemeConfig("lie", 1, quad_order=8)
        for _ in range(3):
            problem = random_problem(8, 2)
            tau = 0.05
            lie_low = flows.lie_step(problem, problem.z0, tau, config).dense()
            lie_dense = dense_lie_step(problem, problem.z0.dense(), tau, panels=20_000)
            err = la.norm(lie_low - lie_dense, 2) / max(la.norm(lie_dense, 2), 1e-30)
            assert err <= 1e-11, f"Lie step vs dense: {err:.2e}"
            strang_low = flows.strang_step(problem, problem.z0, tau, config).dense()
            strang_dense = dense_strang_step(problem, problem.z0.dense(), tau, panels=20_000)
            err = la.norm(strang_low - strang_dense, 2) / max(la.norm(strang_dense, 2), 1e-30)
            assert err <= 1e-11, f"Strang step vs dense: {err:.2e}"
            count += 2
        return count

    def check_composition():
        count = 0
        for _ in range(3):
            n = 6
            z = LowRankFactor(rng.standard_normal((n, 2)))
            b = rng.standard_normal((n, 1))
            s_t, t_t = rng.uniform(0.05, 0.5, size=2)
            once = flows.g_flow(z, b, s_t + t_t).dense()
            twice = flows.g_flow(flows.g_flow(z, b, s_t), b, t_t).dense()
            err = la.norm(once - twice, 2) / max(la.norm(once, 2), 1e-30)
            assert err <= 1e-12, f"nonlinear flow composition: {err:.2e}"
            problem = random_problem(6, 2)
            once = flows.f_flow(problem, problem.z0, s_t + t_t, quad_order=10).dense()
            twice = flows.f_flow(
                problem, flows.f_flow(problem, problem.z0, s_t, quad_order=10),
                t_t, quad_order=10,
            ).dense()
            err = la.norm(once - twice, 2) / max(la.norm(once, 2), 1e-30)
            assert err <= 1e-9, f"affine flow composition: {err:.2e}"
            count += 2
        return count

    def check_norm_bounds():
        count = 0
        for _ in range(5):
            n = 8
            z = LowRankFactor(rng.standard_normal((n, 3)))
            b = rng.standard_normal((n, 1))
            rho = z.norm()
            s_norm = float(la.norm(b @ b.T, 2))
            for t in (0.0, 0.1, 0.7):
                out = flows.g_flow(z, b, t).norm()
                bound = (1.0 + t * rho * s_norm) * rho
                assert out <= bound * (1 + 1e-12), f"norm bound violated: {out} > {bound}"
                assert out <= rho * (1 + 1e-12), f"monotonicity violated: {out} > {rho}"
                count += 2
        return count

    def check_compress_bound():
        count = 0
        for _ in range(5):
            n, r = 20, 8
            z = LowRankFactor(rng.standard_normal((n, r)) * 10.0 ** -rng.integers(0, 8, r))
            tol = 1e-10
            zc = compress(z, tol)
            sigma1_sq = z.norm()
            err = la.norm(z.dense() - zc.dense(), 2)
            assert err <= 2 * tol * sigma1_sq + 1e-13 * sigma1_sq, (
                f"compression perturbation {err:.2e} above bound"
            )
            assert zc.rank <= z.rank
            count += 2
        return count

    run_property("nonlinear flow: low-rank vs dense vs RK4", check_g_flow_equiv)
    run_property("affine flow: low-rank vs dense quadrature", check_f_flow_equiv)
    run_property("splitting steps: low-rank vs dense", check_step_equiv)
    run_property("flow composition laws", check_composition)
    run_property("nonlinear flow norm bounds", check_norm_bounds)
    run_property("compression perturbation bound", check_compress_bound)
    return results
