import numpy as np
import pytest
import scipy.linalg as la

from splitriccati.errors import DimensionMismatch, NotPositiveDefinite
from splitriccati.fem import assemble_periodic_p1
from splitriccati.linalg import (
    CholeskyFactor,
    SymmetricMatrix,
    cholesky,
    generalized_eigh,
    semigroup_apply,
    weighted_spectral_norm_diff,
)
from splitriccati.lowrank import LowRankFactor

from conftest import random_spd


def test_symmetric_matrix_symmetrizes():
    m = SymmetricMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(m.a, m.a.T)
    assert m.a[0, 1] == 1.0


def test_cholesky_identity():
    l = cholesky(SymmetricMatrix(np.eye(3)))
    np.testing.assert_array_equal(l.l, np.eye(3))


def test_cholesky_diagonal():
    l = cholesky(SymmetricMatrix(np.diag([4.0, 9.0])))
    np.testing.assert_allclose(l.l, np.diag([2.0, 3.0]))


def test_cholesky_periodic_mass_roundtrip():
    m, _ = assemble_periodic_p1(4)
    np.testing.assert_allclose(m.a[0], [1 / 6, 1 / 24, 0.0, 1 / 24], atol=1e-15)
    l = cholesky(m)
    np.testing.assert_allclose(l.l @ l.l.T, m.a, atol=1e-14)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky(SymmetricMatrix(np.diag([1.0, -1.0])))


def test_cholesky_residual_random_spd(rng):
    for _ in range(20):
        n = int(rng.integers(2, 30))
        m = random_spd(rng, n)
        l = cholesky(m)
        resid = np.max(np.abs(l.l @ l.l.T - m.a))
        assert resid <= 1e-12 * np.max(np.abs(m.a))


def test_generalized_eigh_diagonal():
    d = generalized_eigh(SymmetricMatrix(np.diag([-1.0, -2.0])), SymmetricMatrix(np.eye(2)))
    np.testing.assert_allclose(d.eigenvalues, [-2.0, -1.0])
    np.testing.assert_allclose(np.abs(d.vectors), [[0.0, 1.0], [1.0, 0.0]], atol=1e-14)


def test_generalized_eigh_periodic_kernel():
    m, a = assemble_periodic_p1(8)
    d = generalized_eigh(a, m)
    assert d.eigenvalues[-1] == 0.0
    assert np.all(d.eigenvalues[:-1] < 0)
    # kernel is the constant vector
    v = d.vectors[:, -1]
    np.testing.assert_allclose(v, np.full(8, v[0]), atol=1e-10)


def test_generalized_eigh_matches_rayleigh_quotients():
    m, a = assemble_periodic_p1(16)
    d = generalized_eigh(a, m)
    for i in range(16):
        v = d.vectors[:, i]
        rayleigh = (v @ a.a @ v) / (v @ m.a @ v)
        np.testing.assert_allclose(d.eigenvalues[i], rayleigh, atol=1e-8 * np.abs(a.a).max())


def test_generalized_eigh_invariants(rng):
    for _ in range(10):
        n = int(rng.integers(3, 25))
        m = random_spd(rng, n)
        w = rng.standard_normal((n, n))
        a = SymmetricMatrix(0.5 * (w + w.T))
        d = generalized_eigh(a, m)
        assert np.all(np.diff(d.eigenvalues) >= 0)
        resid = a.a @ d.vectors - m.a @ d.vectors * d.eigenvalues
        assert np.max(np.abs(resid)) <= 1e-10 * la.norm(a.a, 2)
        gram = d.vectors.T @ m.a @ d.vectors
        assert np.max(np.abs(gram - np.eye(n))) <= 1e-10


def test_generalized_eigh_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        generalized_eigh(SymmetricMatrix(np.eye(2)), SymmetricMatrix(np.eye(3)))


def test_semigroup_identity_at_time_zero(rng):
    m, a = assemble_periodic_p1(8)
    d = generalized_eigh(a, m)
    x = rng.standard_normal((8, 3))
    out = semigroup_apply(d, 0.0, x)
    np.testing.assert_array_equal(out, x)


def test_semigroup_scalar_decay():
    d = generalized_eigh(SymmetricMatrix(np.array([[-1.0]])), SymmetricMatrix(np.eye(1)))
    out = semigroup_apply(d, 1.0, np.array([[1.0]]))
    np.testing.assert_allclose(out, [[np.exp(-1.0)]])


def test_semigroup_preserves_null_mode():
    m, a = assemble_periodic_p1(8)
    d = generalized_eigh(a, m)
    ones = np.ones((8, 1))
    for t in (0.3, 2.0, 17.0):
        np.testing.assert_allclose(semigroup_apply(d, t, ones), ones, atol=1e-12)


def test_semigroup_composition(rng):
    for _ in range(5):
        n = int(rng.integers(2, 15))
        m = random_spd(rng, n)
        w = rng.standard_normal((n, n))
        a = SymmetricMatrix(-(w @ w.T))
        d = generalized_eigh(a, m)
        x = rng.standard_normal((n, 2))
        s, t = rng.uniform(0.05, 0.8, size=2)
        once = semigroup_apply(d, s + t, x)
        twice = semigroup_apply(d, s, semigroup_apply(d, t, x))
        np.testing.assert_allclose(twice, once, rtol=1e-10, atol=1e-12 * np.abs(once).max())


def test_semigroup_weighted_contraction(rng):
    m, a = assemble_periodic_p1(16)
    d = generalized_eigh(a, m)
    l = cholesky(m)
    x = rng.standard_normal((16, 4))
    base = la.norm(l.l.T @ x)
    for t in (0.01, 0.1, 1.0):
        assert la.norm(l.l.T @ semigroup_apply(d, t, x)) <= base * (1 + 1e-12)


def test_semigroup_dimension_mismatch():
    m, a = assemble_periodic_p1(8)
    d = generalized_eigh(a, m)
    with pytest.raises(DimensionMismatch):
        semigroup_apply(d, 1.0, np.zeros((5, 1)))


def test_weighted_norm_identical_factors(rng):
    z = LowRankFactor(rng.standard_normal((6, 2)))
    l = CholeskyFactor(np.eye(6))
    assert weighted_spectral_norm_diff(z, z, l) <= 1e-14 * z.norm()


def test_weighted_norm_orthogonal_rank_one():
    z1 = LowRankFactor(np.array([[1.0], [0.0]]))
    z2 = LowRankFactor(np.array([[0.0], [1.0]]))
    l = CholeskyFactor(np.eye(2))
    np.testing.assert_allclose(weighted_spectral_norm_diff(z1, z2, l), 1.0)


def dense_weighted_norm(z1, z2, l):
    diff = l.l.T @ (z1.dense() - z2.dense()) @ l.l
    return np.max(np.abs(la.eigvalsh(0.5 * (diff + diff.T))))


def test_weighted_norm_matches_dense_oracle(rng):
    m = random_spd(rng, 6)
    l = cholesky(m)
    z1 = LowRankFactor(rng.standard_normal((6, 3)))
    z2 = LowRankFactor(rng.standard_normal((6, 2)))
    fast = weighted_spectral_norm_diff(z1, z2, l)
    np.testing.assert_allclose(fast, dense_weighted_norm(z1, z2, l), rtol=1e-12)


def test_weighted_norm_dense_oracle_property(rng):
    for _ in range(15):
        n = int(rng.integers(2, 50))
        m = random_spd(rng, n)
        l = cholesky(m)
        z1 = LowRankFactor(rng.standard_normal((n, int(rng.integers(1, 6)))))
        z2 = LowRankFactor(rng.standard_normal((n, int(rng.integers(1, 6)))))
        fast = weighted_spectral_norm_diff(z1, z2, l)
        dense = dense_weighted_norm(z1, z2, l)
        np.testing.assert_allclose(fast, dense, rtol=1e-12, atol=1e-14)


def test_weighted_norm_dimension_mismatch(rng):
    l = cholesky(random_spd(rng, 4))
    z = LowRankFactor(rng.standard_normal((5, 2)))
    with pytest.raises(DimensionMismatch):
        weighted_spectral_norm_diff(z, z, l)
