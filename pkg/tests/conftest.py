import numpy as np
import pytest

from splitriccati.flows import CoefficientProblem
from splitriccati.linalg import SymmetricMatrix
from splitriccati.lowrank import LowRankFactor


def random_spd(rng, n, spread=1.0):
    basis = rng.standard_normal((n, n))
    return SymmetricMatrix(basis @ basis.T * spread + n * np.eye(n))


def random_problem(rng, n, rank=2, horizon=0.5):
    """Small standard-form problem with a stable symmetric generator."""
    mass = random_spd(rng, n)
    w = rng.standard_normal((n, n))
    stiffness = SymmetricMatrix(-(w @ w.T) - 0.1 * np.eye(n))
    z0 = LowRankFactor(rng.standard_normal((n, rank)))
    return CoefficientProblem.build(
        mass, stiffness,
        rng.standard_normal((n, 1)), rng.standard_normal((n, 1)),
        z0, horizon,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
