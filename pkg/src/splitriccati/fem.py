"""1D periodic piecewise-linear finite element front-end.

Mass/stiffness assembly on the unit interval with wraparound, random test
functions of prescribed Sobolev regularity built from weighted Fourier series,
L2 projection between nested grids, and the rank-one coefficient factors the
control problem needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg as la

from .errors import InvalidGrid, InvalidModeCount, NonNestedGrids
from .linalg import SymmetricMatrix
from .lowrank import LowRankFactor

__all__ = [
    "PeriodicGrid",
    "SampledFunction",
    "REGULARITY_BETA",
    "assemble_periodic_p1",
    "fourier_series_values",
    "sample_q_wiener",
    "project_to_grid",
    "build_load_vector",
    "build_p0_factor",
    "write_sampled_function",
    "read_sampled_function",
]

# Covariance decay q_j = j^(-beta) per regularity class. The exponents sit
# just above 2r + 1 so the series lands in H^r but in no materially higher
# space; H0 samples must stay rough under refinement.
REGULARITY_BETA = {"H2per": 5.1, "H0": 1.1}


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid x_i = i/Nh, i = 0..Nh-1, on (0, 1) with wraparound."""

    nh: int

    def __post_init__(self):
        if self.nh < 2:
            raise InvalidGrid(f"need at least 2 nodes, got {self.nh}")

    @property
    def h(self) -> float:
        return 1.0 / self.nh

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.nh) / self.nh


@dataclass(frozen=True)
class SampledFunction:
    """Nodal values of a random test function, tagged with its provenance."""

    grid: PeriodicGrid
    values: np.ndarray
    regularity: str
    seed: int
    modes: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.nh,):
            raise InvalidGrid(
                f"values have shape {v.shape}, grid has {self.grid.nh} nodes"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("sampled function contains NaN or Inf")
        if self.regularity not in REGULARITY_BETA:
            raise ValueError(f"unknown regularity class {self.regularity!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@lru_cache(maxsize=None)
def _assemble_cached(nh: int):
    h = 1.0 / nh
    mass_row = np.zeros(nh)
    mass_row[0] = 2.0 * h / 3.0
    mass_row[1] = h / 6.0
    mass_row[-1] = h / 6.0
    stiff_row = np.zeros(nh)
    stiff_row[0] = -2.0 / h
    stiff_row[1] = 1.0 / h
    stiff_row[-1] = 1.0 / h
    m = SymmetricMatrix(la.circulant(mass_row))
    a = SymmetricMatrix(la.circulant(stiff_row))
    return m, a


def assemble_periodic_p1(nh: int) -> tuple[SymmetricMatrix, SymmetricMatrix]:
    """Mass matrix and Galerkin Laplacian for P1 hats on the periodic grid.

    Both are circulant: M has first row (2h/3, h/6, 0, ..., h/6) and the
    stiffness matrix (the form <Laplacian phi_j, phi_i> = -int phi_j' phi_i')
    has first row (-2/h, 1/h, 0, ..., 1/h). Cached per node count.
    """
    if nh < 3:
        raise InvalidGrid(f"assembly needs at least 3 nodes, got {nh}")
    return _assemble_cached(nh)


def _mass_stencil(values: np.ndarray, h: float) -> np.ndarray:
    # Circulant mass action without forming the matrix: h/6 * (4, 1, 1) stencil.
    return h * (2.0 / 3.0 * values + (np.roll(values, 1) + np.roll(values, -1)) / 6.0)


def fourier_series_values(x: np.ndarray, coeff_cos, coeff_sin, beta: float) -> np.ndarray:
    """Evaluate sum_j sqrt(j^-beta) sqrt(2) (a_j cos(2 pi j x) + b_j sin(2 pi j x)).

    Modes are accumulated one at a time, so memory stays O(len(x)) even for
    master-grid evaluations.
    """
    x = np.asarray(x, dtype=float)
    coeff_cos = np.asarray(coeff_cos, dtype=float)
    coeff_sin = np.asarray(coeff_sin, dtype=float)
    values = np.zeros_like(x)
    for j in range(1, coeff_cos.size + 1):
        amp = np.sqrt(2.0 * j ** (-beta))
        phase = 2.0 * np.pi * j * x
        values += amp * (coeff_cos[j - 1] * np.cos(phase) + coeff_sin[j - 1] * np.sin(phase))
    return values


def sample_q_wiener(regularity: str, modes: int, seed: int, grid: PeriodicGrid) -> SampledFunction:
    """Draw one random test function of the given regularity class on the grid.

    Coefficients a_j, b_j are independent standard normals from a counter-based
    generator keyed by the seed, so a (seed, regularity, modes) triple always
    reproduces the same nodal values bit for bit.
    """
    if regularity not in REGULARITY_BETA:
        raise ValueError(f"unknown regularity class {regularity!r}")
    if modes < 1:
        raise InvalidModeCount(f"need at least one mode, got {modes}")
    if modes > grid.nh / 2 - 1:
        raise InvalidModeCount(
            f"{modes} modes are not resolvable on {grid.nh} nodes (max {grid.nh // 2 - 1})"
        )
    rng = np.random.Generator(np.random.Philox(seed))
    coeffs = rng.standard_normal((2, modes))
    values = fourier_series_values(grid.nodes, coeffs[0], coeffs[1], REGULARITY_BETA[regularity])
    return SampledFunction(grid, values, regularity, seed, modes)


def project_to_grid(fine: SampledFunction, coarse_grid: PeriodicGrid) -> SampledFunction:
    """L2 projection of a piecewise-linear fine-grid function onto a coarser grid.

    The grids must be nested (fine node count a multiple of the coarse one);
    coarse hat functions are then piecewise linear on the fine grid, so the
    load integrals reduce to finite sums of fine mass-matrix applications. The
    coarse mass solve uses the circulant structure.
    """
    nf = fine.grid.nh
    nc = coarse_grid.nh
    if nf % nc != 0:
        raise NonNestedGrids(f"{nf} fine nodes do not nest over {nc} coarse nodes")
    k = nf // nc
    if k == 1:
        return SampledFunction(coarse_grid, fine.values, fine.regularity, fine.seed, fine.modes)
    g = _mass_stencil(fine.values, fine.grid.h)
    b = np.zeros(nc)
    base = k * np.arange(nc)
    for m in range(-(k - 1), k):
        b += (1.0 - abs(m) / k) * g[(base + m) % nf]
    hc = coarse_grid.h
    first_col = np.zeros(nc)
    first_col[0] = 2.0 * hc / 3.0
    first_col[1] = hc / 6.0
    first_col[-1] = hc / 6.0
    c = la.solve_circulant(first_col, b)
    return SampledFunction(coarse_grid, c, fine.regularity, fine.seed, fine.modes)


def build_load_vector(f: SampledFunction) -> np.ndarray:
    """Load vector b_i = int f phi_i dx for piecewise-linear f on the same grid.

    Equals the mass matrix applied to the nodal values; evaluated by stencil.
    """
    return _mass_stencil(f.values, f.grid.h)


def build_p0_factor(zeta: SampledFunction, m: SymmetricMatrix) -> LowRankFactor:
    """Rank-one coefficient factor z = M^{-1} (load vector of zeta).

    The coefficient matrix z z^T then represents the rank-one operator
    v -> <zeta_h, v> zeta_h through the FEM representation formula.
    """
    b = build_load_vector(zeta)
    z = la.solve(m.a, b, assume_a="pos")
    return LowRankFactor(z[:, None])


def write_sampled_function(f: SampledFunction, path) -> None:
    """Write 'x value' lines with a '#'-prefixed metadata header."""
    lines = [
        f"# seed {f.seed}",
        f"# regularity {f.regularity}",
        f"# modes {f.modes}",
    ]
    for x, v in zip(f.grid.nodes, f.values):
        lines.append(f"{x:.17g} {v:.17g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_sampled_function(path) -> SampledFunction:
    """Inverse of :func:`write_sampled_function`."""
    meta = {}
    xs = []
    vs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            meta[key] = value.strip()
            continue
        x, v = line.split()
        xs.append(float(x))
        vs.append(float(v))
    grid = PeriodicGrid(len(vs))
    if not np.allclose(xs, grid.nodes, atol=1e-12):
        raise InvalidGrid("node column is not the uniform periodic grid on (0, 1)")
    return SampledFunction(
        grid,
        np.array(vs),
        meta.get("regularity", "H0"),
        int(meta.get("seed", 0)),
        int(meta.get("modes", len(vs) // 2 - 1)),
    )
