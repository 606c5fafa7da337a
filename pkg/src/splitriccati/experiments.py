"""Convergence-study harness.

Builds the controlled-heat test problems on a grid hierarchy, runs Lie and
Strang sweeps over the time-step grid against a fine Strang reference per
spatial resolution, records max-in-time weighted spectral errors, and fits
log-log slopes. Results are written as CSV, plot-data columns, and a JSON
metadata file.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg as la

from . import fem
from .errors import SplitRiccatiError
from .flows import CoefficientProblem, SchemeConfig, Trajectory, integrate, iterate_factors
from .linalg import CholeskyFactor, weighted_spectral_norm_diff
from .lowrank import LowRankFactor

__all__ = [
    "ExperimentConfig",
    "ErrorRow",
    "ErrorTable",
    "ReferenceTrajectory",
    "build_problem",
    "compute_reference",
    "reference_keep_indices",
    "compute_err_tau",
    "estimate_order",
    "default_slope_points",
    "run_experiment",
    "write_error_csv",
    "write_plot_data",
    "write_run_metadata",
    "read_config_file",
    "config_from_mapping",
]

# Which random-function pair feeds the control factor and the initial
# condition in each study: winding down from both-smooth to both-rough.
EXPERIMENT_TABLE = {
    1: ("rho1", "rho2"),
    2: ("rho1", "xi2"),
    3: ("xi1", "rho2"),
    4: ("xi1", "xi2"),
}

SLOPE_ERR_FLOOR = 1e-11
SLOPE_POINTS = 4


def _is_power_of_two(k: int) -> bool:
    return k >= 1 and (k & (k - 1)) == 0


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one convergence study.

    The experiment id fixes which regularity class feeds S and P0; explicit
    s_choice / p0_choice values are validated against that mapping. Step
    sizes are tau = horizon / Nt and the reference runs 2**tau_ref_exponent
    Strang steps.
    """

    experiment_id: int
    nh_list: tuple = (4, 16, 64, 256, 1024)
    nt_list: tuple = (4, 8, 16, 32, 64, 128, 256, 512, 1024)
    horizon: float = 0.1
    tau_ref_exponent: int = 13
    seed_s: int = 1
    seed_p0: int = 3
    quad_order: int = 6
    compress_tol: float = 1e-15
    modes: int = 512
    master_exponent: int = 17
    rank_cap: int = 2000
    s_choice: str = ""
    p0_choice: str = ""

    def __post_init__(self):
        if self.experiment_id not in EXPERIMENT_TABLE:
            raise ValueError(f"experiment id must be 1..4, got {self.experiment_id}")
        s_choice, p0_choice = EXPERIMENT_TABLE[self.experiment_id]
        if self.s_choice and self.s_choice != s_choice:
            raise ValueError(
                f"experiment {self.experiment_id} pairs with s_choice={s_choice!r}"
            )
        if self.p0_choice and self.p0_choice != p0_choice:
            raise ValueError(
                f"experiment {self.experiment_id} pairs with p0_choice={p0_choice!r}"
            )
        object.__setattr__(self, "s_choice", s_choice)
        object.__setattr__(self, "p0_choice", p0_choice)
        object.__setattr__(self, "nh_list", tuple(int(n) for n in self.nh_list))
        object.__setattr__(self, "nt_list", tuple(int(n) for n in self.nt_list))
        for nh in self.nh_list:
            if not _is_power_of_two(nh):
                raise ValueError(f"grid sizes must be powers of two, got {nh}")
        for nt in self.nt_list:
            if not _is_power_of_two(nt):
                raise ValueError(f"step counts must be powers of two, got {nt}")
        if max(self.nt_list) >= 2 ** self.tau_ref_exponent:
            raise ValueError(
                f"max step count {max(self.nt_list)} must stay below the "
                f"reference resolution 2^{self.tau_ref_exponent}"
            )
        if max(self.nh_list) > 2 ** self.master_exponent:
            raise ValueError("master grid must be at least as fine as every run grid")

    def tau(self, nt: int) -> float:
        return self.horizon / nt


@dataclass(frozen=True)
class ErrorRow:
    scheme: str
    nh: int
    nt: int
    tau: float
    err: float
    max_rank: int
    wall_time_s: float


@dataclass
class ErrorTable:
    """Sweep results plus fitted slopes and any per-cell failures."""

    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def rows_for(self, scheme: str, nh: int) -> list:
        return [r for r in self.rows if r.scheme == scheme and r.nh == nh]

    def err_at(self, scheme: str, nh: int, nt: int) -> float:
        for r in self.rows:
            if (r.scheme, r.nh, r.nt) == (scheme, nh, nt):
                return r.err
        raise KeyError((scheme, nh, nt))


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Fine Strang run subsampled to the step indices the sweep needs."""

    num_steps: int
    factors: dict
    max_rank: int

    def factor_at(self, index: int) -> LowRankFactor:
        return self.factors[index]


@lru_cache(maxsize=8)
def _master_sample(master_exponent: int, regularity: str, seed: int, modes: int):
    grid = fem.PeriodicGrid(2 ** master_exponent)
    return fem.sample_q_wiener(regularity, modes, seed, grid)


def _choice_sample(config: ExperimentConfig, choice: str):
    regularity = "H2per" if choice.startswith("rho") else "H0"
    seed = config.seed_s if choice.endswith("1") else config.seed_p0
    return _master_sample(config.master_exponent, regularity, seed, config.modes)


def build_problem(config: ExperimentConfig, nh: int) -> CoefficientProblem:
    """Assemble the coefficient-space problem for one spatial resolution.

    The S and P0 functions are sampled once on the master grid and L2
    projected down; the control factor is the load vector of the S function,
    the source factor is M^{-1} applied to the load vector of the constant 1
    (mean observation), and the initial factor comes from the P0 function.
    """
    grid = fem.PeriodicGrid(nh)
    mass, stiffness = fem.assemble_periodic_p1(nh)
    s_fun = fem.project_to_grid(_choice_sample(config, config.s_choice), grid)
    p0_fun = fem.project_to_grid(_choice_sample(config, config.p0_choice), grid)
    b_factor = fem.build_load_vector(s_fun)[:, None]
    ones = fem.SampledFunction(grid, np.ones(nh), "H2per", 0, 1)
    q_factor = la.solve(mass.a, fem.build_load_vector(ones), assume_a="pos")[:, None]
    z0 = fem.build_p0_factor(p0_fun, mass)
    return CoefficientProblem.build(mass, stiffness, b_factor, q_factor, z0, config.horizon)


def reference_keep_indices(tau_ref_exponent: int, j: int) -> list:
    """Reference step indices that coincide with the grid of 2**j steps."""
    stride = 2 ** (tau_ref_exponent - j)
    return list(range(0, 2 ** tau_ref_exponent + 1, stride))


def compute_reference(problem: CoefficientProblem, config: ExperimentConfig) -> ReferenceTrajectory:
    """Fine Strang reference, retaining only indices the sweep will compare at."""
    ref_steps = 2 ** config.tau_ref_exponent
    stride = ref_steps // max(config.nt_list)
    scheme_config = SchemeConfig(
        "strang", ref_steps, config.quad_order, config.compress_tol, config.rank_cap
    )
    kept = {}
    max_rank = 0
    for index, factor in iterate_factors(problem, scheme_config):
        max_rank = max(max_rank, factor.rank)
        if index % stride == 0:
            kept[index] = factor
    return ReferenceTrajectory(ref_steps, kept, max_rank)


def compute_err_tau(traj: Trajectory, ref: ReferenceTrajectory, lm: CholeskyFactor) -> float:
    """Max over n = 1..Nt of the weighted spectral norm of the difference.

    n = 0 is excluded; both trajectories share the initial factor by
    construction.
    """
    nt = traj.num_steps
    stride, remainder = divmod(ref.num_steps, nt)
    if remainder != 0:
        raise ValueError(f"{nt} steps do not divide the reference's {ref.num_steps}")
    worst = 0.0
    for n in range(1, nt + 1):
        diff = weighted_spectral_norm_diff(traj.factors[n], ref.factor_at(n * stride), lm)
        worst = max(worst, diff)
    return worst


def estimate_order(error_rows, tau_window) -> float | None:
    """Least-squares slope of log2(err) against log2(tau) inside the window.

    ``error_rows`` holds (tau, err) pairs or ErrorRow instances. Returns None
    with fewer than three usable points.
    """
    lo, hi = tau_window
    taus, errs = [], []
    for row in error_rows:
        tau, err = (row.tau, row.err) if isinstance(row, ErrorRow) else row
        if lo * (1 - 1e-12) <= tau <= hi * (1 + 1e-12) and np.isfinite(err) and err > 0:
            taus.append(tau)
            errs.append(err)
    if len(taus) < 3:
        return None
    slope = np.polyfit(np.log2(taus), np.log2(errs), 1)[0]
    return float(slope)


def default_slope_points(rows) -> list:
    """The fitting window used for reported slopes.

    The four largest step sizes whose error sits above the compression-noise
    floor; the reference-contaminated small-tau tail never enters the fit.
    """
    usable = [
        (r.tau, r.err)
        for r in sorted(rows, key=lambda r: -r.tau)
        if np.isfinite(r.err) and r.err > SLOPE_ERR_FLOOR
    ]
    return usable[:SLOPE_POINTS]


def run_experiment(config: ExperimentConfig, jobs: int = 1, log=None) -> ErrorTable:
    """Full sweep over nh_list x nt_list x {lie, strang}.

    One reference per spatial grid, computed before any dependent cell
    starts. Cells run on a thread pool (BLAS releases the GIL); results are
    merged by key order, not completion order, so reruns are deterministic.
    Per-cell failures are recorded in the table and the sweep continues.
    """
    say = log if log is not None else (lambda message: None)
    table = ErrorTable()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        problems = {
            nh: future.result()
            for nh, future in [
                (nh, pool.submit(build_problem, config, nh)) for nh in config.nh_list
            ]
        }
        say(f"built {len(problems)} problems")
        references = {}
        for nh, future in [
            (nh, pool.submit(compute_reference, problems[nh], config))
            for nh in config.nh_list
        ]:
            references[nh] = future.result()
            say(f"reference ready for Nh={nh} (max rank {references[nh].max_rank})")

        def run_cell(scheme, nh, nt):
            start = time.perf_counter()
            scheme_config = SchemeConfig(
                scheme, nt, config.quad_order, config.compress_tol, config.rank_cap
            )
            traj = integrate(problems[nh], scheme_config)
            err = compute_err_tau(traj, references[nh], problems[nh].mass_chol)
            return ErrorRow(
                scheme, nh, nt, config.tau(nt), err, traj.max_rank,
                time.perf_counter() - start,
            )

        keys = [
            (scheme, nh, nt)
            for scheme in ("lie", "strang")
            for nh in config.nh_list
            for nt in config.nt_list
        ]
        futures = {key: pool.submit(run_cell, *key) for key in keys}
        for key in keys:
            try:
                table.rows.append(futures[key].result())
            except SplitRiccatiError as exc:
                table.failures[key] = f"{type(exc).__name__}: {exc}"
                table.rows.append(
                    ErrorRow(key[0], key[1], key[2], config.tau(key[2]),
                             float("nan"), 0, 0.0)
                )
            say(f"cell {key} done")

    table.rows.sort(key=lambda r: (r.scheme, r.nh, r.nt))
    for scheme in ("lie", "strang"):
        for nh in config.nh_list:
            points = default_slope_points(table.rows_for(scheme, nh))
            slope = None
            if len(points) >= 3:
                taus = [p[0] for p in points]
                slope = estimate_order(points, (min(taus), max(taus)))
            table.slopes[(scheme, nh)] = slope
    return table


def write_error_csv(table: ErrorTable, path) -> None:
    """One row per sweep cell; errors serialized at 17 significant digits."""
    lines = ["scheme,Nh,Nt,tau,err,max_rank,wall_time_s"]
    for r in table.rows:
        lines.append(
            f"{r.scheme},{r.nh},{r.nt},{r.tau:.17g},{r.err:.17g},"
            f"{r.max_rank},{r.wall_time_s:.3f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_plot_data(table: ErrorTable, config: ExperimentConfig, scheme: str, path) -> None:
    """Column file 'tau err_Nh4 err_Nh16 ...' for log-log plotting tools."""
    header = "# tau " + " ".join(f"err_Nh{nh}" for nh in config.nh_list)
    lines = [header]
    for nt in config.nt_list:
        cells = [f"{config.tau(nt):.17g}"]
        for nh in config.nh_list:
            cells.append(f"{table.err_at(scheme, nh, nt):.17g}")
        lines.append(" ".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_run_metadata(table: ErrorTable, config: ExperimentConfig, path) -> None:
    """Everything needed to reproduce the run bit for bit, plus fitted slopes."""
    payload = {
        "config": asdict(config),
        "slopes": {
            f"{scheme}/Nh{nh}": slope for (scheme, nh), slope in sorted(table.slopes.items())
        },
        "failures": {
            f"{scheme}/Nh{nh}/Nt{nt}": message
            for (scheme, nh, nt), message in sorted(table.failures.items())
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


_LIST_KEYS = {"nh_list", "nt_list"}
_INT_KEYS = {
    "experiment_id", "tau_ref_exponent", "seed_s", "seed_p0", "quad_order",
    "modes", "master_exponent", "rank_cap",
}
_FLOAT_KEYS = {"horizon", "compress_tol"}


def read_config_file(path) -> dict:
    """Parse flat 'key = value' lines; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def config_from_mapping(values: dict) -> ExperimentConfig:
    """Coerce parsed strings (or already-typed values) into an ExperimentConfig."""
    kwargs = {}
    for key, value in values.items():
        if key in _LIST_KEYS:
            if isinstance(value, str):
                value = tuple(int(v) for v in value.replace(",", " ").split())
            kwargs[key] = tuple(int(v) for v in value)
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key in ("s_choice", "p0_choice"):
            kwargs[key] = str(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    return ExperimentConfig(**kwargs)
