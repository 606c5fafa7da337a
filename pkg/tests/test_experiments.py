import json

import numpy as np
import pytest
import scipy.linalg as la

from splitriccati import experiments, flows, oracle
from splitriccati.errors import RankExplosion
from splitriccati.experiments import (
    ErrorRow,
    ExperimentConfig,
    ReferenceTrajectory,
    build_problem,
    compute_err_tau,
    compute_reference,
    config_from_mapping,
    estimate_order,
    read_config_file,
    reference_keep_indices,
    run_experiment,
    write_error_csv,
    write_plot_data,
    write_run_metadata,
)
from splitriccati.linalg import weighted_spectral_norm_diff


def small_config(**overrides):
    base = dict(
        experiment_id=1, nh_list=(8, 16), nt_list=(8, 16, 32),
        tau_ref_exponent=8, master_exponent=12, modes=256,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# --- configuration --------------------------------------------------------

def test_table_mapping_enforced():
    assert ExperimentConfig(1, nh_list=(4,), nt_list=(4,)).s_choice == "rho1"
    assert ExperimentConfig(2, nh_list=(4,), nt_list=(4,)).p0_choice == "xi2"
    assert ExperimentConfig(3, nh_list=(4,), nt_list=(4,)).s_choice == "xi1"
    assert ExperimentConfig(4, nh_list=(4,), nt_list=(4,)).p0_choice == "xi2"
    with pytest.raises(ValueError):
        ExperimentConfig(1, s_choice="xi1")
    with pytest.raises(ValueError):
        ExperimentConfig(5)


def test_config_guards():
    with pytest.raises(ValueError):
        ExperimentConfig(1, nh_list=(6,))
    with pytest.raises(ValueError):
        ExperimentConfig(1, nt_list=(3,))
    with pytest.raises(ValueError):
        ExperimentConfig(1, nt_list=(2 ** 13,), tau_ref_exponent=13)
    with pytest.raises(ValueError):
        ExperimentConfig(1, nh_list=(2 ** 18,), master_exponent=17)


# --- problem construction -------------------------------------------------

def test_build_problem_source_factor_is_ones():
    # M applied to the all-ones vector gives h * ones, so the solve returns
    # exactly the ones vector up to roundoff
    config = small_config()
    problem = build_problem(config, 16)
    np.testing.assert_allclose(problem.q_factor[:, 0], np.ones(16), rtol=1e-13)


def test_build_problem_shapes():
    config = small_config()
    problem = build_problem(config, 8)
    assert problem.z0.rank == 1
    assert problem.b_factor.shape == (8, 1)
    assert problem.n == 8


def test_build_problem_deterministic():
    config = small_config()
    p1 = build_problem(config, 8)
    p2 = build_problem(config, 8)
    np.testing.assert_array_equal(p1.b_factor, p2.b_factor)
    np.testing.assert_array_equal(p1.z0.z, p2.z0.z)
    np.testing.assert_array_equal(p1.q_factor, p2.q_factor)


# --- reference ------------------------------------------------------------

def test_reference_keep_indices_example():
    assert reference_keep_indices(13, 2) == [0, 2 ** 11, 2 * 2 ** 11, 3 * 2 ** 11, 2 ** 13]


def test_reference_subsampling_and_determinism():
    config = small_config(nh_list=(8,), nt_list=(8,), tau_ref_exponent=6)
    problem = build_problem(config, 8)
    ref = compute_reference(problem, config)
    assert ref.num_steps == 64
    assert sorted(ref.factors) == list(range(0, 65, 8))
    again = compute_reference(problem, config)
    for k in ref.factors:
        np.testing.assert_array_equal(ref.factors[k].z, again.factors[k].z)


def test_reference_agrees_with_rk4_oracle():
    config = small_config(nh_list=(8,), nt_list=(8,), tau_ref_exponent=10)
    problem = build_problem(config, 8)
    ref = compute_reference(problem, config)
    rk = oracle.dense_rk_reference(problem, 2 ** 13)
    final = ref.factors[ref.num_steps].dense()
    err = la.norm(final - rk[-1].p, 2) / la.norm(rk[-1].p, 2)
    assert err <= 1e-6


# --- error norm over trajectories -----------------------------------------

def test_err_tau_zero_for_matching_trajectories():
    config = small_config(nh_list=(8,), nt_list=(8,), tau_ref_exponent=6)
    problem = build_problem(config, 8)
    traj = flows.integrate(problem, flows.SchemeConfig("strang", 8))
    ref = ReferenceTrajectory(8, dict(enumerate(traj.factors)), traj.max_rank)
    err = compute_err_tau(traj, ref, problem.mass_chol)
    assert err <= 1e-13 * max(f.norm() for f in traj.factors)


def test_err_tau_single_step_is_single_norm():
    config = small_config(nh_list=(8,), nt_list=(2,), tau_ref_exponent=4)
    problem = build_problem(config, 8)
    ref = compute_reference(problem, config)
    traj = flows.integrate(problem, flows.SchemeConfig("lie", 1))
    err = compute_err_tau(traj, ref, problem.mass_chol)
    direct = weighted_spectral_norm_diff(
        traj.factors[1], ref.factors[ref.num_steps], problem.mass_chol
    )
    assert err == direct


def test_err_tau_two_step_manual_dense():
    config = small_config(nh_list=(8,), nt_list=(2,), tau_ref_exponent=4)
    problem = build_problem(config, 8)
    ref = compute_reference(problem, config)
    traj = flows.integrate(problem, flows.SchemeConfig("lie", 2))
    err = compute_err_tau(traj, ref, problem.mass_chol)
    lm = problem.mass_chol.l
    manual = 0.0
    for n in (1, 2):
        diff = traj.factors[n].dense() - ref.factors[n * 8].dense()
        manual = max(manual, la.norm(lm.T @ diff @ lm, 2))
    np.testing.assert_allclose(err, manual, rtol=1e-10)


def test_err_tau_rejects_non_dividing_steps():
    config = small_config(nh_list=(8,), nt_list=(8,), tau_ref_exponent=6)
    problem = build_problem(config, 8)
    ref = compute_reference(problem, config)
    traj = flows.integrate(problem, flows.SchemeConfig("lie", 3))
    with pytest.raises(ValueError):
        compute_err_tau(traj, ref, problem.mass_chol)


# --- slope estimation ------------------------------------------------------

def test_estimate_order_exact_geometric():
    rows = [(0.1, 4e-3), (0.05, 2e-3), (0.025, 1e-3)]
    assert estimate_order(rows, (0.02, 0.2)) == pytest.approx(1.0)
    rows = [(tau, tau ** 2) for tau in (0.1, 0.05, 0.025, 0.0125)]
    assert estimate_order(rows, (0.01, 0.2)) == pytest.approx(2.0)


def test_estimate_order_needs_three_points():
    assert estimate_order([(0.1, 1e-3), (0.05, 5e-4)], (0.01, 1.0)) is None
    rows = [(0.1, 1e-3), (0.05, 5e-4), (0.025, float("nan"))]
    assert estimate_order(rows, (0.01, 1.0)) is None


def test_estimate_order_on_produced_lie_data():
    config = small_config(nh_list=(64,), nt_list=(8, 16, 32, 64),
                          tau_ref_exponent=9, master_exponent=13, modes=512)
    table = run_experiment(config)
    slope = table.slopes[("lie", 64)]
    assert 0.9 <= slope <= 1.1


# --- sweep ----------------------------------------------------------------

def test_run_experiment_singleton_lists_one_row_per_scheme():
    config = small_config(nh_list=(8,), nt_list=(8,), tau_ref_exponent=6)
    table = run_experiment(config)
    assert len(table.rows) == 2
    assert {r.scheme for r in table.rows} == {"lie", "strang"}
    assert not table.failures


def test_run_experiment_rerun_bitwise_identical(tmp_path):
    config = small_config(nh_list=(8,), nt_list=(8, 16), tau_ref_exponent=6)
    t1 = run_experiment(config)
    t2 = run_experiment(config, jobs=3)
    for r1, r2 in zip(t1.rows, t2.rows):
        assert f"{r1.err:.17g}" == f"{r2.err:.17g}"


def test_experiment1_error_monotone_in_tau():
    config = small_config(nh_list=(16,), nt_list=(8, 16, 32, 64), tau_ref_exponent=9)
    table = run_experiment(config)
    for scheme in ("lie", "strang"):
        errs = [r.err for r in table.rows_for(scheme, 16)]
        for coarse, fine in zip(errs, errs[1:]):
            assert fine <= coarse * 1.05


def test_experiment1_error_stable_across_nh():
    config = small_config(nh_list=(16, 64), nt_list=(16, 32), tau_ref_exponent=8)
    table = run_experiment(config)
    for scheme in ("lie", "strang"):
        for nt in (16, 32):
            a = table.err_at(scheme, 16, nt)
            b = table.err_at(scheme, 64, nt)
            assert max(a, b) <= 2.0 * min(a, b)


def test_reference_self_consistency():
    base = small_config(nh_list=(16,), nt_list=(8, 16), tau_ref_exponent=8)
    finer = small_config(nh_list=(16,), nt_list=(8, 16), tau_ref_exponent=9)
    t_base = run_experiment(base)
    t_finer = run_experiment(finer)
    for row, row_finer in zip(t_base.rows, t_finer.rows):
        if row.err > 100 * base.compress_tol:
            assert abs(row.err - row_finer.err) / row.err < 0.10


def test_run_experiment_records_cell_failures(monkeypatch):
    config = small_config(nh_list=(8,), nt_list=(8, 16), tau_ref_exponent=6)
    real_integrate = experiments.integrate

    def flaky(problem, scheme_config):
        if scheme_config.scheme == "lie" and scheme_config.num_steps == 8:
            raise RankExplosion("synthetic failure")
        return real_integrate(problem, scheme_config)

    monkeypatch.setattr(experiments, "integrate", flaky)
    table = run_experiment(config)
    assert ("lie", 8, 8) in table.failures
    assert "synthetic failure" in table.failures[("lie", 8, 8)]
    failed = [r for r in table.rows if r.scheme == "lie" and r.nt == 8]
    assert np.isnan(failed[0].err)
    # the other cells still completed
    assert np.isfinite(table.err_at("strang", 8, 16))


# --- outputs ---------------------------------------------------------------

def test_output_files_roundtrip(tmp_path):
    config = small_config(nh_list=(8,), nt_list=(8, 16), tau_ref_exponent=6)
    table = run_experiment(config)

    csv_path = tmp_path / "exp.csv"
    write_error_csv(table, csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "scheme,Nh,Nt,tau,err,max_rank,wall_time_s"
    assert len(lines) == 1 + len(table.rows)
    first = lines[1].split(",")
    assert first[0] == "lie"
    assert float(first[4]) == pytest.approx(table.err_at("lie", 8, 8))

    dat_path = tmp_path / "exp_lie.dat"
    write_plot_data(table, config, "lie", dat_path)
    data = np.loadtxt(dat_path)
    assert data.shape == (2, 2)
    np.testing.assert_allclose(data[:, 0], [config.tau(8), config.tau(16)])

    meta_path = tmp_path / "exp_meta.json"
    write_run_metadata(table, config, meta_path)
    meta = json.loads(meta_path.read_text())
    assert meta["config"]["experiment_id"] == 1
    assert meta["config"]["seed_p0"] == 3
    assert "lie/Nh8" in meta["slopes"]


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "experiment_id = 2\n"
        "nh_list = 4, 16\n"
        "nt_list = 8,16,32\n"
        "horizon = 0.2\n"
        "compress_tol = 1e-12\n"
        "tau_ref_exponent = 7\n",
        encoding="utf-8",
    )
    values = read_config_file(path)
    config = config_from_mapping(values)
    assert config.experiment_id == 2
    assert config.nh_list == (4, 16)
    assert config.nt_list == (8, 16, 32)
    assert config.horizon == 0.2
    assert config.compress_tol == 1e-12
    assert config.s_choice == "rho1"


def test_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("mystery = 1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        config_from_mapping(read_config_file(path))


def test_config_file_rejects_malformed_line(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("experiment_id 2\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_config_file(path)
