"""Command-line entry point: solve / experiment / oracle-check / sample.

Exit codes: 0 on success, 1 on usage errors, 2 on numerical failures
(rank explosion, lost positive definiteness, explicit-integrator blow-up).
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import experiments, fem, oracle
from .errors import SplitRiccatiError
from .flows import SchemeConfig, integrate
from .lowrank import LowRankFactor

__all__ = ["main", "entry", "write_factor_file", "read_factor_file"]

FACTOR_FORMAT_TAG = "splitriccati-factor-text-1"

DESK_DEFAULTS = {
    "nh_list": (4, 16, 64, 256, 1024),
    "nt_list": tuple(2 ** j for j in range(2, 11)),
    "horizon": 0.1,
    "tau_ref_exponent": 12,
    "seed_s": 1,
    "seed_p0": 3,
    "quad_order": 6,
    "compress_tol": 1e-15,
    "modes": 512,
    "master_exponent": 17,
    "rank_cap": 2000,
}

FULL_OVERRIDES = {
    "nh_list": tuple(2 ** k for k in range(2, 15)),
    "nt_list": tuple(2 ** j for j in range(2, 13)),
    "tau_ref_exponent": 13,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _int_list(text: str) -> tuple:
    return tuple(int(part) for part in text.replace(",", " ").split())


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="splitriccati",
        description="Low-rank splitting solver and convergence harness for "
                    "matrix differential Riccati equations.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    def add_problem_flags(p):
        p.add_argument("--id", type=int, default=1, choices=(1, 2, 3, 4),
                       help="experiment row selecting the S / P0 function pair")
        p.add_argument("--T", dest="horizon", type=float, default=0.1,
                       help="final time")
        p.add_argument("--tol", dest="compress_tol", type=float, default=1e-15,
                       help="relative low-rank truncation tolerance")
        p.add_argument("--quad-order", type=int, default=6,
                       help="Gauss-Legendre nodes for the affine-flow integral")
        p.add_argument("--seed-s", type=int, default=1,
                       help="seed for the control-operator function")
        p.add_argument("--seed-p0", type=int, default=3,
                       help="seed for the initial-condition function")
        p.add_argument("--modes", type=int, default=512,
                       help="Fourier modes in the random functions")
        p.add_argument("--master-exp", dest="master_exponent", type=int, default=17,
                       help="log2 of the sampling master grid")
        p.add_argument("--rank-cap", type=int, default=2000,
                       help="hard cap on factor rank before aborting")

    solve = sub.add_parser("solve", formatter_class=fmt,
                           help="run one (scheme, Nh, Nt) integration")
    add_problem_flags(solve)
    solve.add_argument("--scheme", choices=("lie", "strang"), default="strang")
    solve.add_argument("--nh", type=int, default=64, help="spatial nodes")
    solve.add_argument("--nt", type=int, default=256, help="time steps")
    solve.add_argument("--out", type=Path, default=Path("."), help="output directory")

    experiment = sub.add_parser("experiment", formatter_class=fmt,
                                help="run a full convergence sweep")
    experiment.add_argument("--id", type=int, required=True, choices=(1, 2, 3, 4),
                            help="experiment row (Table of S / P0 pairings)")
    experiment.add_argument("--nh", type=_int_list, default=None,
                            help="comma-separated spatial resolutions "
                                 f"(default {','.join(map(str, DESK_DEFAULTS['nh_list']))})")
    experiment.add_argument("--nt", type=_int_list, default=None,
                            help="comma-separated step counts "
                                 f"(default {','.join(map(str, DESK_DEFAULTS['nt_list']))})")
    experiment.add_argument("--T", dest="horizon", type=float, default=None,
                            help="final time (default 0.1)")
    experiment.add_argument("--tol", dest="compress_tol", type=float, default=None,
                            help="low-rank truncation tolerance (default 1e-15)")
    experiment.add_argument("--tau-ref-exp", dest="tau_ref_exponent", type=int,
                            default=None,
                            help="reference runs 2^k Strang steps (default 12; 13 with --full)")
    experiment.add_argument("--quad-order", type=int, default=None,
                            help="affine-flow quadrature order (default 6)")
    experiment.add_argument("--seed-s", type=int, default=None,
                            help="seed for the control-operator function (default 1)")
    experiment.add_argument("--seed-p0", type=int, default=None,
                            help="seed for the initial-condition function (default 3)")
    experiment.add_argument("--modes", type=int, default=None,
                            help="Fourier modes in the random functions (default 512)")
    experiment.add_argument("--master-exp", dest="master_exponent", type=int,
                            default=None, help="log2 of the sampling master grid (default 17)")
    experiment.add_argument("--rank-cap", type=int, default=None,
                            help="hard rank cap (default 2000)")
    experiment.add_argument("--config", type=Path, default=None,
                            help="flat key = value file; flags override it")
    experiment.add_argument("--jobs", type=int, default=1,
                            help="worker threads for the sweep")
    experiment.add_argument("--full", action="store_true",
                            help="paper-scale grids (Nh to 2^14, reference 2^13 steps); "
                                 "multi-hour")
    experiment.add_argument("--no-figures", action="store_true",
                            help="skip rendering the PNG convergence panels")
    experiment.add_argument("--out", type=Path, default=Path("."),
                            help="output directory")

    check = sub.add_parser("oracle-check", formatter_class=fmt,
                           help="run the oracle-equivalence self test")
    check.add_argument("--seed", type=int, default=2024, help="seed for the check instances")

    sample = sub.add_parser("sample", formatter_class=fmt,
                            help="emit the four random test functions as text files")
    sample.add_argument("--nh", type=int, default=4096, help="output grid nodes")
    sample.add_argument("--modes", type=int, default=512, help="Fourier modes")
    sample.add_argument("--seed-s", type=int, default=1, help="seed for rho1 / xi1")
    sample.add_argument("--seed-p0", type=int, default=3, help="seed for rho2 / xi2")
    sample.add_argument("--master-exp", dest="master_exponent", type=int, default=17,
                        help="log2 of the sampling master grid")
    sample.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return parser


def write_factor_file(factor: LowRankFactor, path) -> None:
    """Text dump with a 3-line header: row count, rank, format tag."""
    lines = [f"n {factor.n}", f"r {factor.rank}", f"format {FACTOR_FORMAT_TAG}"]
    for row in factor.z:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_factor_file(path) -> LowRankFactor:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    n = int(lines[0].split()[1])
    r = int(lines[1].split()[1])
    tag = lines[2].split(maxsplit=1)[1]
    if tag != FACTOR_FORMAT_TAG:
        raise ValueError(f"unknown factor format {tag!r}")
    if r == 0:
        return LowRankFactor(np.zeros((n, 0)))
    data = np.array([[float(v) for v in line.split()] for line in lines[3:3 + n]])
    if data.shape != (n, r):
        raise ValueError(f"factor data has shape {data.shape}, header says {(n, r)}")
    return LowRankFactor(data)


def _package_version() -> str:
    try:
        return metadata.version("splitriccati")
    except metadata.PackageNotFoundError:
        return "unknown"


def _write_meta(path: Path, command: str, resolved: dict) -> None:
    payload = {
        "command": command,
        "resolved_config": resolved,
        "versions": {
            "splitriccati": _package_version(),
            "numpy": np.__version__,
        },
    }
    path.write_text(json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8")


def _cmd_solve(args) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    ref_exp = max(13, args.nt.bit_length() + 1)
    config = experiments.ExperimentConfig(
        experiment_id=args.id,
        nh_list=(args.nh,),
        nt_list=(args.nt,),
        horizon=args.horizon,
        tau_ref_exponent=ref_exp,
        seed_s=args.seed_s,
        seed_p0=args.seed_p0,
        quad_order=args.quad_order,
        compress_tol=args.compress_tol,
        modes=args.modes,
        master_exponent=args.master_exponent,
        rank_cap=args.rank_cap,
    )
    problem = experiments.build_problem(config, args.nh)
    scheme_config = SchemeConfig(args.scheme, args.nt, args.quad_order,
                                 args.compress_tol, args.rank_cap)
    traj = integrate(problem, scheme_config)
    stem = f"solve_{args.scheme}_nh{args.nh}_nt{args.nt}"
    write_factor_file(traj.factors[-1], out / f"{stem}_factor.txt")
    rank_lines = [f"{step} {rank}" for step, rank in enumerate(traj.ranks)]
    (out / f"{stem}_ranks.txt").write_text("\n".join(rank_lines) + "\n", encoding="utf-8")
    resolved = {"scheme": args.scheme, "nh": args.nh, "nt": args.nt,
                **{k: v for k, v in vars(args).items()
                   if k not in ("command", "out", "scheme", "nh", "nt")}}
    _write_meta(out / f"{stem}_meta.json", "solve", resolved)
    print(f"wrote {stem}_factor.txt (rank {traj.factors[-1].rank}), "
          f"{stem}_ranks.txt, {stem}_meta.json in {out}")
    return 0


def _cmd_experiment(args) -> int:
    values = dict(DESK_DEFAULTS)
    if args.full:
        values.update(FULL_OVERRIDES)
    if args.config is not None:
        values.update(experiments.read_config_file(args.config))
    flag_map = {
        "nh_list": args.nh, "nt_list": args.nt, "horizon": args.horizon,
        "compress_tol": args.compress_tol, "tau_ref_exponent": args.tau_ref_exponent,
        "quad_order": args.quad_order, "seed_s": args.seed_s,
        "seed_p0": args.seed_p0, "modes": args.modes,
        "master_exponent": args.master_exponent, "rank_cap": args.rank_cap,
    }
    values.update({k: v for k, v in flag_map.items() if v is not None})
    values["experiment_id"] = args.id
    config = experiments.config_from_mapping(values)

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    table = experiments.run_experiment(config, jobs=args.jobs,
                                       log=lambda m: print(m, flush=True))
    stem = f"experiment{config.experiment_id}"
    experiments.write_error_csv(table, out / f"{stem}.csv")
    for scheme in ("lie", "strang"):
        experiments.write_plot_data(table, config, scheme, out / f"{stem}_{scheme}.dat")
    experiments.write_run_metadata(table, config, out / f"{stem}_meta.json")
    if not args.no_figures:
        from .figures import render_error_figures
        render_error_figures(table, config, out, stem)
    for (scheme, nh), slope in sorted(table.slopes.items()):
        shown = "n/a" if slope is None else f"{slope:.3f}"
        print(f"slope {scheme:7s} Nh={nh:<6d} {shown}")
    if table.failures:
        for key, message in sorted(table.failures.items()):
            print(f"cell failed {key}: {message}", file=sys.stderr)
        return 2
    print(f"wrote {stem}.csv, per-scheme .dat files and {stem}_meta.json in {out}")
    return 0


def _cmd_oracle_check(args) -> int:
    results = oracle.oracle_check_suite(seed=args.seed)
    total = 0
    ok = True
    for name, passed, count, detail in results:
        total += count
        if passed:
            print(f"ok   {name} ({count} checks)")
        else:
            ok = False
            print(f"FAIL {name}: {detail}")
    print(f"{len(results)} properties, {total} checks executed")
    return 0 if ok else 2


def _cmd_sample(args) -> int:
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    master = fem.PeriodicGrid(2 ** args.master_exponent)
    target = fem.PeriodicGrid(args.nh)
    spec = [("rho1", "H2per", args.seed_s), ("rho2", "H2per", args.seed_p0),
            ("xi1", "H0", args.seed_s), ("xi2", "H0", args.seed_p0)]
    for name, regularity, seed in spec:
        sampled = fem.sample_q_wiener(regularity, args.modes, seed, master)
        projected = fem.project_to_grid(sampled, target)
        fem.write_sampled_function(projected, out / f"{name}.txt")
    _write_meta(out / "sample_meta.json", "sample",
                {k: v for k, v in vars(args).items() if k not in ("command", "out")})
    print(f"wrote rho1.txt rho2.txt xi1.txt xi2.txt and sample_meta.json in {out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    handlers = {
        "solve": _cmd_solve,
        "experiment": _cmd_experiment,
        "oracle-check": _cmd_oracle_check,
        "sample": _cmd_sample,
    }
    try:
        return handlers[args.command](args)
    except SplitRiccatiError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
