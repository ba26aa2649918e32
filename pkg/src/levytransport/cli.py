"""Command-line front end.

Subcommands:

* ``eigs``         compute (and cache) a Matern KL decomposition, emit CSV
* ``sample-noise`` emit exact NIG mode increments as CSV
* ``solve``        simulate one path and emit the recorded trajectory
* ``converge``     run the full Monte Carlo convergence study
* ``det-check``    deterministic convergence against the shift oracle

Every output file begins with a comment header recording the package
version, a hash of the run configuration, and the seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import (
    MaternSpec,
    cached_eigendecomposition,
    eigenvalues_csv,
)
from .harness import (
    StudyConfig,
    deterministic_check,
    run_convergence_study,
    _mode_basis,
)
from .levy import LevySampler, NIGParams
from .mesh import build_mesh
from .solver import ForwardModel, solve_path_recorded


def _args_hash(args: argparse.Namespace, keys) -> str:
    blob = json.dumps({k: getattr(args, k) for k in sorted(keys)}, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _header(config_hash: str, seed) -> str:
    return (
        f"# levytransport {__version__}\n"
        f"# config {config_hash}\n"
        f"# seed {seed}\n"
    )


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_eigs(args) -> int:
    spec = MaternSpec(nu=args.nu, rho=args.rho)
    eig = cached_eigendecomposition(
        spec, n_quad=args.n_quad, n_modes=args.n_modes, cache_dir=args.cache_dir
    )
    head = _header(_args_hash(args, ("nu", "rho", "n_quad", "n_modes")), "none")
    _emit(head + eigenvalues_csv(eig), args.out)
    return 0


def _cmd_sample_noise(args) -> int:
    params = NIGParams.standard(
        args.n_modes, alpha=args.alpha_hat, delta=args.delta_hat
    )
    sampler = LevySampler(params, args.seed, normalize=args.normalize)
    rng = sampler.stream(args.stream)
    inc = sampler.increments(rng, args.dt, args.steps)
    lines = [
        _header(
            _args_hash(
                args,
                ("seed", "stream", "dt", "n_modes", "steps", "alpha_hat", "delta_hat"),
            ),
            args.seed,
        )
        + "time,mode,increment"
    ]
    for i in range(args.steps):
        t = (i + 1) * args.dt
        for k in range(args.n_modes):
            lines.append(f"{t!r},{k + 1},{float(inc[i, k])!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_solve(args) -> int:
    if args.samples != 1:
        raise SystemExit("solve handles exactly one sample; use converge for many")
    spec = MaternSpec(nu=args.nu, rho=args.rho)
    eig = cached_eigendecomposition(
        spec, n_quad=args.n_quad, cache_dir=args.cache_dir
    )
    mesh = build_mesh(2**args.h_exp)
    basis = _mode_basis(eig, mesh, args.n_modes)
    params = NIGParams.standard(args.n_modes)
    sampler = LevySampler(params, args.seed)
    dt = args.T / args.m
    inc = sampler.increments(sampler.stream(args.stream), dt, args.m)
    model = ForwardModel()
    traj = solve_path_recorded(
        model, mesh, dt, inc, basis, record_every=args.record_every
    )
    head = _header(
        _args_hash(
            args,
            ("nu", "rho", "h_exp", "m", "seed", "stream", "n_modes", "n_quad", "T"),
        ),
        args.seed,
    )
    _emit(head + traj.to_csv(), args.out)
    return 0


def _csv_floats(text: str):
    return tuple(float(v) for v in text.split(","))


def _csv_ints(text: str):
    return tuple(int(v) for v in text.split(","))


def _cmd_converge(args) -> int:
    config = StudyConfig(
        nu_list=_csv_floats(args.nu_list),
        h_exps=_csv_ints(args.h_exps),
        ref_exp=args.ref_exp,
        samples=args.samples,
        seed=args.seed,
        gamma_mode=args.gamma_mode,
        gamma_custom=args.gamma,
        normalize=args.normalize_variance == "on",
        rho=args.rho,
        n_quad=args.n_quad,
    )

    def progress(nu, sample, total):
        if args.quiet:
            return
        if sample == total or sample % 10 == 0:
            print(f"nu={nu}: sample {sample}/{total}", file=sys.stderr)

    report = run_convergence_study(config, progress=progress)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "rmse.csv").write_text(report.rmse_csv())
    (out_dir / "rates.csv").write_text(report.rates_csv())
    for r in report.rates:
        print(f"nu={r.nu}: rate {r.slope:.3f} +/- {r.stderr:.3f}")
    return 0


def _cmd_det_check(args) -> int:
    rows, slope = deterministic_check(
        h_exps=_csv_ints(args.h_exps), T=args.T, dt_factor=args.dt_factor
    )
    head = _header(_args_hash(args, ("h_exps", "T", "dt_factor")), "none")
    lines = [head + "h,error"]
    for h, err in rows:
        lines.append(f"{h!r},{err!r}")
    _emit("\n".join(lines) + "\n", args.out)
    print(f"slope {slope:.3f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="levytransport",
        description="Stochastic transport SPDE: DPG solver and convergence harness",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("eigs", help="compute/cache the Matern KL decomposition")
    pe.add_argument("--nu", type=float, required=True)
    pe.add_argument("--rho", type=float, default=0.25)
    pe.add_argument("--n-quad", type=int, default=1024)
    pe.add_argument("--n-modes", type=int, default=None)
    pe.add_argument("--cache-dir", default=None)
    pe.add_argument("--out", default=None, help="output CSV (default stdout)")
    pe.set_defaults(func=_cmd_eigs)

    pn = sub.add_parser("sample-noise", help="emit NIG mode increments as CSV")
    pn.add_argument("--seed", type=int, required=True)
    pn.add_argument("--stream", type=int, default=0)
    pn.add_argument("--dt", type=float, required=True)
    pn.add_argument("--n-modes", type=int, required=True)
    pn.add_argument("--steps", type=int, default=1)
    pn.add_argument("--alpha-hat", type=float, default=10.0)
    pn.add_argument("--delta-hat", type=float, default=1.0)
    pn.add_argument("--normalize", action="store_true", default=True)
    pn.add_argument(
        "--no-normalize", dest="normalize", action="store_false"
    )
    pn.add_argument("--out", default=None)
    pn.set_defaults(func=_cmd_sample_noise)

    ps = sub.add_parser("solve", help="simulate one path and emit the trajectory")
    ps.add_argument("--nu", type=float, required=True)
    ps.add_argument("--rho", type=float, default=0.25)
    ps.add_argument("--h-exp", type=int, required=True)
    ps.add_argument("--m", type=int, required=True, help="number of time steps")
    ps.add_argument("--samples", type=int, default=1)
    ps.add_argument("--seed", type=int, required=True)
    ps.add_argument("--stream", type=int, default=0)
    ps.add_argument("--n-modes", type=int, default=20)
    ps.add_argument("--n-quad", type=int, default=1024)
    ps.add_argument("--T", type=float, default=1.0)
    ps.add_argument("--record-every", type=int, default=1)
    ps.add_argument("--cache-dir", default=None)
    ps.add_argument("--out", default=None)
    ps.set_defaults(func=_cmd_solve)

    pc = sub.add_parser("converge", help="run the Monte Carlo convergence study")
    pc.add_argument("--nu-list", default="0.5,1,2")
    pc.add_argument("--h-exps", default="3,4,5,6")
    pc.add_argument("--ref-exp", type=int, default=8)
    pc.add_argument("--samples", type=int, default=100)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--gamma-mode", choices=("paper", "custom"), default="paper")
    pc.add_argument("--gamma", type=float, default=None, help="custom gamma value")
    pc.add_argument("--normalize-variance", choices=("on", "off"), default="on")
    pc.add_argument("--rho", type=float, default=0.25)
    pc.add_argument("--n-quad", type=int, default=1024)
    pc.add_argument("--out-dir", required=True)
    pc.add_argument("--quiet", action="store_true")
    pc.set_defaults(func=_cmd_converge)

    pd = sub.add_parser("det-check", help="deterministic shift-oracle convergence")
    pd.add_argument("--h-exps", default="3,4,5,6,7")
    pd.add_argument("--T", type=float, default=0.2)
    pd.add_argument("--dt-factor", type=float, default=0.25)
    pd.add_argument("--out", default=None)
    pd.set_defaults(func=_cmd_det_check)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
