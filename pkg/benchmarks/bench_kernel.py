"""Benchmark the compiled time-stepping kernel against the pure-Python one.

Runs the same noise-driven path through both backends and reports per-step
timings plus the relative difference of the final states.  Usage:

    python3 benchmarks/bench_kernel.py [--n-el 256] [--steps 16384]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from levytransport import _kernel_py
from levytransport.covariance import MaternSpec, nystrom_eigendecomposition
from levytransport.harness import _mode_basis
from levytransport.levy import LevySampler, NIGParams
from levytransport.mesh import build_mesh
from levytransport.solver import ForwardModel, PathSolver

try:
    from levytransport import _speedups
except ImportError:
    _speedups = None


def run_backend(kernel_mod, solver: PathSolver, dl_bnd: np.ndarray) -> tuple:
    c = np.ascontiguousarray(solver.initial_state())
    t0 = time.perf_counter()
    if solver._block_diag:
        done = kernel_mod.run_steps_block(
            c, dl_bnd, solver.prof, solver.cin, solver.dt,
            solver._PD, solver._PS, solver._smu, solver._denom, solver.blowup,
        )
    else:
        done = kernel_mod.run_steps(
            c, dl_bnd, solver.prof, solver.cin, solver.dt,
            solver._rdata, solver._rindices, solver._rindptr,
            solver._inv_d, solver._inv_o,
            solver._smu, solver._denom, solver.blowup,
        )
    elapsed = time.perf_counter() - t0
    assert done == dl_bnd.shape[0], "path blew up during benchmark"
    return c, elapsed


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-el", type=int, default=256)
    ap.add_argument("--steps", type=int, default=16384)
    ap.add_argument("--n-modes", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    mesh = build_mesh(args.n_el)
    dt = 1.0 / args.steps
    eig = nystrom_eigendecomposition(MaternSpec(nu=1.0, rho=0.25), n_quad=512)
    basis = _mode_basis(eig, mesh, args.n_modes)
    solver = PathSolver(ForwardModel(), mesh, dt, mode_basis=basis)
    sampler = LevySampler(NIGParams.standard(args.n_modes), args.seed)
    inc = sampler.increments(sampler.stream(0), dt, args.steps)
    dl_bnd = np.ascontiguousarray(inc @ basis.T)

    path = "block-bidiagonal" if solver._block_diag else "csr"
    print(f"n_el={args.n_el} steps={args.steps} modes={args.n_modes} path={path}")

    results = {}
    for name, mod in (("python", _kernel_py), ("compiled", _speedups)):
        if mod is None:
            print(f"{name:>9}: not available")
            continue
        best = np.inf
        for _ in range(args.repeats):
            c, elapsed = run_backend(mod, solver, dl_bnd)
            best = min(best, elapsed)
        results[name] = (c, best)
        print(f"{name:>9}: {best:.4f} s total, {best / args.steps * 1e6:.2f} us/step")

    if len(results) == 2:
        cp, _ = results["python"]
        cc, _ = results["compiled"]
        rel = np.max(np.abs(cp - cc)) / max(np.max(np.abs(cc)), 1e-300)
        speedup = results["python"][1] / results["compiled"][1]
        print(f"  speedup: {speedup:.1f}x, final-state rel diff {rel:.2e}")


if __name__ == "__main__":
    main()
