"""Convergence-study driver: equilibration, coupled Monte Carlo, regression.

For each smoothness nu the study solves, per sample, one reference path on
the fine grid and one coarse path per refinement h, both driven by the same
noise realization: coarse time increments are exact block sums of the fine
mode increments and coarse mode sets are prefixes of the reference modes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import linregress

from . import __version__
from .covariance import (
    MaternSpec,
    Eigendecomposition,
    modes_for_tail,
    nystrom_eigendecomposition,
)
from .levy import LevySampler, NIGParams
from .mesh import DGFunction, build_mesh
from .solver import ForwardModel, PathSolver

DT_FLOOR_EXP = 20


@dataclass(frozen=True)
class StudyConfig:
    nu_list: tuple = (0.5, 1.0, 2.0)
    rho: float = 0.25
    h_exps: tuple = (3, 4, 5, 6)
    ref_exp: int = 8
    samples: int = 100
    T: float = 1.0
    seed: int = 0
    dt_floor_exp: int = DT_FLOOR_EXP
    gamma_mode: str = "paper"  # gamma = min(3/2, nu)
    gamma_custom: float | None = None
    normalize: bool = True
    n_quad: int = 1024
    alpha: float = 0.5
    sigma: float = 1.0
    alpha_hat: float = 10.0
    delta_hat: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "nu_list", tuple(float(v) for v in self.nu_list))
        object.__setattr__(self, "h_exps", tuple(int(v) for v in self.h_exps))
        if self.ref_exp <= max(self.h_exps):
            raise ValueError("reference exponent must exceed the finest study exponent")
        if self.samples < 2:
            raise ValueError("need at least 2 samples")
        if self.gamma_mode not in ("paper", "custom"):
            raise ValueError("gamma_mode must be 'paper' or 'custom'")
        if self.gamma_mode == "custom" and self.gamma_custom is None:
            raise ValueError("gamma_custom required in custom mode")

    def gamma(self, nu: float) -> float:
        if self.gamma_mode == "custom":
            return float(self.gamma_custom)
        return min(1.5, nu)

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def equilibrate(
    h: float, gamma: float, eig: Eigendecomposition, T: float, dt_floor: float
) -> tuple[int, int]:
    """Steps m and modes N balancing dt = tail = max(h^{2 gamma}, dt_floor)."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    target = max(h ** (2.0 * gamma), dt_floor)
    m = int(np.ceil(T / target))
    n_modes = modes_for_tail(eig, target)
    return m, n_modes


def _pow2_ceil(m: int) -> int:
    return 1 << (int(m) - 1).bit_length()


def diff_norm_nested(fine: DGFunction, coarse: DGFunction) -> float:
    """Broken L2 norm of fine - coarse on nested dyadic meshes, exact.

    The coarse piecewise linear restricted to a fine element is linear, so
    the difference is linear per fine element and the per-element integral
    h (g_l^2 + g_l g_r + g_r^2) / 3 is exact.
    """
    nf, nc = fine.mesh.n_elements, coarse.mesh.n_elements
    if nf % nc != 0:
        raise ValueError("meshes are not nested")
    ratio = nf // nc
    hf = fine.mesh.h
    cf = fine.coefficients.reshape(-1, 2)
    cc = coarse.coefficients.reshape(-1, 2)
    # coarse values at the fine element endpoints, taken from the owning
    # coarse element so coarse interface jumps use matching traces
    sub = np.arange(ratio)
    sl = sub / ratio
    sr = (sub + 1.0) / ratio
    vl = cc[:, [0]] * (1.0 - sl) + cc[:, [1]] * sl  # (nc, ratio)
    vr = cc[:, [0]] * (1.0 - sr) + cc[:, [1]] * sr
    gl = cf[:, 0] - vl.ravel()
    gr = cf[:, 1] - vr.ravel()
    total = np.sum(gl * gl + gl * gr + gr * gr) * hf / 3.0
    return float(np.sqrt(max(total, 0.0)))


def fit_rate(h_values, rmse_values) -> tuple[float, float]:
    """OLS slope of log(rmse) on log(h) with its standard error."""
    h_values = np.asarray(h_values, dtype=float)
    rmse_values = np.asarray(rmse_values, dtype=float)
    if h_values.size < 3:
        raise ValueError("need at least 3 refinements for a rate")
    if np.any(rmse_values <= 0.0):
        raise ValueError("rmse values must be positive")
    res = linregress(np.log(h_values), np.log(rmse_values))
    return float(res.slope), float(res.stderr)


@dataclass
class CellResult:
    nu: float
    h: float
    m: int
    n_modes: int
    samples: int
    aborted: int
    rmse: float
    ci_lo: float
    ci_hi: float


@dataclass
class RateResult:
    nu: float
    slope: float
    stderr: float
    n_points: int


@dataclass
class ConvergenceReport:
    config: StudyConfig
    cells: list = field(default_factory=list)
    rates: list = field(default_factory=list)

    def rmse_csv(self) -> str:
        lines = _header_lines(self.config)
        lines.append("nu,h,m,N,samples,aborted,rmse,ci_lo,ci_hi")
        for c in self.cells:
            lines.append(
                f"{c.nu!r},{c.h!r},{c.m},{c.n_modes},{c.samples},{c.aborted},"
                f"{c.rmse!r},{c.ci_lo!r},{c.ci_hi!r}"
            )
        return "\n".join(lines) + "\n"

    def rates_csv(self) -> str:
        lines = _header_lines(self.config)
        lines.append("nu,slope,stderr,n_points")
        for r in self.rates:
            lines.append(f"{r.nu!r},{r.slope!r},{r.stderr!r},{r.n_points}")
        return "\n".join(lines) + "\n"


def _header_lines(config: StudyConfig) -> list:
    return [
        f"# levytransport {__version__}",
        f"# config {config.config_hash()}",
        f"# seed {config.seed}",
    ]


def _mean_ci(values: np.ndarray) -> tuple[float, float, float]:
    """RMSE and 95% CI from per-sample squared errors (delta method)."""
    n = values.size
    mean = float(values.mean())
    half = 1.96 * float(values.std(ddof=1)) / np.sqrt(n) if n > 1 else 0.0
    rmse = float(np.sqrt(max(mean, 0.0)))
    return rmse, float(np.sqrt(max(mean - half, 0.0))), float(np.sqrt(max(mean + half, 0.0)))


def _nu_seed(seed: int, nu_index: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(nu_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def run_convergence_study(
    config: StudyConfig, eig_cache: dict | None = None, progress=None
) -> ConvergenceReport:
    """Full coupled-noise study over all nu and refinements in the config."""
    report = ConvergenceReport(config=config)
    dt_floor = 2.0 ** (-config.dt_floor_exp)
    model = ForwardModel(
        a=config.a, alpha=config.alpha, sigma=config.sigma, alpha_hat=config.alpha_hat
    )
    for nu_index, nu in enumerate(config.nu_list):
        spec = MaternSpec(nu=nu, rho=config.rho)
        if eig_cache is not None and spec in eig_cache:
            eig = eig_cache[spec]
        else:
            eig = nystrom_eigendecomposition(spec, n_quad=config.n_quad)
            if eig_cache is not None:
                eig_cache[spec] = eig
        gamma = config.gamma(nu)
        cells = _study_cells(config, eig, gamma, dt_floor)
        ref = cells.pop("ref")
        results = _run_nu(
            config, model, eig, nu_index, ref, cells, progress=progress, nu=nu
        )
        report.cells.extend(results)
        usable = [c for c in results if c.samples > 0 and c.rmse > 0.0]
        if len(usable) >= 3:
            slope, stderr = fit_rate([c.h for c in usable], [c.rmse for c in usable])
            report.rates.append(
                RateResult(nu=nu, slope=slope, stderr=stderr, n_points=len(usable))
            )
    return report


def _study_cells(config: StudyConfig, eig, gamma: float, dt_floor: float) -> dict:
    """Equilibrated (m, N) per refinement; m rounded up to a power of two so
    every coarse time grid nests in the reference grid."""
    cells = {}
    for exp in list(config.h_exps) + ["ref"]:
        k = config.ref_exp if exp == "ref" else exp
        h = 2.0 ** (-k)
        m, n_modes = equilibrate(h, gamma, eig, config.T, dt_floor)
        cells[exp] = {"h": h, "m": _pow2_ceil(m), "n_modes": n_modes}
    ref = cells["ref"]
    for exp, cell in cells.items():
        if cell["m"] > ref["m"] or cell["n_modes"] > ref["n_modes"]:
            raise ValueError("reference grid does not dominate a study cell")
        if ref["m"] % cell["m"] != 0:
            raise ValueError("coarse step count does not divide the reference")
    return cells


def _run_nu(config, model, eig, nu_index, ref, cells, progress=None, nu=None):
    m_ref = ref["m"]
    n_ref_modes = ref["n_modes"]
    dt_ref = config.T / m_ref
    params = NIGParams.standard(
        n_ref_modes, alpha=config.alpha_hat, delta=config.delta_hat
    )
    sampler = LevySampler(params, _nu_seed(config.seed, nu_index), normalize=config.normalize)

    ref_mesh = build_mesh(2 ** config.ref_exp)
    ref_solver = PathSolver(
        model, ref_mesh, dt_ref, mode_basis=_mode_basis(eig, ref_mesh, n_ref_modes)
    )
    solvers = {}
    for exp, cell in cells.items():
        mesh = build_mesh(round(1.0 / cell["h"]))
        solvers[exp] = PathSolver(
            model,
            mesh,
            config.T / cell["m"],
            mode_basis=_mode_basis(eig, mesh, cell["n_modes"]),
        )

    max_ratio = max(m_ref // cell["m"] for cell in cells.values())
    chunk = min(m_ref, max(8192, max_ratio))
    sq_errors = {exp: [] for exp in cells}
    aborted = {exp: 0 for exp in cells}

    for sample in range(config.samples):
        rng = sampler.stream(sample)
        ref_state = np.ascontiguousarray(ref_solver.initial_state())
        coarse_inc = {exp: [] for exp in cells}
        ref_ok = True
        done = 0
        for start in range(0, m_ref, chunk):
            fine = sampler.increments(rng, dt_ref, min(chunk, m_ref - start))
            for exp, cell in cells.items():
                ratio = m_ref // cell["m"]
                n_c = cell["n_modes"]
                agg = fine[:, :n_c].reshape(-1, ratio, n_c).sum(axis=1)
                coarse_inc[exp].append(agg)
            if ref_ok:
                res = ref_solver.run(increments=fine, state0=ref_state)
                ref_state = res.state_hom.coefficients
                done += res.steps_done
                if res.aborted:
                    ref_ok = False
        if not ref_ok:
            for exp in cells:
                aborted[exp] += 1
            continue
        ref_final = DGFunction(ref_mesh, ref_state)
        for exp, cell in cells.items():
            inc = np.concatenate(coarse_inc[exp], axis=0)
            res = solvers[exp].run(increments=inc)
            if res.aborted:
                aborted[exp] += 1
                continue
            sq_errors[exp].append(diff_norm_nested(ref_final, res.state_hom) ** 2)
        if progress is not None:
            progress(nu, sample + 1, config.samples)

    out = []
    for exp in sorted(cells, reverse=True):  # coarse to fine in h
        cell = cells[exp]
        vals = np.array(sq_errors[exp])
        if vals.size:
            rmse, lo, hi = _mean_ci(vals)
        else:
            rmse, lo, hi = 0.0, 0.0, 0.0
        out.append(
            CellResult(
                nu=nu,
                h=cell["h"],
                m=cell["m"],
                n_modes=cell["n_modes"],
                samples=int(vals.size),
                aborted=aborted[exp],
                rmse=rmse,
                ci_lo=lo,
                ci_hi=hi,
            )
        )
    out.sort(key=lambda c: -c.h)
    return out


def _mode_basis(eig, mesh, n_modes: int) -> np.ndarray:
    """sqrt(eta_k) e_k at the element boundaries, shape (n_el + 1, n_modes)."""
    basis = eig.eval(mesh.boundaries)[:, :n_modes]
    return basis * np.sqrt(eig.eigenvalues[:n_modes])


def deterministic_check(
    h_exps=(3, 4, 5, 6, 7), T: float = 0.2, a: float = 1.0, dt_factor: float = 0.25
):
    """Zero-noise transport convergence against the shift-semigroup oracle.

    Returns (list of (h, error), slope); uses a smooth bump supported in
    (0.3, 0.6) and dt = dt_factor * h^2.
    """
    from .mesh import broken_error
    from .solver import exact_deterministic_solution, solve_deterministic

    def bump(x):
        x = np.asarray(x, dtype=float)
        t = (x - 0.3) / 0.3
        inside = (t > 0.0) & (t < 1.0)
        out = np.zeros_like(x)
        ti = t[inside]
        out[inside] = np.exp(-1.0 / (ti * (1.0 - ti)))
        return out

    bump.vectorized = True
    model = ForwardModel(a=a, sigma=0.0, boundary_value=0.0, initial=bump)
    oracle = exact_deterministic_solution(bump, T, a)
    rows = []
    for k in h_exps:
        h = 2.0 ** (-k)
        m = max(1, int(np.ceil(T / (dt_factor * h * h))))
        res = solve_deterministic(model, build_mesh(2**k), T / m, T)
        rows.append((h, broken_error(res.state, oracle)))
    slope, _ = fit_rate([r[0] for r in rows], [r[1] for r in rows])
    return rows, slope
