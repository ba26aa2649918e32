"""Matern covariance operator on (0,1) and its truncated eigenexpansion.

The eigenpairs of the integral operator (Qf)(x) = int_0^1 k(x, y) f(y) dy
are approximated with a midpoint-rule Nystrom discretization: the symmetric
matrix w * K(q_i, q_j) is diagonalized and the discrete eigenvectors are
extended off the quadrature grid by the Nystrom interpolation formula.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.special import gamma, kv


@dataclass(frozen=True)
class MaternSpec:
    """Matern smoothness nu and correlation length rho; unit marginal variance."""

    nu: float
    rho: float

    def __post_init__(self):
        if self.nu <= 0.0:
            raise ValueError("nu must be positive")
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")


def matern_kernel(spec: MaternSpec, r: np.ndarray) -> np.ndarray:
    """Stationary Matern correlation as a function of distance r >= 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("distances must be nonnegative")
    nu = spec.nu
    scaled = np.sqrt(2.0 * nu) * r / spec.rho
    out = np.empty_like(scaled)
    small = scaled == 0.0
    out[small] = 1.0
    z = scaled[~small]
    out[~small] = (2.0 ** (1.0 - nu) / gamma(nu)) * z ** nu * kv(nu, z)
    return out


@dataclass
class Eigendecomposition:
    """Leading Nystrom eigenpairs, largest eigenvalue first."""

    spec: MaternSpec
    n_quad: int
    eigenvalues: np.ndarray  # (n_modes,)
    node_values: np.ndarray  # (n_quad, n_modes) eigenfunctions at quad points
    quad_points: np.ndarray  # (n_quad,)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def quad_weight(self) -> float:
        return 1.0 / self.n_quad

    def eval(self, x: np.ndarray, kernel=None) -> np.ndarray:
        """Nystrom interpolation of the eigenfunctions, shape (len(x), n_modes).

        e_k(x) = (1/lambda_k) sum_j w k(x, q_j) e_k(q_j).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if kernel is None:
            kernel = lambda r: matern_kernel(self.spec, r)
        kmat = kernel(np.abs(x[:, None] - self.quad_points[None, :]))
        return (self.quad_weight * kmat @ self.node_values) / self.eigenvalues

    def truncate(self, n: int) -> "Eigendecomposition":
        if not 1 <= n <= self.n_modes:
            raise ValueError(f"cannot truncate to {n} of {self.n_modes} modes")
        return Eigendecomposition(
            spec=self.spec,
            n_quad=self.n_quad,
            eigenvalues=self.eigenvalues[:n],
            node_values=self.node_values[:, :n],
            quad_points=self.quad_points,
        )


def nystrom_eigendecomposition(
    spec: MaternSpec,
    n_quad: int = 1024,
    n_modes: int | None = None,
    kernel=None,
) -> Eigendecomposition:
    """Midpoint-rule Nystrom approximation of the leading eigenpairs.

    ``kernel`` overrides the Matern kernel (same distance-based signature);
    useful for validating against kernels with known spectra.
    """
    if n_quad < 2:
        raise ValueError("n_quad must be at least 2")
    if n_modes is None:
        n_modes = n_quad
    if not 1 <= n_modes <= n_quad:
        raise ValueError("n_modes must lie in [1, n_quad]")
    if kernel is None:
        kernel = lambda r: matern_kernel(spec, r)
    q = (np.arange(n_quad) + 0.5) / n_quad
    w = 1.0 / n_quad
    kmat = kernel(np.abs(q[:, None] - q[None, :]))
    evals, evecs = eigh(w * kmat)
    order = np.argsort(evals)[::-1][:n_modes]
    evals = evals[order]
    # clip tiny negative tail eigenvalues caused by discretization round-off
    evals = np.maximum(evals, 0.0)
    node_values = evecs[:, order] / np.sqrt(w)
    # fix an orientation so cached/recomputed decompositions agree
    signs = np.sign(node_values[0, :])
    signs[signs == 0.0] = 1.0
    node_values = node_values * signs
    return Eigendecomposition(
        spec=spec,
        n_quad=n_quad,
        eigenvalues=evals,
        node_values=node_values,
        quad_points=q,
    )


def truncation_tail(eig: Eigendecomposition, n_keep: int) -> float:
    """Trace mass sum_{k > n_keep} lambda_k left out of the truncation.

    The operator trace equals int_0^1 k(x, x) dx = 1 for a unit-variance
    kernel, so the tail is one minus the retained mass.
    """
    if n_keep < 0:
        raise ValueError("n_keep must be nonnegative")
    n_keep = min(n_keep, eig.n_modes)
    return float(max(1.0 - eig.eigenvalues[:n_keep].sum(), 0.0))


def modes_for_tail(eig: Eigendecomposition, tail_target: float) -> int:
    """Smallest N with truncation tail <= tail_target."""
    if tail_target <= 0.0:
        raise ValueError("tail_target must be positive")
    partial = np.cumsum(eig.eigenvalues)
    ok = np.nonzero(1.0 - partial <= tail_target)[0]
    if ok.size == 0:
        raise ValueError(
            f"tail target {tail_target} unreachable with {eig.n_modes} modes "
            f"(best {1.0 - partial[-1]:.3e}); increase n_quad"
        )
    return int(ok[0] + 1)


def _cache_key(spec: MaternSpec, n_quad: int, n_modes: int) -> str:
    raw = f"matern|nu={spec.nu!r}|rho={spec.rho!r}|nq={n_quad}|nm={n_modes}"
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def cached_eigendecomposition(
    spec: MaternSpec,
    n_quad: int = 1024,
    n_modes: int | None = None,
    cache_dir: str | Path | None = None,
) -> Eigendecomposition:
    """Like nystrom_eigendecomposition but backed by an npz cache directory."""
    if n_modes is None:
        n_modes = n_quad
    if cache_dir is None:
        return nystrom_eigendecomposition(spec, n_quad, n_modes)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"eig_{_cache_key(spec, n_quad, n_modes)}.npz"
    if path.exists():
        with np.load(path) as data:
            return Eigendecomposition(
                spec=spec,
                n_quad=int(data["n_quad"]),
                eigenvalues=data["eigenvalues"],
                node_values=data["node_values"],
                quad_points=data["quad_points"],
            )
    eig = nystrom_eigendecomposition(spec, n_quad, n_modes)
    np.savez_compressed(
        path,
        n_quad=eig.n_quad,
        eigenvalues=eig.eigenvalues,
        node_values=eig.node_values,
        quad_points=eig.quad_points,
    )
    return eig


def eigenvalues_csv(eig: Eigendecomposition) -> str:
    lines = ["mode,eigenvalue,cumulative,tail"]
    cum = np.cumsum(eig.eigenvalues)
    for k in range(eig.n_modes):
        lines.append(
            f"{k + 1},{float(eig.eigenvalues[k])!r},{float(cum[k])!r},"
            f"{max(1.0 - float(cum[k]), 0.0)!r}"
        )
    return "\n".join(lines) + "\n"
