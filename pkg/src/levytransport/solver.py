"""Backward Euler / Petrov-Galerkin time stepping for the forward model.

The energy forward model is dX = (a dX/dx + Sigma^2) dt + Sigma dL with
Sigma(X, x) = sigma (e^{-alpha x} - e^{-alpha}) X and constant inflow value
X(t, 1) = e^{-alpha}.  Internally everything is solved in the homogenized
variable xi = X - e^{-alpha}; user-facing states are shifted back.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import k0

from . import _kernel
from .mesh import DGFunction, Mesh1D, project_L2
from .petrov import SchemeMatrices, assemble

BLOWUP_GUARD = 1.0e6


@dataclass(frozen=True)
class ForwardModel:
    """Coefficients of the energy forward model (time independent).

    The drift is tied to the diffusion by the no-arbitrage relation
    F = Sigma^2.  ``initial`` overrides the model's stationary-type initial
    condition and ``boundary_value`` the inflow constant (both in original,
    non-homogenized variables).
    """

    a: float = 1.0
    alpha: float = 0.5
    sigma: float = 1.0
    alpha_hat: float = 10.0
    boundary_value: float | None = None
    initial: object = None

    @property
    def inflow_value(self) -> float:
        if self.boundary_value is not None:
            return float(self.boundary_value)
        return float(np.exp(-self.alpha))

    def profile(self, x: np.ndarray) -> np.ndarray:
        """Spatial factor of the coefficient, sigma (e^{-alpha x} - e^{-alpha})."""
        x = np.asarray(x, dtype=float)
        return self.sigma * (np.exp(-self.alpha * x) - np.exp(-self.alpha))

    def sigma_coefficient(self, xi: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Homogenized diffusion Sigma^hom(xi, x) = profile(x) * (xi + c)."""
        return self.profile(x) * (np.asarray(xi, dtype=float) + self.inflow_value)

    def drift(self, xi: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Homogenized drift F^hom = (Sigma^hom)^2 (no-arbitrage relation)."""
        return self.sigma_coefficient(xi, x) ** 2

    def initial_condition(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.initial is not None:
            return np.asarray(self.initial(x), dtype=float)
        decay = np.exp(-self.alpha * x)
        level = self.sigma**2 * k0(self.alpha_hat) / (self.alpha * np.pi)
        return decay + level * (1.0 - decay)

    def homogenized_initial(self, x: np.ndarray) -> np.ndarray:
        return self.initial_condition(x) - self.inflow_value

    def homogenize_state(self, u: DGFunction) -> DGFunction:
        return DGFunction(u.mesh, u.coefficients - self.inflow_value)

    def unhomogenize_state(self, u: DGFunction) -> DGFunction:
        return DGFunction(u.mesh, u.coefficients + self.inflow_value)


def exact_deterministic_solution(x0, t: float, a: float):
    """Shift semigroup [S(t) v](x) = v(x + a t), zero-extended outside (0,1)."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")

    def shifted(x):
        x = np.asarray(x, dtype=float)
        y = x + a * t
        inside = (y >= 0.0) & (y <= 1.0)
        out = np.zeros_like(y)
        if np.any(inside):
            out[inside] = np.asarray(x0(y[inside]), dtype=float)
        return out

    shifted.vectorized = True
    return shifted


def step(
    state: DGFunction,
    dl: DGFunction,
    matrices: SchemeMatrices,
    model: ForwardModel,
    compressed: bool = True,
) -> DGFunction:
    """One backward Euler step in homogenized variables (reference path).

    Nodal interpolants of dt*F and Sigma*dL are formed at the element
    endpoints, paired through the (compressed) rhs matrix, and the factorized
    system is solved.  Slow but oracle-friendly; the Monte Carlo loop uses
    the equivalent Sherman-Morrison kernel instead.
    """
    nodes = state.mesh.node_coords
    c = state.coefficients
    g = model.sigma_coefficient(c, nodes)
    y = c + matrices.dt * g * g + g * dl.coefficients
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite nodal data; path blow-up")
    return DGFunction(state.mesh, matrices.step_solve(y, compressed=compressed))


@dataclass
class PathResult:
    """Final state of one simulated path (original variables)."""

    state: DGFunction
    state_hom: DGFunction
    steps_done: int
    n_steps: int

    @property
    def aborted(self) -> bool:
        return self.steps_done < self.n_steps


class PathSolver:
    """Reusable fast time stepper for one (mesh, dt, noise basis) combination.

    ``mode_basis`` maps per-mode increments to field values at the element
    boundaries; it is the matrix sqrt(eta_k) e_k(x_bnd) of shape
    (n_elements + 1, n_modes) — the noise field is continuous, so the two
    nodal traces at an interface share one value.  Pass ``None`` for
    deterministic (noise-free) paths.
    """

    def __init__(
        self,
        model: ForwardModel,
        mesh: Mesh1D,
        dt: float,
        mode_basis: np.ndarray | None = None,
        compressed: bool = True,
        blowup: float = BLOWUP_GUARD,
    ):
        self.model = model
        self.mesh = mesh
        self.dt = float(dt)
        self.matrices = assemble(mesh, dt, model.a)
        self.compressed = bool(compressed)
        self.blowup = float(blowup)
        nodes = mesh.node_coords
        self.prof = np.ascontiguousarray(model.profile(nodes))
        self.cin = model.inflow_value
        n = 2 * mesh.n_elements
        self.n = n
        if mode_basis is not None:
            mode_basis = np.ascontiguousarray(mode_basis, dtype=float)
            if mode_basis.shape[0] != mesh.n_elements + 1:
                raise ValueError("mode_basis rows must match the boundary count")
        self.mode_basis = mode_basis
        rhs = self.matrices.rhs_compressed if compressed else None
        if rhs is None:
            import scipy.sparse as sp

            rhs = sp.csr_matrix(self.matrices.rhs_mass)
        h = mesh.h
        self._inv_d, self._inv_o = 4.0 / h, -2.0 / h
        coo = rhs.tocoo()
        shift = coo.row // 2 - coo.col // 2
        # the rhs pairing is block lower bidiagonal whenever the test
        # functions' exponential tails die within one element
        self._block_diag = bool(np.all((shift >= 0) & (shift <= 1)))
        if self._block_diag:
            nel = mesh.n_elements
            diag = np.zeros((nel, 2, 2))
            sub = np.zeros((max(nel - 1, 1), 2, 2))
            on = shift == 0
            diag[coo.col[on] // 2, coo.row[on] % 2, coo.col[on] % 2] = coo.data[on]
            off = shift == 1
            sub[coo.col[off] // 2, coo.row[off] % 2, coo.col[off] % 2] = coo.data[off]
            minv = np.array([[self._inv_d, self._inv_o], [self._inv_o, self._inv_d]])
            # q_f = M^{-1} (D_f^T y_f + S_f^T y_{f+1}) with D, S the (trial
            # row, test col) blocks of the rhs pairing
            self._PD = np.ascontiguousarray(
                np.einsum("ij,ejk->eik", minv, diag.transpose(0, 2, 1))
            )
            self._PS = np.ascontiguousarray(
                np.einsum("ij,ejk->eik", minv, sub[: nel - 1].transpose(0, 2, 1))
                if nel > 1
                else np.zeros((0, 2, 2))
            )
        else:
            rsys = rhs.T.tocsr()
            self._rdata = np.ascontiguousarray(rsys.data, dtype=float)
            self._rindices = np.ascontiguousarray(rsys.indices, dtype=np.int64)
            self._rindptr = np.ascontiguousarray(rsys.indptr, dtype=np.int64)
        # Sherman-Morrison data for lhs^T = M + (dt a vvals) e_{n-1}^T
        u = self.dt * model.a * self.matrices.test_end_values
        smu = np.empty(n)
        ub = u.reshape(-1, 2)
        smu[0::2] = self._inv_d * ub[:, 0] + self._inv_o * ub[:, 1]
        smu[1::2] = self._inv_o * ub[:, 0] + self._inv_d * ub[:, 1]
        self._smu = np.ascontiguousarray(smu)
        self._denom = 1.0 + smu[-1]

    def initial_state(self) -> np.ndarray:
        """Nodal coefficients of P_h applied to the homogenized initial data."""
        wrapped = lambda x: self.model.homogenized_initial(x)
        wrapped.vectorized = True
        return project_L2(wrapped, self.mesh).coefficients

    def run(
        self,
        increments=None,
        n_steps: int | None = None,
        state0: np.ndarray | None = None,
    ) -> PathResult:
        """Advance the path; ``increments`` is an (m, n_modes) array or an
        iterable of such chunks (concatenated along time).  With no noise
        basis, ``n_steps`` fixes the step count."""
        c = np.ascontiguousarray(
            self.initial_state() if state0 is None else np.array(state0, dtype=float)
        )
        if self.mode_basis is None:
            if n_steps is None:
                raise ValueError("n_steps required for deterministic runs")
            chunks = _zero_chunks(n_steps, self.mesh.n_elements + 1)
            total = n_steps
        else:
            if increments is None:
                raise ValueError("increments required when a mode basis is set")
            if isinstance(increments, np.ndarray):
                chunks = (increments,)
                total = increments.shape[0]
            else:
                chunks = list(increments)
                total = sum(ch.shape[0] for ch in chunks)
        done = 0
        aborted = False
        for chunk in chunks:
            if self.mode_basis is None:
                dl_bnd = chunk
            else:
                dl_bnd = np.ascontiguousarray(chunk @ self.mode_basis.T)
            if self._block_diag:
                did = _kernel.run_steps_block(
                    c,
                    dl_bnd,
                    self.prof,
                    self.cin,
                    self.dt,
                    self._PD,
                    self._PS,
                    self._smu,
                    self._denom,
                    self.blowup,
                )
            else:
                did = _kernel.run_steps(
                    c,
                    dl_bnd,
                    self.prof,
                    self.cin,
                    self.dt,
                    self._rdata,
                    self._rindices,
                    self._rindptr,
                    self._inv_d,
                    self._inv_o,
                    self._smu,
                    self._denom,
                    self.blowup,
                )
            done += did
            if did < dl_bnd.shape[0]:
                aborted = True
                break
        hom = DGFunction(self.mesh, c)
        return PathResult(
            state=self.model.unhomogenize_state(hom),
            state_hom=hom,
            steps_done=done,
            n_steps=total,
        )


def _zero_chunks(n_steps: int, width: int, chunk: int = 4096):
    for start in range(0, n_steps, chunk):
        yield np.zeros((min(chunk, n_steps - start), width))


def boundary_to_nodal(values: np.ndarray) -> np.ndarray:
    """Expand element-boundary values of a continuous field to DG nodes."""
    values = np.asarray(values, dtype=float)
    out = np.empty(2 * (values.shape[0] - 1))
    out[0::2] = values[:-1]
    out[1::2] = values[1:]
    return out


def solve_deterministic(
    model: ForwardModel,
    mesh: Mesh1D,
    dt: float,
    T: float,
    compressed: bool = True,
) -> PathResult:
    """Noise-free solve over [0, T]; dt must divide T up to round-off."""
    m = int(round(T / dt))
    if m < 0 or abs(m * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt")
    solver = PathSolver(model, mesh, dt, mode_basis=None, compressed=compressed)
    return solver.run(n_steps=m)


@dataclass
class Trajectory:
    """Recorded states of one path; either all steps or the final state."""

    states: list  # list of (step_index, DGFunction) in original variables
    n_steps: int
    final_only: bool
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> DGFunction:
        return self.states[-1][1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,element_index,x_left,x_right,value_left,value_right\n")
        for idx, state in self.states:
            b = state.mesh.boundaries
            c = state.coefficients
            for e in range(state.mesh.n_elements):
                buf.write(
                    f"{idx},{e},{float(b[e])!r},{float(b[e + 1])!r},"
                    f"{float(c[2 * e])!r},{float(c[2 * e + 1])!r}\n"
                )
        return buf.getvalue()


def solve_path_recorded(
    model: ForwardModel,
    mesh: Mesh1D,
    dt: float,
    increments: np.ndarray,
    mode_basis: np.ndarray,
    record_every: int = 1,
) -> Trajectory:
    """Step-by-step solve that records intermediate states (CLI/plotting path).

    Uses the factorized-matrix stepper; for large step counts prefer
    PathSolver.run, which only returns the final state.
    """
    solver = PathSolver(model, mesh, dt, mode_basis=mode_basis)
    c = solver.initial_state()
    hom = DGFunction(mesh, c)
    states = [(0, model.unhomogenize_state(hom))]
    m = increments.shape[0]
    for i in range(m):
        dl = DGFunction(mesh, boundary_to_nodal(mode_basis @ increments[i]))
        hom = step(hom, dl, solver.matrices, model, compressed=solver.compressed)
        if not np.all(np.isfinite(hom.coefficients)) or np.max(
            np.abs(hom.coefficients)
        ) > solver.blowup:
            break
        if (i + 1) % record_every == 0 or i == m - 1:
            states.append((i + 1, model.unhomogenize_state(hom)))
    return Trajectory(states=states, n_steps=m, final_only=False)
