"""Optimal test space, discrete bilinear form, and time-step matrices.

For transport speed a > 0 on (0,1) the outflow boundary is x = 0 and test
functions solve v + dt*a*v' = w with v(0) = 0.  On each element the solution
has the closed form A + B*s + C*exp(-s/tau) in the local coordinate s, with
tau = dt*a; the value at the right element edge propagates into the next
element as a decaying exponential.  All matrix entries are therefore exact
integrals of (linear polynomial) x (polynomial + exponential) factors.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import DGFunction, Mesh1D, broken_inner

INF_SUP_DT_LIMIT = 1.0 / 3.0


class AssemblyError(RuntimeError):
    pass


def exp_moments(c: float, h: float) -> tuple[float, float, float]:
    """Exact moments int_0^h s^k exp(-c s) ds for k = 0, 1, 2.

    Switches to a series for small c*h to avoid cancellation.
    """
    ch = c * h
    if ch < 0.125:
        # m_k = h^{k+1} sum_j (-ch)^j / (j! (k+j+1))
        out = []
        for k in range(3):
            term = 1.0
            acc = 1.0 / (k + 1)
            for j in range(1, 22):
                term *= -ch / j
                acc += term / (k + j + 1)
            out.append(h ** (k + 1) * acc)
        return out[0], out[1], out[2]
    e = np.exp(-ch)
    m0 = (1.0 - e) / c
    m1 = (m0 - h * e) / c
    m2 = (2.0 * m1 - h * h * e) / c
    return m0, m1, m2


@dataclass
class _ElementRep:
    """v(s) = A + B*s + C*exp(-s/tau) on one element, s in [0, h]."""

    A: float
    B: float
    C: float


class TestFunction:
    """Exact test-space image v = (I - dt*A*)^{-1} w of a DG trial function."""

    def __init__(self, source: DGFunction, dt: float, a: float):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if a <= 0.0:
            raise ValueError("transport speed a must be positive")
        self.source = source
        self.dt = dt
        self.a = a
        self.tau = dt * a
        mesh = source.mesh
        h = mesh.h
        tau = self.tau
        decay = np.exp(-h / tau)
        reps: list[_ElementRep] = []
        v_in = 0.0
        for e in range(mesh.n_elements):
            wl, wr = source.element_values(e)
            q = (wr - wl) / h
            A = wl - q * tau
            B = q
            C = v_in - A
            reps.append(_ElementRep(A, B, C))
            v_in = A + B * h + C * decay
        self.reps = reps
        self.end_value = v_in  # v(1)

    @property
    def mesh(self) -> Mesh1D:
        return self.source.mesh

    def eval(self, x: float, side: str = "auto") -> float:
        mesh = self.mesh
        e = mesh.element_of(x)
        if side == "left" and e > 0 and x == mesh.boundaries[e]:
            e -= 1
        r = self.reps[e]
        s = x - mesh.boundaries[e]
        return r.A + r.B * s + r.C * np.exp(-s / self.tau)

    def __call__(self, x: float, side: str = "auto") -> float:
        return self.eval(x, side)

    def derivative(self, x: float, side: str = "auto") -> float:
        mesh = self.mesh
        e = mesh.element_of(x)
        if side == "left" and e > 0 and x == mesh.boundaries[e]:
            e -= 1
        r = self.reps[e]
        s = x - mesh.boundaries[e]
        return r.B - (r.C / self.tau) * np.exp(-s / self.tau)

    def ode_residual(self, x: float) -> float:
        """v(x) + dt*a*v'(x) - w(x) inside the owning element."""
        return self.eval(x) + self.tau * self.derivative(x) - self.source.eval(x)


def test_function(w: DGFunction, dt: float, a: float) -> TestFunction:
    return TestFunction(w, dt, a)


def _rep_of_dg(u: DGFunction, e: int) -> _ElementRep:
    vl, vr = u.element_values(e)
    return _ElementRep(vl, (vr - vl) / u.mesh.h, 0.0)


def _rep_of_derivative(v: TestFunction, e: int) -> tuple[_ElementRep, float]:
    r = v.reps[e]
    return _ElementRep(r.B, 0.0, -r.C / v.tau), v.tau


def _product_integral(
    r1: _ElementRep, c1: float, r2: _ElementRep, c2: float, h: float
) -> float:
    """Exact int_0^h (A1 + B1 s + C1 e^{-c1 s})(A2 + B2 s + C2 e^{-c2 s}) ds."""
    val = (
        r1.A * r2.A * h
        + (r1.A * r2.B + r2.A * r1.B) * h * h / 2.0
        + r1.B * r2.B * h ** 3 / 3.0
    )
    if r2.C != 0.0:
        m0, m1, _ = exp_moments(c2, h)
        val += r2.C * (r1.A * m0 + r1.B * m1)
    if r1.C != 0.0:
        m0, m1, _ = exp_moments(c1, h)
        val += r1.C * (r2.A * m0 + r2.B * m1)
    if r1.C != 0.0 and r2.C != 0.0:
        m0, _, _ = exp_moments(c1 + c2, h)
        val += r1.C * r2.C * m0
    return val


def _volume_term_exact(w, v: TestFunction) -> float:
    """(w, a v')_{H,h} with all element integrals in closed form."""
    mesh = v.mesh
    total = 0.0
    for e in range(mesh.n_elements):
        dr, tau = _rep_of_derivative(v, e)
        if isinstance(w, TestFunction):
            wr, cw = w.reps[e], 1.0 / w.tau
        else:
            wr, cw = _rep_of_dg(w, e), 1.0
        total += _product_integral(wr, cw, dr, 1.0 / tau, mesh.h)
    return v.a * total


def _volume_term_quadrature(w, v, vprime, mesh: Mesh1D, a: float, n_gauss: int = 20) -> float:
    from .mesh import gauss_rule

    gx, gw = gauss_rule(n_gauss)
    total = 0.0
    for e in range(mesh.n_elements):
        xl = mesh.boundaries[e]
        pts = xl + mesh.h * gx
        wv = np.array([w.eval(x) if hasattr(w, "eval") else w(x) for x in pts])
        dv = np.array([vprime(x) for x in pts])
        total += mesh.h * float(np.sum(gw * wv * dv))
    return a * total


def _flux_terms(w, v, mesh: Mesh1D, a: float) -> float:
    """Sum of upwind flux terms over interior edges plus the inflow edge.

    The upwind trace is selected by the average-minus-jump formula, which
    for a > 0 picks the trace of the right (upstream) element.  The second
    argument must vanish at the outflow boundary x = 0.
    """

    def w_trace(x, side):
        return w.eval(x, side=side) if hasattr(w, "eval") else w(x)

    def v_trace(x, side):
        return v.eval(x, side=side) if hasattr(v, "eval") else v(x)

    total = 0.0
    for f in range(1, mesh.n_elements):
        x = mesh.boundaries[f]
        w_left, w_right = w_trace(x, "left"), w_trace(x, "right")
        v_jump = v_trace(x, "left") - v_trace(x, "right")
        if v_jump != 0.0:
            # {a w} [v] - (|a n|/2) [w][v] == a * w_right * [v]
            total += (
                a * 0.5 * (w_left + w_right) * v_jump
                - 0.5 * a * (w_left - w_right) * v_jump
            )
    # inflow boundary x = 1, interior traces with the paper's sign convention
    total += -a * w_trace(1.0, "left") * v_trace(1.0, "left")
    return total


def bilinear_Bh(w, v, vprime=None, a: float | None = None, mesh: Mesh1D | None = None) -> float:
    """Discrete bilinear form (w, a v')_{H,h} minus the upwind flux sum.

    ``v`` is a TestFunction (closed-form path) or a smooth callable with its
    derivative passed as ``vprime`` (quadrature path, requires ``a`` and a
    mesh via ``w`` or ``mesh``).
    """
    if isinstance(v, TestFunction):
        a = v.a
        mesh = v.mesh
        vol = _volume_term_exact(w, v)
    else:
        if vprime is None or a is None:
            raise ValueError("generic v needs vprime and a")
        if mesh is None:
            mesh = w.mesh
        vol = _volume_term_quadrature(w, v, vprime, mesh, a)
    return vol - _flux_terms(w, v, mesh, a)


def edge_sum_quadratic(v, mesh: Mesh1D | None = None, a: float | None = None) -> float:
    """Edge-only identity for B_h(v, v), valid for one-sided-traceable v.

    Equals sum over interior edges of (a/2) [v]^2 plus (3a/2) v(1)^2 minus
    (a/2) v(0)^2; derived by element-wise integration by parts from the
    upwind flux definition.
    """
    if isinstance(v, TestFunction):
        mesh, a = v.mesh, v.a
    total = 0.0
    for f in range(1, mesh.n_elements):
        x = mesh.boundaries[f]
        jump = v.eval(x, side="left") - v.eval(x, side="right")
        total += 0.5 * a * jump * jump
    total += 1.5 * a * v.eval(1.0, side="left") ** 2
    total -= 0.5 * a * v.eval(0.0) ** 2
    return total


class TestSpaceFunction:
    """Linear combination of test-space basis images, for property checks."""

    def __init__(self, matrices: "SchemeMatrices", coeffs: np.ndarray):
        self.matrices = matrices
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.source = DGFunction(matrices.mesh, self.coeffs)
        self._tf = TestFunction(self.source, matrices.dt, matrices.a)

    def eval(self, x: float, side: str = "auto") -> float:
        return self._tf.eval(x, side)

    def derivative(self, x: float, side: str = "auto") -> float:
        return self._tf.derivative(x, side)

    def as_test_function(self) -> TestFunction:
        return self._tf


def spectral_norm(A, rel_tol: float = 1e-6, max_iter: int = 100, seed: int = 0) -> float:
    """Largest singular value by power iteration on A^T A."""
    rng = np.random.default_rng(seed)
    n = A.shape[1]
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = A @ v
        v_new = A.T @ w
        norm = np.linalg.norm(v_new)
        if norm == 0.0:
            return 0.0
        sigma_new = np.sqrt(norm)
        v = v_new / norm
        if sigma > 0.0 and abs(sigma_new - sigma) <= rel_tol * sigma_new:
            return float(sigma_new)
        sigma = sigma_new
    return float(sigma)


def compress(rhs_mass: np.ndarray, dt: float) -> tuple[sp.csr_matrix, int, float]:
    """Drop entries below dt^2 times the spectral norm of the mass pairing."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    threshold = dt * dt * spectral_norm(rhs_mass)
    kept = np.where(np.abs(rhs_mass) >= threshold, rhs_mass, 0.0)
    out = sp.csr_matrix(kept)
    out.eliminate_zeros()
    return out, out.nnz, threshold


def mass_matrix(mesh: Mesh1D) -> sp.csr_matrix:
    h = mesh.h
    block = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
    blocks = np.broadcast_to(block, (mesh.n_elements, 2, 2))
    return sp.bsr_matrix(
        (blocks, np.arange(mesh.n_elements), np.arange(mesh.n_elements + 1)),
        shape=(2 * mesh.n_elements, 2 * mesh.n_elements),
    ).tocsr()


@dataclass
class SchemeMatrices:
    """Assembled time-step matrices, indexed (trial l, test j) as M_{lj}."""

    mesh: Mesh1D
    dt: float
    a: float
    lhs: np.ndarray
    rhs_mass: np.ndarray
    rhs_compressed: sp.csr_matrix
    mass: sp.csr_matrix
    bh_mat: np.ndarray
    test_end_values: np.ndarray  # v_j(1) for every test basis function
    n_retained: int
    compression_threshold: float
    _solver: object = field(default=None, repr=False)
    _rhs_sys: sp.csr_matrix = field(default=None, repr=False)
    _rhs_sys_full: sp.csr_matrix = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return 2 * self.mesh.n_elements

    def factorize(self):
        """LU-factorize the (test, trial)-ordered system matrix once."""
        if self._solver is None:
            system = sp.csc_matrix(self.lhs.T)
            try:
                self._solver = splu(system)
            except RuntimeError as exc:
                cond = np.linalg.cond(self.lhs)
                raise AssemblyError(
                    f"singular time-step matrix (condition estimate {cond:.3e})"
                ) from exc
            self._rhs_sys = sp.csr_matrix(self.rhs_compressed.T)
            self._rhs_sys_full = sp.csr_matrix(self.rhs_mass.T)
        return self._solver

    def step_solve(self, b: np.ndarray, compressed: bool = True) -> np.ndarray:
        """Solve one Petrov-Galerkin step for rhs data vector b."""
        solver = self.factorize()
        rhs = (self._rhs_sys if compressed else self._rhs_sys_full) @ b
        return solver.solve(rhs)

    def rank_one_correction(self) -> np.ndarray:
        """dt * a * w_l(1) v_j(1); the exact gap between lhs and the mass matrix."""
        corr = np.zeros_like(self.lhs)
        corr[-1, :] = self.dt * self.a * self.test_end_values
        return corr

    def export_coo(self, which: str = "rhs_compressed") -> str:
        mat = {
            "lhs": sp.coo_matrix(self.lhs),
            "rhs_mass": sp.coo_matrix(self.rhs_mass),
            "rhs_compressed": self.rhs_compressed.tocoo(),
            "mass": self.mass.tocoo(),
        }[which]
        buf = io.StringIO()
        buf.write("row,col,value\n")
        for r, c, val in zip(mat.row, mat.col, mat.data):
            buf.write(f"{r},{c},{val!r}\n")
        return buf.getvalue()


def assemble(mesh: Mesh1D, dt: float, a: float) -> SchemeMatrices:
    """Assemble lhs = (w_l, v_j) + dt*B_h(w_l, v_j) and the rhs mass pairing.

    All integrals are closed-form; B_h is formed from the test-space ODE
    identity dt*a*v' = w - v plus the inflow boundary pairing.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if a <= 0.0:
        raise ValueError("transport speed a must be positive")
    if dt > INF_SUP_DT_LIMIT:
        warnings.warn(
            f"dt={dt} exceeds 1/3; the discrete inf-sup guarantee does not apply",
            stacklevel=2,
        )
    nel = mesh.n_elements
    n = 2 * nel
    h = mesh.h
    tau = dt * a
    c = 1.0 / tau
    decay = np.exp(-h / tau)
    m0, m1, _ = exp_moments(c, h)
    jexp_l = m0 - m1 / h  # int phi_L exp(-s/tau)
    jexp_r = m1 / h

    rhs = np.zeros((n, n))
    end_values = np.empty(n)
    # local reps of the two nodal basis functions on their source element
    basis_reps = (
        _ElementRep(1.0 + tau / h, -1.0 / h, -(1.0 + tau / h)),  # left nodal
        _ElementRep(-tau / h, 1.0 / h, tau / h),  # right nodal
    )
    tail_decay = decay ** np.arange(nel)
    for e in range(nel):
        for local, rep in enumerate(basis_reps):
            j = 2 * e + local
            rhs[2 * e, j] = (
                rep.A * h / 2.0 + rep.B * h * h / 6.0 + rep.C * jexp_l
            )
            rhs[2 * e + 1, j] = (
                rep.A * h / 2.0 + rep.B * h * h / 3.0 + rep.C * jexp_r
            )
            d_out = rep.A + rep.B * h + rep.C * decay
            n_tail = nel - e - 1
            if n_tail > 0:
                scale = d_out * tail_decay[:n_tail]
                rhs[2 * e + 2 : n : 2, j] = scale * jexp_l
                rhs[2 * e + 3 : n : 2, j] = scale * jexp_r
                end_values[j] = d_out * tail_decay[n_tail - 1] * decay
            else:
                end_values[j] = d_out
    mass = mass_matrix(mesh)
    mass_dense = mass.toarray()
    # B_h(w_l, v_j) = (w_l, a v_j')_{H,h} + a w_l(1) v_j(1)
    #              = ((w_l, w_j) - (w_l, v_j)) / dt + a w_l(1) v_j(1)
    bh = (mass_dense - rhs) / dt
    bh[-1, :] += a * end_values
    lhs = rhs + dt * bh
    rhs_compressed, n_retained, threshold = compress(rhs, dt)
    return SchemeMatrices(
        mesh=mesh,
        dt=dt,
        a=a,
        lhs=lhs,
        rhs_mass=rhs,
        rhs_compressed=rhs_compressed,
        mass=mass,
        bh_mat=bh,
        test_end_values=end_values,
        n_retained=n_retained,
        compression_threshold=threshold,
    )
