"""Uniform 1D mesh on (0,1) and discontinuous piecewise-linear functions.

The trial space consists of functions that are linear inside each element
with independent left/right traces at the element interfaces.  Coefficients
are stored nodally: entry ``2*e`` is the value at the left endpoint of
element ``e``, entry ``2*e + 1`` the value at its right endpoint.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


def gauss_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class Mesh1D:
    n_elements: int
    h: float
    boundaries: np.ndarray = field(repr=False)

    def element_of(self, x: float) -> int:
        """Index of the element owning x (half-open [x_left, x_right))."""
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"x={x} outside [0, 1]")
        return min(int(x * self.n_elements), self.n_elements - 1)

    @property
    def node_coords(self) -> np.ndarray:
        """x-coordinates of the 2*n_elements nodal degrees of freedom."""
        lefts = self.boundaries[:-1]
        rights = self.boundaries[1:]
        return np.column_stack([lefts, rights]).ravel()


def build_mesh(n_elements: int) -> Mesh1D:
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    boundaries = np.linspace(0.0, 1.0, n_elements + 1)
    return Mesh1D(n_elements=n_elements, h=1.0 / n_elements, boundaries=boundaries)


class DGFunction:
    """Piecewise-linear discontinuous function given by nodal coefficients."""

    def __init__(self, mesh: Mesh1D, coefficients: np.ndarray):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (2 * mesh.n_elements,):
            raise ValueError(
                f"expected {2 * mesh.n_elements} coefficients, got {coefficients.shape}"
            )
        self.mesh = mesh
        self.coefficients = coefficients

    @classmethod
    def zero(cls, mesh: Mesh1D) -> "DGFunction":
        return cls(mesh, np.zeros(2 * mesh.n_elements))

    def element_values(self, e: int) -> tuple[float, float]:
        return self.coefficients[2 * e], self.coefficients[2 * e + 1]

    def eval(self, x: float, side: str = "auto") -> float:
        """Evaluate at x; at interior interfaces ``side`` picks the trace.

        ``side='auto'`` uses the right element's left trace (the element
        owning the half-open interval), ``side='left'``/``'right'`` select
        the one-sided limits explicitly.
        """
        mesh = self.mesh
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"x={x} outside [0, 1]")
        e = mesh.element_of(x)
        if side == "left":
            if e > 0 and x == mesh.boundaries[e]:
                e -= 1
        elif side not in ("auto", "right"):
            raise ValueError(f"unknown side {side!r}")
        vl, vr = self.element_values(e)
        s = (x - mesh.boundaries[e]) / mesh.h
        return vl + (vr - vl) * s

    def __call__(self, x: float, side: str = "auto") -> float:
        return self.eval(x, side)

    def eval_many(self, x: np.ndarray) -> np.ndarray:
        """Vectorized evaluation with the 'auto' trace convention."""
        x = np.asarray(x, dtype=float)
        e = np.minimum((x * self.mesh.n_elements).astype(int), self.mesh.n_elements - 1)
        s = (x - self.mesh.boundaries[e]) / self.mesh.h
        vl = self.coefficients[2 * e]
        vr = self.coefficients[2 * e + 1]
        return vl + (vr - vl) * s

    def interface_jumps(self) -> np.ndarray:
        """Left-minus-right trace at the interior interfaces."""
        c = self.coefficients
        return c[1:-1:2] - c[2::2]

    def to_csv(self) -> str:
        """CSV rows (element_index, x_left, x_right, value_left, value_right)."""
        buf = io.StringIO()
        buf.write("element_index,x_left,x_right,value_left,value_right\n")
        b = self.mesh.boundaries
        c = self.coefficients
        for e in range(self.mesh.n_elements):
            buf.write(
                f"{e},{float(b[e])!r},{float(b[e + 1])!r},"
                f"{float(c[2 * e])!r},{float(c[2 * e + 1])!r}\n"
            )
        return buf.getvalue()


def broken_inner(u: DGFunction, v: DGFunction) -> float:
    """Element-wise L2 inner product, exact for piecewise linears."""
    if u.mesh.n_elements != v.mesh.n_elements:
        raise ValueError("meshes do not match")
    a = u.coefficients.reshape(-1, 2)
    b = v.coefficients.reshape(-1, 2)
    h = u.mesh.h
    # int_0^h (a_l + (a_r-a_l)s/h)(b_l + (b_r-b_l)s/h) ds
    per_el = (
        2.0 * a[:, 0] * b[:, 0]
        + a[:, 0] * b[:, 1]
        + a[:, 1] * b[:, 0]
        + 2.0 * a[:, 1] * b[:, 1]
    ) * (h / 6.0)
    return float(per_el.sum())


def broken_norm(u: DGFunction) -> float:
    """Broken L2 norm, exact for piecewise linears."""
    return float(np.sqrt(max(broken_inner(u, u), 0.0)))


def _eval_columns(f, x: np.ndarray) -> np.ndarray:
    vals = np.asarray([f(xi) for xi in x], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function returned non-finite values")
    return vals


def project_L2(f, mesh: Mesh1D, n_gauss: int = 5) -> DGFunction:
    """Broken-L2-orthogonal projection onto the DG space.

    The per-element 2x2 mass systems decouple; the load vector is computed
    with an n_gauss-point Gauss rule per element (exact for polynomials of
    degree 2*n_gauss - 1).
    """
    if isinstance(f, DGFunction) and f.mesh.n_elements == mesh.n_elements:
        return DGFunction(mesh, f.coefficients.copy())
    gx, gw = gauss_rule(n_gauss)
    h = mesh.h
    lefts = mesh.boundaries[:-1]
    pts = lefts[:, None] + h * gx[None, :]
    if callable_vectorized(f):
        fv = check_finite(f(pts))
    else:
        fv = _eval_columns(f, pts.ravel()).reshape(pts.shape)
    phi_l = 1.0 - gx
    phi_r = gx
    rhs_l = h * fv @ (gw * phi_l)
    rhs_r = h * fv @ (gw * phi_r)
    # inverse of h/6 [[2, 1], [1, 2]]
    d, o = 4.0 / h, -2.0 / h
    cl = d * rhs_l + o * rhs_r
    cr = o * rhs_l + d * rhs_r
    return DGFunction(mesh, np.column_stack([cl, cr]).ravel())


def callable_vectorized(f) -> bool:
    """Heuristic: numpy ufuncs and functions advertising vectorized support."""
    return getattr(f, "vectorized", False) or isinstance(f, np.ufunc)


def check_finite(vals: np.ndarray) -> np.ndarray:
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function returned non-finite values")
    return vals


def nodal_interpolate(f, mesh: Mesh1D, one_sided: bool = False) -> DGFunction:
    """Per-element linear interpolant at the element endpoints.

    With ``one_sided=True``, endpoint values of a plain callable are taken as
    limits from within the element (via nextafter), so mesh-aligned
    discontinuities resolve to the correct trace.
    """
    coeffs = np.empty(2 * mesh.n_elements)
    if isinstance(f, DGFunction):
        for e in range(mesh.n_elements):
            xl, xr = mesh.boundaries[e], mesh.boundaries[e + 1]
            coeffs[2 * e] = f.eval(xl, side="right" if e > 0 else "auto")
            coeffs[2 * e + 1] = f.eval(xr, side="left")
        return DGFunction(mesh, coeffs)
    for e in range(mesh.n_elements):
        xl, xr = mesh.boundaries[e], mesh.boundaries[e + 1]
        if one_sided:
            xl_eval = np.nextafter(xl, xr)
            xr_eval = np.nextafter(xr, xl)
        else:
            xl_eval, xr_eval = xl, xr
        coeffs[2 * e] = f(xl_eval)
        coeffs[2 * e + 1] = f(xr_eval)
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("function returned non-finite values at element endpoints")
    return DGFunction(mesh, coeffs)


def broken_error(u: DGFunction, f, n_gauss: int = 10) -> float:
    """Broken L2 distance between a DG function and a callable."""
    gx, gw = gauss_rule(n_gauss)
    h = u.mesh.h
    lefts = u.mesh.boundaries[:-1]
    pts = lefts[:, None] + h * gx[None, :]
    a = u.coefficients.reshape(-1, 2)
    uv = a[:, [0]] + (a[:, [1]] - a[:, [0]]) * gx[None, :]
    fv = check_finite(f(pts)) if callable_vectorized(f) \
        else _eval_columns(f, pts.ravel()).reshape(pts.shape)
    return float(np.sqrt(h * np.sum(((uv - fv) ** 2) @ gw)))
