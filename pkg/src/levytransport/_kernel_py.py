"""Pure-Python reference implementation of the hot time-stepping loops.

Semantics match ``_speedups``: advance the homogenized nodal state ``c`` in
place over a chunk of noise, solving the (mass + rank-one) system with the
Sherman-Morrison formula each step.  ``dl_bnd`` holds the noise field at the
element boundaries (shape (steps, n_elements + 1)); node ``2e`` reads column
``e`` and node ``2e + 1`` column ``e + 1``.  Both entry points return the
number of completed steps; a short count signals blow-up.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

BACKEND = "python"


def _expand(dl_row: np.ndarray) -> np.ndarray:
    # boundary values -> nodal values (left node e, right node e + 1)
    out = np.empty(2 * (dl_row.shape[0] - 1))
    out[0::2] = dl_row[:-1]
    out[1::2] = dl_row[1:]
    return out


def run_steps(
    c: np.ndarray,
    dl_bnd: np.ndarray,
    prof: np.ndarray,
    cin: float,
    dt: float,
    rdata: np.ndarray,
    rindices: np.ndarray,
    rindptr: np.ndarray,
    inv_d: float,
    inv_o: float,
    smu: np.ndarray,
    denom: float,
    blowup: float,
) -> int:
    """General path: CSR matvec with the transposed compressed rhs matrix."""
    n = c.shape[0]
    R = sp.csr_matrix((rdata, rindices, rindptr), shape=(n, n))
    n_steps = dl_bnd.shape[0]
    for i in range(n_steps):
        x = c + cin
        gx = prof * x
        y = c + gx * (dt * gx + _expand(dl_bnd[i]))
        b = (R @ y).reshape(-1, 2)
        q = np.empty_like(b)
        q[:, 0] = inv_d * b[:, 0] + inv_o * b[:, 1]
        q[:, 1] = inv_o * b[:, 0] + inv_d * b[:, 1]
        q = q.ravel()
        new = q - smu * (q[-1] / denom)
        m = np.max(np.abs(new))
        if not np.isfinite(m) or m > blowup:
            return i
        c[:] = new
    return n_steps


def run_steps_block(
    c: np.ndarray,
    dl_bnd: np.ndarray,
    prof: np.ndarray,
    cin: float,
    dt: float,
    PD: np.ndarray,
    PS: np.ndarray,
    smu: np.ndarray,
    denom: float,
    blowup: float,
) -> int:
    """Fast path when the compressed rhs matrix is 2x2 block lower bidiagonal
    (small dt*a/h: the test-function tail reaches one element downstream).

    ``PD``/``PS`` have shape (n_elements, 2, 2) resp. (n_elements - 1, 2, 2)
    and hold (mass block)^{-1} (diag/subdiag rhs block)^T, so one step is
    q_f = PD_f y_f + PS_f y_{f+1} plus the Sherman-Morrison correction.
    """
    n_steps = dl_bnd.shape[0]
    for i in range(n_steps):
        x = c + cin
        gx = prof * x
        y = (c + gx * (dt * gx + _expand(dl_bnd[i]))).reshape(-1, 2)
        q = np.einsum("eij,ej->ei", PD, y)
        q[:-1] += np.einsum("eij,ej->ei", PS, y[1:])
        q = q.ravel()
        new = q - smu * (q[-1] / denom)
        m = np.max(np.abs(new))
        if not np.isfinite(m) or m > blowup:
            return i
        c[:] = new
    return n_steps
