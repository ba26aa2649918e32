# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled time-stepping kernels; see _kernel_py for the semantics."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

BACKEND = "compiled"


def run_steps(
    double[::1] c,
    double[:, ::1] dl_bnd,
    double[::1] prof,
    double cin,
    double dt,
    double[::1] rdata,
    long long[::1] rindices,
    long long[::1] rindptr,
    double inv_d,
    double inv_o,
    double[::1] smu,
    double denom,
    double blowup,
):
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t n_steps = dl_bnd.shape[0]
    cdef Py_ssize_t i, r, k, e
    cdef double acc, gx, corr, maxabs, av, b0, b1
    cdef double[::1] y = np.empty(n)
    cdef double[::1] b = np.empty(n)
    cdef double[::1] new = np.empty(n)

    for i in range(n_steps):
        for e in range(n // 2):
            gx = prof[2 * e] * (c[2 * e] + cin)
            y[2 * e] = c[2 * e] + gx * (dt * gx + dl_bnd[i, e])
            gx = prof[2 * e + 1] * (c[2 * e + 1] + cin)
            y[2 * e + 1] = c[2 * e + 1] + gx * (dt * gx + dl_bnd[i, e + 1])
        for r in range(n):
            acc = 0.0
            for k in range(rindptr[r], rindptr[r + 1]):
                acc += rdata[k] * y[rindices[k]]
            b[r] = acc
        for e in range(n // 2):
            b0 = b[2 * e]
            b1 = b[2 * e + 1]
            new[2 * e] = inv_d * b0 + inv_o * b1
            new[2 * e + 1] = inv_o * b0 + inv_d * b1
        corr = new[n - 1] / denom
        maxabs = 0.0
        for r in range(n):
            new[r] = new[r] - smu[r] * corr
            av = fabs(new[r])
            if av > maxabs:
                maxabs = av
        if maxabs != maxabs or maxabs > blowup:
            return i
        for r in range(n):
            c[r] = new[r]
    return n_steps


def run_steps_block(
    double[::1] c,
    double[:, ::1] dl_bnd,
    double[::1] prof,
    double cin,
    double dt,
    double[:, :, ::1] PD,
    double[:, :, ::1] PS,
    double[::1] smu,
    double denom,
    double blowup,
):
    cdef Py_ssize_t nel = PD.shape[0]
    cdef Py_ssize_t n = 2 * nel
    cdef Py_ssize_t n_steps = dl_bnd.shape[0]
    cdef Py_ssize_t i, e
    cdef double gx, corr, maxabs, av
    # structure-of-arrays copies so the per-element loops vectorize
    cdef double[::1] c0 = np.ascontiguousarray(np.asarray(c)[0::2])
    cdef double[::1] c1 = np.ascontiguousarray(np.asarray(c)[1::2])
    cdef double[::1] p0 = np.ascontiguousarray(np.asarray(prof)[0::2])
    cdef double[::1] p1 = np.ascontiguousarray(np.asarray(prof)[1::2])
    cdef double[::1] s0 = np.ascontiguousarray(np.asarray(smu)[0::2])
    cdef double[::1] s1 = np.ascontiguousarray(np.asarray(smu)[1::2])
    cdef cnp.ndarray PDa = np.ascontiguousarray(np.asarray(PD).reshape(nel, 4).T)
    cdef double[:, ::1] pd = PDa
    cdef cnp.ndarray PSa = np.ascontiguousarray(
        np.concatenate([np.asarray(PS).reshape(-1, 4), np.zeros((1, 4))]).T
    )
    cdef double[:, ::1] ps = PSa
    cdef double[::1] y0 = np.empty(nel + 1)
    cdef double[::1] y1 = np.empty(nel + 1)
    cdef double[::1] q0 = np.empty(nel)
    cdef double[::1] q1 = np.empty(nel)

    cdef Py_ssize_t done = 0
    cdef double st0, st1
    cdef bint bad = 0
    y0[nel] = 0.0
    y1[nel] = 0.0
    # keep the state implicitly as q - smu * corr and fold the
    # Sherman-Morrison correction into the next step's data pass
    for e in range(nel):
        q0[e] = c0[e]
        q1[e] = c1[e]
    corr = 0.0
    for i in range(n_steps):
        for e in range(nel):
            st0 = q0[e] - s0[e] * corr
            gx = p0[e] * (st0 + cin)
            y0[e] = st0 + gx * (dt * gx + dl_bnd[i, e])
            st1 = q1[e] - s1[e] * corr
            gx = p1[e] * (st1 + cin)
            y1[e] = st1 + gx * (dt * gx + dl_bnd[i, e + 1])
        for e in range(nel):
            q0[e] = (
                pd[0, e] * y0[e] + pd[1, e] * y1[e]
                + ps[0, e] * y0[e + 1] + ps[1, e] * y1[e + 1]
            )
            q1[e] = (
                pd[2, e] * y0[e] + pd[3, e] * y1[e]
                + ps[2, e] * y0[e + 1] + ps[3, e] * y1[e + 1]
            )
        corr = q1[nel - 1] / denom
        # blow-up detection is amortized: overflow propagates as inf/nan
        # and is caught at the next checkpoint
        if (i & 255) == 255 or i == n_steps - 1:
            maxabs = 0.0
            for e in range(nel):
                av = fabs(q0[e])
                if av > maxabs:
                    maxabs = av
                av = fabs(q1[e])
                if av > maxabs:
                    maxabs = av
            if maxabs != maxabs or maxabs > blowup:
                bad = 1
                break
            done = i + 1
    for e in range(nel):
        c[2 * e] = q0[e] - s0[e] * corr
        c[2 * e + 1] = q1[e] - s1[e] * corr
    if bad:
        return done
    return n_steps
