# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; ``_fallback.py`` holds the reference NumPy versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, M_PI

cnp.import_array()


def wigner_grid(rho, xvec, pvec):
    """Parity-convention Wigner function, see ``_fallback.wigner_grid``."""
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    cdef double[:, ::1] rr = np.ascontiguousarray(rho.real)
    cdef double[:, ::1] ri = np.ascontiguousarray(rho.imag)
    cdef double[::1] xs = np.ascontiguousarray(xvec, dtype=np.float64)
    cdef double[::1] ps = np.ascontiguousarray(pvec, dtype=np.float64)
    cdef Py_ssize_t d = rr.shape[0], nx = xs.shape[0], npp = ps.shape[0]
    out = np.empty((npp, nx), dtype=np.float64)
    cdef double[:, ::1] W = out
    # three-term recurrence coefficients for sqrt(n!/(n+k)!) L_n^(k), indexed [k, n]
    n_idx = np.arange(d, dtype=np.float64)[None, :]
    k_idx = np.arange(d, dtype=np.float64)[:, None]
    inv_np = 1.0 / np.sqrt((n_idx + 1.0) * (n_idx + k_idx + 1.0))
    cdef double[:, ::1] cinv = inv_np
    cdef double[:, ::1] ca = (2.0 * n_idx + 1.0 + k_idx) * inv_np
    cdef double[:, ::1] cb = np.sqrt(n_idx * (n_idx + k_idx)) * inv_np
    cdef double[::1] isq = 1.0 / np.sqrt(np.maximum(np.arange(d, dtype=np.float64), 1.0))
    cdef Py_ssize_t i, j, k, n
    cdef double x, p, r2, g, g_prev, g_next, total, sign, acc_re, acc_im, q_re, q_im, t_re, bx, bp
    for j in range(npp):
        p = ps[j]
        for i in range(nx):
            x = xs[i]
            bx = 2.0 * x
            bp = -2.0 * p
            r2 = 4.0 * (x * x + p * p)
            q_re = exp(-0.5 * r2)
            q_im = 0.0
            total = 0.0
            for k in range(d):
                if k > 0:
                    t_re = (q_re * bx - q_im * bp) * isq[k]
                    q_im = (q_re * bp + q_im * bx) * isq[k]
                    q_re = t_re
                g_prev = 1.0
                acc_re = rr[k, 0]
                acc_im = ri[k, 0]
                if d - k > 1:
                    g = (1.0 + k - r2) * cinv[k, 0]
                    acc_re -= rr[k + 1, 1] * g
                    acc_im -= ri[k + 1, 1] * g
                    sign = -1.0
                    for n in range(1, d - k - 1):
                        g_next = (ca[k, n] - r2 * cinv[k, n]) * g - cb[k, n] * g_prev
                        g_prev = g
                        g = g_next
                        sign = -sign
                        acc_re += sign * rr[n + 1 + k, n + 1] * g
                        acc_im += sign * ri[n + 1 + k, n + 1] * g
                if k == 0:
                    total += acc_re * q_re - acc_im * q_im
                else:
                    total += 2.0 * (acc_re * q_re - acc_im * q_im)
            W[j, i] = (2.0 / M_PI) * total
    return out


cdef void _csr_dense(double complex[::1] data, int[::1] ind, int[::1] ptr,
                     double complex[:, ::1] rho, double complex[:, ::1] out,
                     bint accumulate) noexcept nogil:
    # out (+)= A @ rho for CSR A; row-oriented so rho rows stream through cache
    cdef Py_ssize_t m = rho.shape[0], i, j, p
    cdef int c
    cdef double complex a
    for i in range(m):
        if not accumulate:
            for j in range(m):
                out[i, j] = 0
        for p in range(ptr[i], ptr[i + 1]):
            a = data[p]
            c = ind[p]
            for j in range(m):
                out[i, j] = out[i, j] + a * rho[c, j]


cdef void _herm_part(double complex[:, ::1] x, double complex[:, ::1] out,
                     bint add) noexcept nogil:
    # out = x + x^+ (add=True) or out = x^+ (add=False), in cache blocks
    cdef Py_ssize_t m = x.shape[0], bi, bj, i, j, ie, je
    cdef Py_ssize_t B = 32
    bi = 0
    while bi < m:
        ie = bi + B if bi + B < m else m
        bj = 0
        while bj < m:
            je = bj + B if bj + B < m else m
            for i in range(bi, ie):
                for j in range(bj, je):
                    if add:
                        out[i, j] = x[i, j] + x[j, i].conjugate()
                    else:
                        out[i, j] = x[j, i].conjugate()
            bj += B
        bi += B


def lindblad_rhs(rho, heff, jumps):
    """-i (Heff rho - rho Heff^+) + sum_k L_k rho L_k^+ for Hermitian rho.

    ``heff`` and every element of ``jumps`` are CSR matrices with complex128
    data and int32 indices (see ``kernels.as_csr32``).
    """
    cdef double complex[:, ::1] r = np.ascontiguousarray(rho, dtype=np.complex128)
    cdef Py_ssize_t m = r.shape[0]
    res = np.empty((m, m), dtype=np.complex128)
    cdef double complex[:, ::1] out = res
    cdef double complex[:, ::1] x = np.empty((m, m), dtype=np.complex128)
    cdef double complex[:, ::1] xh = np.empty((m, m), dtype=np.complex128)
    cdef double complex[::1] data
    cdef int[::1] ind, ptr
    cdef double complex[::1] hd = -1j * np.asarray(heff.data)
    _csr_dense(hd, heff.indices, heff.indptr, r, x, False)
    _herm_part(x, out, True)
    for L in jumps:
        data, ind, ptr = L.data, L.indices, L.indptr
        # L rho L^+ = L (L rho)^+ since rho is Hermitian
        _csr_dense(data, ind, ptr, r, x, False)
        _herm_part(x, xh, False)
        _csr_dense(data, ind, ptr, xh, out, True)
    return res
