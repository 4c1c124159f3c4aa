# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched radix-2 FFT and the GRU recurrence.

Same call surface as ``fttgru._kernels_pure``; per-step matrix products go
through BLAS dgemm, everything else is plain C loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, cos, exp, sin, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "compiled"


cdef inline void _gemm(char ta, char tb, int m, int n, int k,
                       double alpha, double *a, int lda,
                       double *b, int ldb, double beta,
                       double *c, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def fft_pow2(z, bint inverse=False):
    """Radix-2 DFT of each row of ``z`` (shape (M, N), N a power of two)."""
    z = np.ascontiguousarray(z, dtype=np.complex128)
    cdef Py_ssize_t m = z.shape[0], n = z.shape[1]
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    out_arr = np.empty((m, n), dtype=np.complex128)
    cdef double complex[:, ::1] src = z
    cdef double complex[:, ::1] out = out_arr
    cdef Py_ssize_t row, i, j, x, y, bits, span, half, base, p
    cdef double sign = 1.0 if inverse else -1.0
    cdef double ang
    cdef double complex lo, hi
    if n == 1:
        out_arr[:] = z
        return out_arr
    bits = 0
    while (1 << bits) < n:
        bits += 1
    rev_arr = np.zeros(n, dtype=np.intp)
    cdef cnp.intp_t[::1] rev = rev_arr
    for i in range(n):
        x = i
        y = 0
        for j in range(bits):
            y = (y << 1) | (x & 1)
            x >>= 1
        rev[i] = y
    tw_arr = np.empty(n >> 1, dtype=np.complex128)
    cdef double complex[::1] tw = tw_arr
    for row in range(m):
        for i in range(n):
            out[row, i] = src[row, rev[i]]
    span = 2
    while span <= n:
        half = span >> 1
        for p in range(half):
            ang = sign * 2.0 * M_PI * p / span
            tw[p] = cos(ang) + 1j * sin(ang)
        for row in range(m):
            base = 0
            while base < n:
                for p in range(half):
                    lo = out[row, base + p]
                    hi = out[row, base + half + p] * tw[p]
                    out[row, base + p] = lo + hi
                    out[row, base + half + p] = lo - hi
                base += span
        span <<= 1
    if inverse:
        for row in range(m):
            for i in range(n):
                out[row, i] = out[row, i] / n
    return out_arr


def gru_forward(gx, uz, ur, uh, h0):
    """Run the gated-recurrence over T steps (see the pure kernel docstring)."""
    gx = np.ascontiguousarray(gx, dtype=np.float64)
    cdef double[:, :, ::1] g = gx
    cdef double[:, ::1] wz = np.ascontiguousarray(uz, dtype=np.float64)
    cdef double[:, ::1] wr = np.ascontiguousarray(ur, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(uh, dtype=np.float64)
    cdef double[:, ::1] h0v = np.ascontiguousarray(h0, dtype=np.float64)
    cdef Py_ssize_t b = g.shape[0], t_len = g.shape[1], u = g.shape[2] // 3
    h_arr = np.empty((b, t_len, u))
    z_arr = np.empty((b, t_len, u))
    r_arr = np.empty((b, t_len, u))
    hb_arr = np.empty((b, t_len, u))
    cdef double[:, :, ::1] h = h_arr
    cdef double[:, :, ::1] z = z_arr
    cdef double[:, :, ::1] r = r_arr
    cdef double[:, :, ::1] hb = hb_arr
    az_arr = np.empty((b, u))
    ar_arr = np.empty((b, u))
    ah_arr = np.empty((b, u))
    s_arr = np.empty((b, u))
    cdef double[:, ::1] az = az_arr
    cdef double[:, ::1] ar = ar_arr
    cdef double[:, ::1] ah = ah_arr
    cdef double[:, ::1] s = s_arr
    cdef double *hp
    cdef int hs, bi = <int> b, ui = <int> u
    cdef Py_ssize_t t, i, j
    cdef double zv, rv, hbv
    for t in range(t_len):
        if t == 0:
            hp = &h0v[0, 0]
            hs = ui
        else:
            hp = &h[0, t - 1, 0]
            hs = <int> (t_len * u)
        for i in range(b):
            for j in range(u):
                az[i, j] = g[i, t, j]
                ar[i, j] = g[i, t, u + j]
                ah[i, j] = g[i, t, 2 * u + j]
        # row-major X @ W via column-major dgemm on swapped operands
        _gemm(b'N', b'N', ui, bi, ui, 1.0, &wz[0, 0], ui, hp, hs, 1.0, &az[0, 0], ui)
        _gemm(b'N', b'N', ui, bi, ui, 1.0, &wr[0, 0], ui, hp, hs, 1.0, &ar[0, 0], ui)
        for i in range(b):
            for j in range(u):
                zv = 1.0 / (1.0 + exp(-az[i, j]))
                rv = 1.0 / (1.0 + exp(-ar[i, j]))
                z[i, t, j] = zv
                r[i, t, j] = rv
                s[i, j] = rv * hp[i * hs + j]
        _gemm(b'N', b'N', ui, bi, ui, 1.0, &wh[0, 0], ui, &s[0, 0], ui, 1.0, &ah[0, 0], ui)
        for i in range(b):
            for j in range(u):
                hbv = tanh(ah[i, j])
                hb[i, t, j] = hbv
                h[i, t, j] = (1.0 - z[i, t, j]) * hp[i * hs + j] + z[i, t, j] * hbv
    return h_arr, z_arr, r_arr, hb_arr


def gru_backward(dh_out, uz, ur, uh, h0, h, z, r, hb):
    """Backprop-through-time for :func:`gru_forward`."""
    cdef double[:, :, ::1] dh_v = np.ascontiguousarray(dh_out, dtype=np.float64)
    cdef double[:, ::1] wz = np.ascontiguousarray(uz, dtype=np.float64)
    cdef double[:, ::1] wr = np.ascontiguousarray(ur, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(uh, dtype=np.float64)
    cdef double[:, ::1] h0v = np.ascontiguousarray(h0, dtype=np.float64)
    cdef double[:, :, ::1] hv = h
    cdef double[:, :, ::1] zv = z
    cdef double[:, :, ::1] rv = r
    cdef double[:, :, ::1] hbv = hb
    cdef Py_ssize_t b = dh_v.shape[0], t_len = dh_v.shape[1], u = dh_v.shape[2]
    dg_arr = np.empty((b, t_len, 3 * u))
    duz_arr = np.zeros((u, u))
    dur_arr = np.zeros((u, u))
    duh_arr = np.zeros((u, u))
    carry_arr = np.zeros((b, u))
    cdef double[:, :, ::1] dg = dg_arr
    cdef double[:, ::1] duz = duz_arr
    cdef double[:, ::1] dur = dur_arr
    cdef double[:, ::1] duh = duh_arr
    cdef double[:, ::1] carry = carry_arr
    dht_arr = np.empty((b, u))
    ds_arr = np.empty((b, u))
    s_arr = np.empty((b, u))
    cdef double[:, ::1] dht = dht_arr
    cdef double[:, ::1] ds = ds_arr
    cdef double[:, ::1] s = s_arr
    cdef double *hp
    cdef double *daz
    cdef double *dar
    cdef double *dah
    cdef int hs, bi = <int> b, ui = <int> u, gstride = <int> (t_len * 3 * u)
    cdef Py_ssize_t t, i, j
    cdef double d, zt, rt, hbt, hpv
    for t in range(t_len - 1, -1, -1):
        if t == 0:
            hp = &h0v[0, 0]
            hs = ui
        else:
            hp = &hv[0, t - 1, 0]
            hs = <int> (t_len * u)
        daz = &dg[0, t, 0]
        dar = &dg[0, t, u]
        dah = &dg[0, t, 2 * u]
        for i in range(b):
            for j in range(u):
                d = dh_v[i, t, j] + carry[i, j]
                zt = zv[i, t, j]
                hbt = hbv[i, t, j]
                hpv = hp[i * hs + j]
                dht[i, j] = d
                dg[i, t, 2 * u + j] = d * zt * (1.0 - hbt * hbt)
                dg[i, t, j] = d * (hbt - hpv) * zt * (1.0 - zt)
                s[i, j] = rv[i, t, j] * hpv
        # ds = da_h @ uh^T
        _gemm(b'T', b'N', ui, bi, ui, 1.0, &wh[0, 0], ui, dah, gstride, 0.0, &ds[0, 0], ui)
        for i in range(b):
            for j in range(u):
                rt = rv[i, t, j]
                zt = zv[i, t, j]
                hpv = hp[i * hs + j]
                dg[i, t, u + j] = ds[i, j] * hpv * rt * (1.0 - rt)
                carry[i, j] = dht[i, j] * (1.0 - zt) + ds[i, j] * rt
        _gemm(b'T', b'N', ui, bi, ui, 1.0, &wz[0, 0], ui, daz, gstride, 1.0, &carry[0, 0], ui)
        _gemm(b'T', b'N', ui, bi, ui, 1.0, &wr[0, 0], ui, dar, gstride, 1.0, &carry[0, 0], ui)
        # accumulate recurrent-weight grads: h_prev^T @ da_*
        _gemm(b'N', b'T', ui, ui, bi, 1.0, daz, gstride, hp, hs, 1.0, &duz[0, 0], ui)
        _gemm(b'N', b'T', ui, ui, bi, 1.0, dar, gstride, hp, hs, 1.0, &dur[0, 0], ui)
        _gemm(b'N', b'T', ui, ui, bi, 1.0, dah, gstride, &s[0, 0], ui, 1.0, &duh[0, 0], ui)
    return dg_arr, duz_arr, dur_arr, duh_arr, carry_arr
