"""NumPy reference kernels.

Same call surface as the compiled extension ``fttgru._kernels``; used as the
fallback backend and as the parity reference in tests/benchmarks.
"""

import numpy as np

NAME = "pure"


def _bit_reverse_indices(n):
    """Permutation that orders indices by reversed bits (n a power of two)."""
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft_pow2(z, inverse=False):
    """Radix-2 DFT of each row of ``z`` (shape (M, N), N a power of two).

    Forward uses exp(-2*pi*i*k*n/N); inverse uses the conjugate kernel and
    scales by 1/N.
    """
    z = np.ascontiguousarray(z, dtype=np.complex128)
    m, n = z.shape
    if n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    if n == 1:
        return z.copy()
    out = z[:, _bit_reverse_indices(n)].copy()
    sign = 1.0 if inverse else -1.0
    span = 2
    while span <= n:
        half = span // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / span)
        blocks = out.reshape(m, n // span, span)
        lo = blocks[:, :, :half].copy()
        hi = blocks[:, :, half:] * tw
        blocks[:, :, :half] = lo + hi
        blocks[:, :, half:] = lo - hi
        span *= 2
    if inverse:
        out /= n
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_forward(gx, uz, ur, uh, h0):
    """Run the gated-recurrence over T steps.

    gx: (B, T, 3U) input projections x@W + b, gate order (update, reset,
    candidate); uz/ur/uh: (U, U) recurrent weights; h0: (B, U).
    Returns (h, z, r, hb), each (B, T, U); h[:, t] is the state after step t.
    Gate convention: h_t = (1 - z) * h_prev + z * hb.
    """
    b, t_len, three_u = gx.shape
    u = three_u // 3
    h = np.empty((b, t_len, u))
    z = np.empty_like(h)
    r = np.empty_like(h)
    hb = np.empty_like(h)
    h_prev = h0
    for t in range(t_len):
        zt = _sigmoid(gx[:, t, :u] + h_prev @ uz)
        rt = _sigmoid(gx[:, t, u : 2 * u] + h_prev @ ur)
        hbt = np.tanh(gx[:, t, 2 * u :] + (rt * h_prev) @ uh)
        h_prev = (1.0 - zt) * h_prev + zt * hbt
        z[:, t] = zt
        r[:, t] = rt
        hb[:, t] = hbt
        h[:, t] = h_prev
    return h, z, r, hb


def gru_backward(dh_out, uz, ur, uh, h0, h, z, r, hb):
    """Backprop-through-time for :func:`gru_forward`.

    dh_out: (B, T, U) upstream gradient on every step's hidden state (the
    gradient on the final state must already be added at t = T-1).
    Returns (dg, duz, dur, duh, dh0) where dg (B, T, 3U) is the gradient on
    the pre-activation input projections.
    """
    b, t_len, u = dh_out.shape
    dg = np.empty((b, t_len, 3 * u))
    duz = np.zeros_like(uz)
    dur = np.zeros_like(ur)
    duh = np.zeros_like(uh)
    carry = np.zeros((b, u))
    for t in range(t_len - 1, -1, -1):
        dh = dh_out[:, t] + carry
        h_prev = h[:, t - 1] if t > 0 else h0
        zt, rt, hbt = z[:, t], r[:, t], hb[:, t]
        da_h = dh * zt * (1.0 - hbt * hbt)
        da_z = dh * (hbt - h_prev) * zt * (1.0 - zt)
        ds = da_h @ uh.T
        da_r = ds * h_prev * rt * (1.0 - rt)
        carry = dh * (1.0 - zt) + da_z @ uz.T + ds * rt + da_r @ ur.T
        duz += h_prev.T @ da_z
        dur += h_prev.T @ da_r
        duh += (rt * h_prev).T @ da_h
        dg[:, t, :u] = da_z
        dg[:, t, u : 2 * u] = da_r
        dg[:, t, 2 * u :] = da_h
    return dg, duz, dur, duh, carry
