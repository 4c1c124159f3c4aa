"""Differentiable layers with explicit per-layer forward/backward passes.

Each forward returns (output, cache); the matching backward consumes the
cache, returns the input gradient, and accumulates parameter gradients into
``Parameter.grad``. There is no tape: the network is small and fixed, so the
composition order lives in the model module.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from fttgru import backend
from fttgru.numerics import (
    NumericsError,
    check_finite,
    dft_rows,
    irfft_rows,
    rfft_rows,
)


class Parameter:
    """A learnable tensor plus its gradient accumulator."""

    def __init__(self, name, value):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# dense


@dataclass
class DenseCache:
    x: np.ndarray
    w: Parameter
    b: Parameter


def dense_forward(x, w, b):
    """y = x @ W + b for x of shape (B, F_in)."""
    if x.ndim != 2 or x.shape[1] != w.value.shape[0]:
        raise NumericsError(
            f"dense: input {x.shape} incompatible with weight {w.value.shape}"
        )
    y = x @ w.value + b.value
    return y, DenseCache(x, w, b)


def dense_backward(dy, cache):
    if dy.shape != (cache.x.shape[0], cache.w.value.shape[1]):
        raise NumericsError(f"dense backward: gradient shape {dy.shape} mismatches cache")
    cache.w.grad += cache.x.T @ dy
    cache.b.grad += dy.sum(axis=0)
    return dy @ cache.w.value.T


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(dy, y):
    return dy * (1.0 - y * y)


# ---------------------------------------------------------------------------
# layer norm


@dataclass
class LayerNormCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: Parameter
    beta: Parameter


def layer_norm_forward(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then scale-shift."""
    if eps <= 0:
        raise NumericsError("layer norm eps must be positive")
    mu = x.mean(axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    y = xhat * gamma.value + beta.value
    return y, LayerNormCache(xhat, inv_std, gamma, beta)


def layer_norm_backward(dy, cache):
    xhat = cache.xhat
    if dy.shape != xhat.shape:
        raise NumericsError(f"layer norm backward: gradient shape {dy.shape} mismatches cache")
    lead = tuple(range(dy.ndim - 1))
    cache.gamma.grad += (dy * xhat).sum(axis=lead)
    cache.beta.grad += dy.sum(axis=lead)
    dxhat = dy * cache.gamma.value
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_proj = (dxhat * xhat).mean(axis=-1, keepdims=True)
    return cache.inv_std * (dxhat - mean_dxhat - xhat * mean_proj)


# ---------------------------------------------------------------------------
# positional encoding


def positional_encoding(t_len, dim):
    """Sinusoidal position table: PE[t, 2i] = sin(t / 10000^(2i/dim)),
    PE[t, 2i+1] = cos of the same argument."""
    if dim % 2:
        raise NumericsError(f"positional encoding needs an even width, got {dim}")
    pos = np.arange(t_len, dtype=np.float64)[:, None]
    denom = np.power(10000.0, np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.empty((t_len, dim))
    pe[:, 0::2] = np.sin(pos / denom)
    pe[:, 1::2] = np.cos(pos / denom)
    return pe


# ---------------------------------------------------------------------------
# Fourier token mixing


def spectral_bin_weights(t_len):
    """Multiplicity of each rfft bin in the full spectrum (2 for mirrored
    interior bins, 1 for DC and, when T is even, Nyquist)."""
    k = t_len // 2 + 1
    w = np.full(k, 2.0)
    w[0] = 1.0
    if t_len % 2 == 0:
        w[-1] = 1.0
    return w


@dataclass
class FourierMixCache:
    shape: tuple
    n_heads: int
    fnet_mode: bool
    bins: Optional[np.ndarray]  # pre-filter rfft bins, (B*D, K)
    filt_re: Optional[Parameter]
    filt_im: Optional[Parameter]
    proj: DenseCache


def _per_row_gain(filt_re, filt_im, batch, dim, n_heads):
    gain = filt_re.value + 1j * filt_im.value  # (H, K)
    per_channel = np.repeat(gain, dim // n_heads, axis=0)  # (D, K)
    return np.tile(per_channel, (batch, 1))  # (B*D, K)


def fourier_mix_forward(x, filt_re, filt_im, proj_w, proj_b, n_heads, fnet_mode=False):
    """Token mixing along time: per head, filter the rfft of every channel
    with a learnable complex gain, transform back, then project D -> D.

    With ``fnet_mode`` the mixing is fixed to Re(full FFT along time) and the
    filters are unused.
    """
    b, t, d = x.shape
    if d % n_heads:
        raise NumericsError(f"width {d} not divisible by {n_heads} heads")
    rows = np.ascontiguousarray(x.transpose(0, 2, 1)).reshape(b * d, t)
    if fnet_mode:
        mixed_rows = dft_rows(rows.astype(np.complex128), inverse=False).real
        bins = None
    else:
        bins = rfft_rows(rows)
        filtered = bins * _per_row_gain(filt_re, filt_im, b, d, n_heads)
        mixed_rows = irfft_rows(filtered, t)
    mixed = np.ascontiguousarray(mixed_rows.reshape(b, d, t).transpose(0, 2, 1))
    y_flat, proj_cache = dense_forward(mixed.reshape(b * t, d), proj_w, proj_b)
    cache = FourierMixCache((b, t, d), n_heads, fnet_mode, bins, filt_re, filt_im, proj_cache)
    return y_flat.reshape(b, t, d), cache


def fourier_mix_backward(dy, cache):
    b, t, d = cache.shape
    if dy.shape != cache.shape:
        raise NumericsError(f"fourier mix backward: gradient shape {dy.shape} mismatches cache")
    dmixed = dense_backward(dy.reshape(b * t, d), cache.proj)
    drows = np.ascontiguousarray(dmixed.reshape(b, t, d).transpose(0, 2, 1)).reshape(b * d, t)
    if cache.fnet_mode:
        # Re(F x) is its own adjoint: the DFT kernel is symmetric in (k, n).
        dx_rows = dft_rows(drows.astype(np.complex128), inverse=False).real
    else:
        dbins = rfft_rows(drows)
        gain_rows = _per_row_gain(cache.filt_re, cache.filt_im, b, d, cache.n_heads)
        dx_rows = irfft_rows(np.conj(gain_rows) * dbins, t)
        k = t // 2 + 1
        prod = (np.conj(cache.bins) * dbins).reshape(b, d, k).sum(axis=0)
        per_head = prod.reshape(cache.n_heads, d // cache.n_heads, k).sum(axis=1)
        per_head *= spectral_bin_weights(t)[None, :] / t
        cache.filt_re.grad += per_head.real
        cache.filt_im.grad += per_head.imag
    return np.ascontiguousarray(dx_rows.reshape(b, d, t).transpose(0, 2, 1))


# ---------------------------------------------------------------------------
# GRU


@dataclass
class GruParams:
    w_z: Parameter
    w_r: Parameter
    w_h: Parameter
    u_z: Parameter
    u_r: Parameter
    u_h: Parameter
    b_z: Parameter
    b_r: Parameter
    b_h: Parameter

    def params(self):
        return [self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h,
                self.b_z, self.b_r, self.b_h]


@dataclass
class GruCellCache:
    x_t: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hb: np.ndarray


def gru_cell(x_t, h_prev, p):
    """One recurrence step.

    z = sigma(x W_z + h U_z + b_z), r = sigma(x W_r + h U_r + b_r),
    hb = tanh(x W_h + (r * h) U_h + b_h), h_t = (1 - z) * h + z * hb.
    """
    if x_t.shape[1] != p.w_z.value.shape[0] or h_prev.shape[1] != p.u_z.value.shape[0]:
        raise NumericsError(
            f"gru cell: input {x_t.shape} / state {h_prev.shape} incompatible with weights"
        )
    z = _sigmoid(x_t @ p.w_z.value + h_prev @ p.u_z.value + p.b_z.value)
    r = _sigmoid(x_t @ p.w_r.value + h_prev @ p.u_r.value + p.b_r.value)
    hb = np.tanh(x_t @ p.w_h.value + (r * h_prev) @ p.u_h.value + p.b_h.value)
    h_t = (1.0 - z) * h_prev + z * hb
    return h_t, GruCellCache(x_t, h_prev, z, r, hb)


@dataclass
class GruSeqCache:
    x: np.ndarray
    h0: np.ndarray
    h: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hb: np.ndarray
    p: GruParams


def gru_sequence(x, h0, p):
    """Unroll the cell over (B, T, I); returns every hidden state plus the
    final one. Input projections for all steps are batched into one matmul,
    the recurrence itself runs in the active kernel backend."""
    b, t_len, _ = x.shape
    if t_len == 0:
        raise NumericsError("gru sequence needs T >= 1")
    if h0 is None:
        h0 = np.zeros((b, p.u_z.value.shape[0]))
    x2 = x.reshape(b * t_len, -1)
    gx = np.concatenate(
        [
            x2 @ p.w_z.value + p.b_z.value,
            x2 @ p.w_r.value + p.b_r.value,
            x2 @ p.w_h.value + p.b_h.value,
        ],
        axis=1,
    ).reshape(b, t_len, -1)
    h, z, r, hb = backend.gru_forward(gx, p.u_z.value, p.u_r.value, p.u_h.value, h0)
    return h, h[:, -1].copy(), GruSeqCache(x, h0, h, z, r, hb, p)


def gru_backward(d_all_h, d_h_t, cache):
    """Backprop-through-time; accumulates all nine parameter grads, returns dx."""
    p = cache.p
    b, t_len, u = cache.h.shape
    if d_all_h.shape != cache.h.shape or d_h_t.shape != (b, u):
        raise NumericsError("gru backward: gradient shapes mismatch cache")
    dh_out = np.ascontiguousarray(d_all_h, dtype=np.float64).copy()
    dh_out[:, -1] += d_h_t
    dg, duz, dur, duh, _dh0 = backend.gru_backward(
        dh_out, p.u_z.value, p.u_r.value, p.u_h.value,
        cache.h0, cache.h, cache.z, cache.r, cache.hb,
    )
    p.u_z.grad += duz
    p.u_r.grad += dur
    p.u_h.grad += duh
    dgf = dg.reshape(b * t_len, 3 * u)
    x2 = cache.x.reshape(b * t_len, -1)
    da_z, da_r, da_h = dgf[:, :u], dgf[:, u : 2 * u], dgf[:, 2 * u :]
    p.w_z.grad += x2.T @ da_z
    p.w_r.grad += x2.T @ da_r
    p.w_h.grad += x2.T @ da_h
    p.b_z.grad += da_z.sum(axis=0)
    p.b_r.grad += da_r.sum(axis=0)
    p.b_h.grad += da_h.sum(axis=0)
    dx = da_z @ p.w_z.value.T + da_r @ p.w_r.value.T + da_h @ p.w_h.value.T
    return dx.reshape(b, t_len, -1)


# ---------------------------------------------------------------------------
# loss


def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. the predictions."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise NumericsError(f"mse: shapes {pred.shape} vs {target.shape}")
    n = pred.size
    if n == 0:
        raise NumericsError("mse on empty vectors")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    check_finite(np.asarray(loss), "mse loss")
    return loss, 2.0 * diff / n
