import numpy as np
import pytest

from fttgru.nn import (
    Parameter,
    fourier_mix_backward,
    fourier_mix_forward,
)
from fttgru.numerics import NumericsError

B, T, D, H = 2, 10, 8, 2
K = T // 2 + 1


def make_layer(rng, identity_proj=False, filt=None):
    if filt is None:
        fre = np.ones((H, K))
        fim = np.zeros((H, K))
    else:
        fre, fim = filt
    if identity_proj:
        pw, pb = np.eye(D), np.zeros(D)
    else:
        pw = rng.normal(size=(D, D)) * 0.3
        pb = rng.normal(size=D) * 0.1
    return (Parameter("f.re", fre), Parameter("f.im", fim),
            Parameter("p.w", pw), Parameter("p.b", pb))


def naive_spectral_mix(x, fre, fim, n_heads):
    """Independent oracle: per (batch, channel) naive DFT, multiply the full
    spectrum by the hermitian-extended head filter, naive inverse DFT."""
    b, t, d = x.shape
    out = np.zeros_like(x)
    for bi in range(b):
        for c in range(d):
            head = c // (d // n_heads)
            gain_half = fre[head] + 1j * fim[head]
            gain = np.empty(t, dtype=np.complex128)
            gain[: t // 2 + 1] = gain_half
            for k in range(t // 2 + 1, t):
                gain[k] = np.conj(gain_half[t - k])
            sig = x[bi, :, c].astype(np.complex128)
            spec = np.array([
                np.sum(sig * np.exp(-2j * np.pi * k * np.arange(t) / t))
                for k in range(t)
            ])
            spec *= gain
            back = np.array([
                np.sum(spec * np.exp(2j * np.pi * k * np.arange(t) / t))
                for k in range(t)
            ]) / t
            out[bi, :, c] = back.real
    return out


def fd_grad(f, arr, eps=1e-6):
    g = np.zeros_like(arr)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        g.reshape(-1)[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return np.max(np.abs(a - b)) / denom


class TestForward:
    def test_unit_filters_identity_before_projection(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(B, T, D))
        fre, fim, pw, pb = make_layer(rng, identity_proj=True)
        y, _ = fourier_mix_forward(x, fre, fim, pw, pb, H)
        assert np.max(np.abs(y - x)) < 1e-10

    def test_zero_filters_zero_output(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(B, T, D))
        fre, fim, pw, pb = make_layer(
            rng, identity_proj=True, filt=(np.zeros((H, K)), np.zeros((H, K)))
        )
        y, _ = fourier_mix_forward(x, fre, fim, pw, pb, H)
        assert np.max(np.abs(y)) == 0.0

    def test_random_filters_match_naive_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(B, T, D))
        fre_v = rng.normal(size=(H, K))
        fim_v = rng.normal(size=(H, K))
        fre, fim, pw, pb = make_layer(rng, identity_proj=True, filt=(fre_v, fim_v))
        y, _ = fourier_mix_forward(x, fre, fim, pw, pb, H)
        assert np.max(np.abs(y - naive_spectral_mix(x, fre_v, fim_v, H))) < 1e-9

    def test_head_divisibility_enforced(self):
        rng = np.random.default_rng(3)
        fre, fim, pw, pb = make_layer(rng)
        with pytest.raises(NumericsError):
            fourier_mix_forward(rng.normal(size=(B, T, D)), fre, fim, pw, pb, 3)

    def test_fnet_mode_is_real_part_of_fft(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(B, T, D))
        fre, fim, pw, pb = make_layer(rng, identity_proj=True)
        y, _ = fourier_mix_forward(x, fre, fim, pw, pb, H, fnet_mode=True)
        ref = np.fft.fft(x, axis=1).real
        assert np.max(np.abs(y - ref)) < 1e-9


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(B, T, D))
        fre, fim, pw, pb = make_layer(rng)
        _, cache = fourier_mix_forward(x, fre, fim, pw, pb, H)
        dx = fourier_mix_backward(np.zeros((B, T, D)), cache)
        assert not dx.any()
        for p in (fre, fim, pw, pb):
            assert not p.grad.any()

    def test_identity_path_passes_gradient_through(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(B, T, D))
        fre, fim, pw, pb = make_layer(rng, identity_proj=True)
        _, cache = fourier_mix_forward(x, fre, fim, pw, pb, H)
        dy = rng.normal(size=(B, T, D))
        dx = fourier_mix_backward(dy, cache)
        assert np.max(np.abs(dx - dy)) < 1e-10

    @pytest.mark.parametrize("fnet", [False, True])
    def test_matches_finite_differences(self, fnet):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(B, T, D))
        fre_v = 1.0 + 0.3 * rng.normal(size=(H, K))
        fim_v = 0.3 * rng.normal(size=(H, K))
        fre, fim, pw, pb = make_layer(rng, filt=(fre_v, fim_v))
        dy = rng.normal(size=(B, T, D))

        def loss():
            y, _ = fourier_mix_forward(x, fre, fim, pw, pb, H, fnet_mode=fnet)
            return float((y * dy).sum())

        _, cache = fourier_mix_forward(x, fre, fim, pw, pb, H, fnet_mode=fnet)
        dx = fourier_mix_backward(dy, cache)
        assert rel_err(dx, fd_grad(loss, x)) < 1e-5
        assert rel_err(pw.grad, fd_grad(loss, pw.value)) < 1e-5
        assert rel_err(pb.grad, fd_grad(loss, pb.value)) < 1e-5
        if not fnet:
            assert rel_err(fre.grad, fd_grad(loss, fre.value)) < 1e-5
            assert rel_err(fim.grad, fd_grad(loss, fim.value)) < 1e-5

    def test_dc_and_nyquist_imag_parts_are_inert(self):
        # Re(ifft) discards their contribution, so their gradient must be 0.
        rng = np.random.default_rng(8)
        x = rng.normal(size=(B, T, D))
        fre_v = rng.normal(size=(H, K))
        fim_v = rng.normal(size=(H, K))
        fre, fim, pw, pb = make_layer(rng, filt=(fre_v, fim_v))
        _, cache = fourier_mix_forward(x, fre, fim, pw, pb, H)
        fourier_mix_backward(rng.normal(size=(B, T, D)), cache)
        assert np.allclose(fim.grad[:, 0], 0.0, atol=1e-12)
        assert np.allclose(fim.grad[:, -1], 0.0, atol=1e-12)  # T even -> Nyquist
