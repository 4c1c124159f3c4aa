import numpy as np
import pytest

from fttgru.numerics import (
    ComplexVector,
    NumericsError,
    fft_forward,
    fft_inverse,
    irfft,
    matmul,
    rfft,
)


def naive_dft(x, inverse=False):
    """O(N^2) reference DFT, summation written out directly."""
    x = np.asarray(x, dtype=np.complex128)
    n = len(x)
    sign = 1.0 if inverse else -1.0
    out = np.zeros(n, dtype=np.complex128)
    for k in range(n):
        acc = 0.0 + 0.0j
        for m in range(n):
            acc += x[m] * np.exp(sign * 2j * np.pi * k * m / n)
        out[k] = acc
    return out / n if inverse else out


def triple_loop_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def cv(values):
    values = np.asarray(values, dtype=np.complex128)
    return ComplexVector(values.real.copy(), values.imag.copy())


class TestMatmul:
    def test_identity(self):
        rng = np.random.default_rng(1)
        b = rng.normal(size=(3, 5))
        assert np.array_equal(matmul(np.eye(3), b), b)

    def test_zero(self):
        assert np.array_equal(matmul(np.zeros((2, 3)), np.ones((3, 4))), np.zeros((2, 4)))

    def test_matches_triple_loop_exactly(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(5, 4))
        b = rng.normal(size=(4, 3))
        assert np.max(np.abs(matmul(a, b) - triple_loop_matmul(a, b))) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(NumericsError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_nonfinite_rejected(self):
        a = np.full((2, 2), 1e308)
        with np.errstate(over="ignore"), pytest.raises(NumericsError):
            matmul(a, a)  # overflows to inf


class TestFft:
    def test_delta_to_constant(self):
        out = fft_forward(cv([1, 0, 0, 0]))
        assert np.allclose(out.to_complex(), np.ones(4), atol=1e-12)

    def test_constant_to_spike(self):
        out = fft_forward(cv([1, 1, 1, 1]))
        assert np.allclose(out.to_complex(), [4, 0, 0, 0], atol=1e-12)

    def test_random_n30_matches_naive_dft(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=30) + 1j * rng.normal(size=30)
        got = fft_forward(cv(x)).to_complex()
        assert np.max(np.abs(got - naive_dft(x))) < 1e-9

    def test_inverse_of_spike(self):
        out = fft_inverse(cv([4, 0, 0, 0]))
        assert np.allclose(out.to_complex(), np.ones(4), atol=1e-12)

    def test_inverse_of_zero(self):
        out = fft_inverse(cv(np.zeros(7)))
        assert np.allclose(out.to_complex(), 0.0)

    def test_round_trip_n30(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=30) + 1j * rng.normal(size=30)
        back = fft_inverse(fft_forward(cv(x))).to_complex()
        assert np.max(np.abs(back - x)) < 1e-10

    def test_empty_rejected(self):
        with pytest.raises(NumericsError):
            fft_forward(cv(np.zeros(0)))
        with pytest.raises(NumericsError):
            fft_inverse(cv(np.zeros(0)))

    def test_linearity(self):
        rng = np.random.default_rng(5)
        for n in (13, 16, 30):
            x = rng.normal(size=n) + 1j * rng.normal(size=n)
            y = rng.normal(size=n) + 1j * rng.normal(size=n)
            a, b = 1.7, -0.3 + 0.9j
            lhs = fft_forward(cv(a * x + b * y)).to_complex()
            rhs = a * fft_forward(cv(x)).to_complex() + b * fft_forward(cv(y)).to_complex()
            assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_parseval(self):
        rng = np.random.default_rng(6)
        for n in (7, 30, 64):
            x = rng.normal(size=n) + 1j * rng.normal(size=n)
            spec = fft_forward(cv(x)).to_complex()
            assert np.sum(np.abs(x) ** 2) == pytest.approx(
                np.sum(np.abs(spec) ** 2) / n, rel=1e-9
            )

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 12, 17, 30, 31, 45])
    def test_assorted_lengths_vs_naive(self, n):
        rng = np.random.default_rng(100 + n)
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        assert np.max(np.abs(fft_forward(cv(x)).to_complex() - naive_dft(x))) < 1e-9
        assert np.max(np.abs(fft_inverse(cv(x)).to_complex() - naive_dft(x, True))) < 1e-9


class TestRfft:
    def test_pure_sine(self):
        out = rfft(np.array([0.0, 1.0, 0.0, -1.0])).to_complex()
        assert np.allclose(out, [0, -2j, 0], atol=1e-12)

    def test_constant(self):
        out = rfft(np.full(30, 2.5)).to_complex()
        expected = np.zeros(16, dtype=np.complex128)
        expected[0] = 30 * 2.5
        assert np.allclose(out, expected, atol=1e-9)

    def test_random_n30_vs_truncated_dft(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=30)
        got = rfft(x).to_complex()
        assert got.shape == (16,)
        assert np.max(np.abs(got - naive_dft(x)[:16])) < 1e-9

    @pytest.mark.parametrize("n", [1, 2, 3, 8, 29, 30, 31])
    def test_round_trip(self, n):
        rng = np.random.default_rng(200 + n)
        x = rng.normal(size=n)
        assert np.max(np.abs(irfft(rfft(x), n) - x)) < 1e-10

    def test_empty_rejected(self):
        with pytest.raises(NumericsError):
            rfft(np.zeros(0))


class TestComplexVector:
    def test_length_mismatch_rejected(self):
        with pytest.raises(NumericsError):
            ComplexVector(np.zeros(3), np.zeros(4))

    def test_round_trip_to_complex(self):
        v = ComplexVector(np.array([1.0, 2.0]), np.array([-1.0, 0.5]))
        assert np.array_equal(ComplexVector.from_complex(v.to_complex()).re, v.re)
