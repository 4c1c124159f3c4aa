"""Dense float64 tensor helpers and exact DFTs for arbitrary lengths.

Values are carried as C-contiguous float64 numpy arrays; complex spectra
travel as a re/im pair (:class:`ComplexVector`). Transforms use an iterative
radix-2 kernel for power-of-two lengths and Bluestein's chirp convolution
otherwise, so any length gets exact DFT semantics. Direct O(N^2) summation
exists only in the test oracles.
"""

from dataclasses import dataclass

import numpy as np

from fttgru import backend


class NumericsError(ValueError):
    """Shape mismatch or non-finite values in a tensor operation."""


def as_tensor(x, shape=None, name="tensor"):
    """Coerce to a C-contiguous float64 array, optionally checking shape."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise NumericsError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def check_finite(arr, name="tensor"):
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name}: contains NaN or Inf")
    return arr


@dataclass
class ComplexVector:
    """A length-N complex signal stored as separate real/imag float buffers."""

    re: np.ndarray
    im: np.ndarray

    def __post_init__(self):
        self.re = np.ascontiguousarray(self.re, dtype=np.float64)
        self.im = np.ascontiguousarray(self.im, dtype=np.float64)
        if self.re.ndim != 1 or self.im.ndim != 1:
            raise NumericsError("ComplexVector buffers must be 1-D")
        if len(self.re) != len(self.im):
            raise NumericsError(
                f"re/im length mismatch: {len(self.re)} vs {len(self.im)}"
            )

    def __len__(self):
        return len(self.re)

    def to_complex(self):
        return self.re + 1j * self.im

    @classmethod
    def from_complex(cls, zc):
        zc = np.asarray(zc, dtype=np.complex128)
        return cls(zc.real.copy(), zc.imag.copy())


def matmul(a, b):
    """Matrix product of two 2-D tensors with shape and finiteness checks.

    Accumulates along the inner dimension in a fixed order, so results are
    bit-identical to a naive ordered triple loop (and across runs). The
    layer code uses BLAS matmul instead, which is deterministic per machine
    but free to reorder partial sums.
    """
    a = as_tensor(a, name="matmul lhs")
    b = as_tensor(b, name="matmul rhs")
    if a.ndim != 2 or b.ndim != 2:
        raise NumericsError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise NumericsError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        out += a[:, k, None] * b[None, k, :]
    return check_finite(out, "matmul result")


def next_pow2(n):
    p = 1
    while p < n:
        p <<= 1
    return p


def dft_rows(z, inverse=False):
    """DFT along axis 1 of a complex (M, N) array, any N >= 1.

    Power-of-two lengths go straight to the radix-2 kernel; other lengths use
    Bluestein's identity kn = (n^2 + k^2 - (k-n)^2)/2, turning the transform
    into a chirp-modulated circular convolution of power-of-two size.
    """
    z = np.ascontiguousarray(z, dtype=np.complex128)
    m, n = z.shape
    if n == 0:
        raise NumericsError("empty transform (N == 0)")
    if n & (n - 1) == 0:
        return backend.fft_pow2(z, inverse)
    if inverse:
        return np.conj(dft_rows(np.conj(z), inverse=False)) / n
    idx = np.arange(n)
    chirp = np.exp(-1j * np.pi * idx * idx / n)
    conv_len = next_pow2(2 * n - 1)
    a = np.zeros((m, conv_len), dtype=np.complex128)
    a[:, :n] = z * chirp
    b = np.zeros((1, conv_len), dtype=np.complex128)
    b[0, :n] = np.conj(chirp)
    b[0, conv_len - n + 1 :] = np.conj(chirp[1:][::-1])
    spec = backend.fft_pow2(a, False) * backend.fft_pow2(b, False)
    conv = backend.fft_pow2(spec, True)
    return conv[:, :n] * chirp


def rfft_rows(x):
    """First N//2+1 DFT bins of each real row of ``x`` (shape (M, N))."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[1]
    full = dft_rows(x.astype(np.complex128), inverse=False)
    return np.ascontiguousarray(full[:, : n // 2 + 1])


def irfft_rows(spec, n):
    """Invert :func:`rfft_rows`: (M, N//2+1) complex bins -> (M, N) real."""
    spec = np.asarray(spec, dtype=np.complex128)
    m, k = spec.shape
    if k != n // 2 + 1:
        raise NumericsError(f"expected {n // 2 + 1} bins for length {n}, got {k}")
    full = np.empty((m, n), dtype=np.complex128)
    full[:, :k] = spec
    if n > 1:
        full[:, k:] = np.conj(spec[:, 1 : n - k + 1][:, ::-1])
    return dft_rows(full, inverse=True).real.copy()


def fft_forward(x):
    """Forward DFT of a ComplexVector: X_k = sum_n x_n exp(-2*pi*i*k*n/N)."""
    if len(x) == 0:
        raise NumericsError("empty transform (N == 0)")
    out = dft_rows(x.to_complex()[None, :], inverse=False)[0]
    check_finite(out.view(np.float64), "fft_forward result")
    return ComplexVector.from_complex(out)


def fft_inverse(x):
    """Inverse DFT: x_n = (1/N) sum_k X_k exp(+2*pi*i*k*n/N)."""
    if len(x) == 0:
        raise NumericsError("empty transform (N == 0)")
    out = dft_rows(x.to_complex()[None, :], inverse=True)[0]
    check_finite(out.view(np.float64), "fft_inverse result")
    return ComplexVector.from_complex(out)


def rfft(x):
    """DFT bins 0..N//2 of a real signal."""
    x = as_tensor(x, name="rfft input")
    if x.ndim != 1:
        raise NumericsError("rfft expects a 1-D real signal")
    if len(x) == 0:
        raise NumericsError("empty transform (N == 0)")
    out = rfft_rows(x[None, :])[0]
    check_finite(out.view(np.float64), "rfft result")
    return ComplexVector.from_complex(out)


def irfft(x, n):
    """Real signal of length ``n`` whose rfft equals ``x``."""
    if n < 1:
        raise NumericsError("empty transform (N == 0)")
    out = irfft_rows(x.to_complex()[None, :], n)[0]
    return check_finite(out, "irfft result")
