"""Kernel backend selection.

Two interchangeable kernel sets exist: the compiled Cython extension
(``fttgru._kernels``) and a NumPy fallback (``fttgru._kernels_pure``).
The compiled one is preferred when importable; ``FTTGRU_BACKEND=pure`` or
``FTTGRU_BACKEND=compiled`` forces the choice. ``select()`` swaps backends
at runtime (used by the parity tests and the backend benchmark).

Both backends are deterministic run-to-run for a fixed machine and thread
configuration; they are not guaranteed bit-identical to each other.
"""

import os

from fttgru import _kernels_pure

try:
    from fttgru import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"pure": _kernels_pure}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = None


def available_backends():
    return sorted(_BACKENDS)


def select(name):
    """Make ``name`` ('pure' or 'compiled') the active backend."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = _BACKENDS[name]
    return _active


def get(name=None):
    """Return a backend module without changing the active one."""
    if name is None:
        return _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    return _BACKENDS[name]


def active_name():
    return _active.NAME


def fft_pow2(z, inverse=False):
    return _active.fft_pow2(z, inverse)


def gru_forward(gx, uz, ur, uh, h0):
    return _active.gru_forward(gx, uz, ur, uh, h0)


def gru_backward(dh_out, uz, ur, uh, h0, h, z, r, hb):
    return _active.gru_backward(dh_out, uz, ur, uh, h0, h, z, r, hb)


_requested = os.environ.get("FTTGRU_BACKEND", "auto")
if _requested == "auto":
    select("compiled" if _compiled is not None else "pure")
else:
    select(_requested)
