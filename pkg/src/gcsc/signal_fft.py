"""Real-signal FFT, padding and convolution primitives.

Conventions: the forward transform is unnormalized and the inverse carries the
``1/P`` factor, so ``sum(x**2) == sum(abs(fft(x))**2) / P``. Every convolution
used by the solvers is circular with period ``P``; filters of length ``M`` are
zero-padded to ``P`` before transforming.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import ConjugateSymmetryError, DimensionError, InvalidInputError

_WORKERS = 1
IMAG_TOL = 1e-9


def set_workers(n):
    """Set the number of threads used by batched FFTs."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def _check_finite(x, name="input"):
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} contains NaN or Inf")


def fft(x):
    """Unnormalized DFT of a real signal (last axis)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise InvalidInputError("signal length must be >= 1")
    _check_finite(x)
    return sfft.fft(x, axis=-1, workers=_WORKERS)


def ifft(s):
    """Inverse DFT with 1/P scaling, returning a real signal.

    Raises ConjugateSymmetryError when the imaginary residue exceeds
    ``IMAG_TOL`` relative to the result's magnitude.
    """
    s = np.asarray(s, dtype=np.complex128)
    _check_finite(s.view(np.float64), "spectrum")
    y = sfft.ifft(s, axis=-1, workers=_WORKERS)
    scale = max(1.0, float(np.max(np.abs(y))) if y.size else 0.0)
    if y.size and np.max(np.abs(y.imag)) > IMAG_TOL * scale:
        raise ConjugateSymmetryError("spectrum is not conjugate-symmetric")
    return np.ascontiguousarray(y.real)


# Half-spectrum helpers used internally by the solvers.

def rfft(x, n=None):
    return sfft.rfft(x, n=n, axis=-1, workers=_WORKERS)


def irfft(s, n):
    return sfft.irfft(s, n=n, axis=-1, workers=_WORKERS)


@dataclass(frozen=True)
class PadCrop:
    """Zero-pad a length-``M`` signal to ``P`` and crop it back."""

    M: int
    P: int

    def __post_init__(self):
        if self.M < 1 or self.P < self.M:
            raise DimensionError(f"need 1 <= M <= P, got M={self.M}, P={self.P}")

    def pad(self, d):
        d = np.asarray(d, dtype=np.float64)
        if d.shape[-1] != self.M:
            raise DimensionError(f"expected length {self.M}, got {d.shape[-1]}")
        out = np.zeros(d.shape[:-1] + (self.P,))
        out[..., : self.M] = d
        return out

    def crop(self, y):
        y = np.asarray(y)
        if y.shape[-1] != self.P:
            raise DimensionError(f"expected length {self.P}, got {y.shape[-1]}")
        return y[..., : self.M].copy()


def linear_convolve(a, b):
    """Full linear convolution, length ``len(a) + len(b) - 1``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 1 or b.size < 1:
        raise InvalidInputError("convolution operands must be non-empty")
    _check_finite(a)
    _check_finite(b)
    return np.convolve(a, b)


def circular_convolve(d, z, op=None):
    """Period-``P`` circular convolution of a length-``M`` filter with ``z``.

    Both arguments may carry leading batch axes that broadcast against each
    other.
    """
    d = np.asarray(d, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    M, P = d.shape[-1], z.shape[-1]
    if M > P:
        raise DimensionError(f"filter length {M} exceeds signal length {P}")
    if op is not None and (op.M, op.P) != (M, P):
        raise DimensionError("PadCrop operator does not match operands")
    return irfft(rfft(d, n=P) * rfft(z), P)
