"""Dictionary/code data model, reconstruction, plain CSC objective and proxes.

Arrays follow one layout throughout the package:

    D  (K, M)      filters
    Z  (N, K, P)   codes, stored densely
    X  (N, P)      signals
"""

import numpy as np

from . import _accel
from .errors import DimensionError, InvalidInputError
from .signal_fft import irfft, rfft

FEASIBILITY_TOL = 1e-9


def check_dims(D, Z, X=None):
    D = np.asarray(D)
    Z = np.asarray(Z)
    if D.ndim != 2 or Z.ndim != 3:
        raise DimensionError(f"expected D (K, M) and Z (N, K, P), got {D.shape}, {Z.shape}")
    K, M = D.shape
    N, Kz, P = Z.shape
    if Kz != K:
        raise DimensionError(f"D has {K} filters but Z has {Kz}")
    if M > P:
        raise DimensionError(f"filter length {M} exceeds signal length {P}")
    if X is not None and np.shape(X) != (N, P):
        raise DimensionError(f"X shape {np.shape(X)} does not match ({N}, {P})")
    return N, K, M, P


def is_feasible(D, tol=FEASIBILITY_TOL):
    return bool(np.all(np.linalg.norm(D, axis=-1) <= 1.0 + tol))


def reconstruct_hat(Dh, Zh):
    """Half-spectrum of ``sum_k d_k * z_ik`` from half-spectra of D and Z."""
    return np.einsum("kf,nkf->nf", Dh, Zh)


def reconstruct(D, Z):
    """``x_i = sum_k d_k (*) z_ik`` using period-P circular convolution."""
    N, K, M, P = check_dims(D, Z)
    return irfft(reconstruct_hat(rfft(D, n=P), rfft(Z)), P)


def l1_norm(Z):
    return float(np.sum(np.abs(Z)))


def csc_objective(D, Z, X, beta):
    """``sum_i 0.5 ||x_i - x~_i||^2 + beta * sum_ik ||z_ik||_1``."""
    if beta < 0:
        raise InvalidInputError("beta must be nonnegative")
    check_dims(D, Z, X)
    r = np.asarray(X) - reconstruct(D, Z)
    return 0.5 * float(np.sum(r * r)) + beta * l1_norm(Z)


def prox_l1(z, t):
    """Soft thresholding with threshold ``t``."""
    if t < 0:
        raise InvalidInputError("threshold must be nonnegative")
    z = np.asarray(z, dtype=np.float64)
    if t == 0:
        return z.copy()
    return _accel.soft_threshold(z, t)


def project_unit_ball(d):
    """Project each filter (last axis) onto ``{d : ||d||_2 <= 1}``."""
    d = np.asarray(d, dtype=np.float64)
    shape = d.shape
    return _accel.project_rows(d.reshape(-1, shape[-1])).reshape(shape)


def prox_r(D, Z, t, beta):
    """Proximal map of ``t * (beta ||Z||_1 + indicator(D feasible))``.

    The regularizer is separable, so filters are projected and codes
    soft-thresholded independently.
    """
    if t < 0 or beta < 0:
        raise InvalidInputError("t and beta must be nonnegative")
    return project_unit_ball(D), prox_l1(Z, beta * t)


def random_init(N, K, M, P, rng):
    """Filters drawn i.i.d. standard normal then projected; codes zero."""
    D = project_unit_ball(rng.standard_normal((K, M)))
    return D, np.zeros((N, K, P))
