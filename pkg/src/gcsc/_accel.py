"""Hot numeric kernels, compiled with numba when available.

Every kernel has a pure-numpy twin. The numba path is used unless the
environment variable ``CSC_NO_NUMBA`` is set to a truthy value or numba
cannot be imported. Both paths compute the same quantities; they may differ
in the last few ulps because of summation order.
"""

import os

import numpy as np

_DISABLED = os.environ.get("CSC_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# Rows whose norm exceeds one by less than this are left alone, which keeps
# the projection exactly idempotent under rounding.
BALL_SLACK = 1.0 + 1e-12


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------- numpy path

def _soft_threshold_np(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _project_rows_np(d):
    norms = np.sqrt(np.sum(d * d, axis=-1, keepdims=True))
    return d / np.where(norms > BALL_SLACK, norms, 1.0)


def _weighted_residual_np(x, xrec, mu, w2):
    # x, xrec: (N, P); mu: (G, P); w2: (G, N, P)
    r = (x - xrec)[None, :, :] - mu[:, None, :]
    wr = w2 * r
    f = 0.5 * np.sum(wr * r)
    return wr.sum(axis=0), f


def _gauss_loglik_np(resid, mu, var):
    # resid: (N, P) -> (G, N) log N(resid; mu_g, diag(var_g))
    log_det = np.sum(np.log(var), axis=1)
    diff = resid[None, :, :] - mu[:, None, :]
    quad = np.sum(diff * diff / var[:, None, :], axis=2)
    P = resid.shape[1]
    return -0.5 * (quad + log_det[:, None] + P * np.log(2.0 * np.pi))


def _rank1_solve_np(a, b, c):
    # Solves (c * conj(a) a^T + I) x = b for every row (frequency).
    # a, b: (P, K) complex; closed form from Sherman-Morrison.
    ac = np.conj(a)
    num = np.sum(a * b, axis=1)
    den = 1.0 + c * np.sum(np.abs(a) ** 2, axis=1)
    return b - (c * num / den)[:, None] * ac


def _dense_solve_np(A, b):
    return np.linalg.solve(A, b[..., None])[..., 0]


# ---------------------------------------------------------------- numba path

@njit(cache=True)
def _soft_threshold_nb(x, t):
    out = np.empty_like(x)
    flat_in = x.ravel()
    flat_out = out.ravel()
    for j in range(flat_in.size):
        v = flat_in[j]
        if v > t:
            flat_out[j] = v - t
        elif v < -t:
            flat_out[j] = v + t
        else:
            flat_out[j] = 0.0
    return out


@njit(cache=True)
def _project_rows_nb(d):
    K, M = d.shape
    out = np.empty_like(d)
    for k in range(K):
        s = 0.0
        for m in range(M):
            s += d[k, m] * d[k, m]
        n = np.sqrt(s)
        scale = n if n > BALL_SLACK else 1.0
        for m in range(M):
            out[k, m] = d[k, m] / scale
    return out


@njit(cache=True)
def _weighted_residual_nb(x, xrec, mu, w2):
    G, N, P = w2.shape
    u = np.zeros((N, P))
    f = 0.0
    for i in range(N):
        for g in range(G):
            for p in range(P):
                r = x[i, p] - xrec[i, p] - mu[g, p]
                wr = w2[g, i, p] * r
                u[i, p] += wr
                f += wr * r
    return u, 0.5 * f


@njit(cache=True)
def _gauss_loglik_nb(resid, mu, var):
    N, P = resid.shape
    G = mu.shape[0]
    out = np.empty((G, N))
    c = P * np.log(2.0 * np.pi)
    for g in range(G):
        log_det = 0.0
        for p in range(P):
            log_det += np.log(var[g, p])
        for i in range(N):
            q = 0.0
            for p in range(P):
                dlt = resid[i, p] - mu[g, p]
                q += dlt * dlt / var[g, p]
            out[g, i] = -0.5 * (q + log_det + c)
    return out


@njit(cache=True)
def _rank1_solve_nb(a, b, c):
    P, K = a.shape
    out = np.empty_like(b)
    for p in range(P):
        num = 0j
        nrm = 0.0
        for k in range(K):
            num += a[p, k] * b[p, k]
            nrm += a[p, k].real ** 2 + a[p, k].imag ** 2
        coef = c * num / (1.0 + c * nrm)
        for k in range(K):
            out[p, k] = b[p, k] - coef * np.conj(a[p, k])
    return out


@njit(cache=True)
def _dense_solve_nb(A, b):
    P, K = b.shape
    out = np.empty_like(b)
    for p in range(P):
        out[p] = np.linalg.solve(A[p], b[p])
    return out


# ---------------------------------------------------------------- dispatch

def _pick(nb, npy):
    return nb if HAVE_NUMBA else npy


def soft_threshold(x, t):
    """Elementwise ``sign(x) * max(|x| - t, 0)``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _pick(_soft_threshold_nb, _soft_threshold_np)(x, float(t))


def project_rows(d):
    """Scale each row of a 2-D array into the unit l2 ball."""
    d = np.ascontiguousarray(d, dtype=np.float64)
    return _pick(_project_rows_nb, _project_rows_np)(d)


def weighted_residual(x, xrec, mu, w2):
    """Return ``(u, f)`` with ``u_i = sum_g w2_gi * (x_i - xrec_i - mu_g)``.

    ``f`` is half the weighted squared residual summed over samples and
    components.
    """
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (x, xrec, mu, w2)]
    return _pick(_weighted_residual_nb, _weighted_residual_np)(*args)


def gauss_loglik(resid, mu, var):
    """Diagonal-Gaussian log densities, shape ``(G, N)``."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (resid, mu, var)]
    return _pick(_gauss_loglik_nb, _gauss_loglik_np)(*args)


def rank1_solve(a, b, c=1.0):
    """Row-wise solve of ``(c conj(a) a^T + I) x = b`` via Sherman-Morrison."""
    a = np.ascontiguousarray(a, dtype=np.complex128)
    b = np.ascontiguousarray(b, dtype=np.complex128)
    return _pick(_rank1_solve_nb, _rank1_solve_np)(a, b, float(c))


def dense_solve(A, b):
    """Row-wise solve of ``A[p] x[p] = b[p]`` for stacked ``K x K`` systems."""
    A = np.ascontiguousarray(A, dtype=np.complex128)
    b = np.ascontiguousarray(b, dtype=np.complex128)
    return _pick(_dense_solve_nb, _dense_solve_np)(A, b)
