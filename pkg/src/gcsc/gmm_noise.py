"""Gaussian-mixture noise model with per-sample latent component.

Each signal's noise ``x_i - x~_i`` is drawn from one of ``G`` Gaussians with
mean ``mu_g`` (length P) and diagonal variance ``var_g`` (length P).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _accel
from .errors import DimensionError, InvalidInputError

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8
MERGE_THRESHOLD = 0.1
# Components whose total responsibility falls below this are treated as empty.
EMPTY_MASS = 1e-12


@dataclass
class GmmParams:
    pi: np.ndarray   # (G,)
    mu: np.ndarray   # (G, P)
    var: np.ndarray  # (G, P)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=np.float64)
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=np.float64))
        self.var = np.atleast_2d(np.asarray(self.var, dtype=np.float64))
        G = self.pi.shape[0]
        if self.mu.shape[0] != G or self.var.shape != self.mu.shape:
            raise DimensionError("pi, mu and var disagree on G or P")
        if np.any(self.pi < 0) or abs(self.pi.sum() - 1.0) > 1e-9:
            raise InvalidInputError("mixing weights must be nonnegative and sum to 1")
        if np.any(self.var <= 0):
            raise InvalidInputError("variances must be positive")

    @property
    def G(self):
        return self.pi.shape[0]

    @property
    def P(self):
        return self.mu.shape[1]

    def copy(self):
        return GmmParams(self.pi.copy(), self.mu.copy(), self.var.copy())


def init_params(G, P, rng, low=1e-4, high=1e-1):
    """Uniform weights, zero means, variances log-uniform in ``[low, high]``."""
    var = np.exp(rng.uniform(np.log(low), np.log(high), size=(G, 1))) * np.ones((1, P))
    return GmmParams(np.full(G, 1.0 / G), np.zeros((G, P)), var)


def _log_joint(X, Xrec, params):
    X = np.asarray(X, dtype=np.float64)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Xrec))):
        raise InvalidInputError("non-finite signals passed to the E-step")
    if X.shape[1] != params.P:
        raise DimensionError(f"signals have length {X.shape[1]}, model has P={params.P}")
    ll = _accel.gauss_loglik(X - Xrec, params.mu, params.var)
    with np.errstate(divide="ignore"):
        return np.log(params.pi)[:, None] + ll


def e_step(X, Xrec, params):
    """Posterior responsibilities ``gamma[g, i]``, normalized in the log domain."""
    lj = _log_joint(X, Xrec, params)
    gamma = np.exp(lj - logsumexp(lj, axis=0, keepdims=True))
    # Renormalize so columns sum to 1 up to rounding.
    return gamma / gamma.sum(axis=0, keepdims=True)


def m_step_mixture(X, Xrec, gamma, mu_update="residual", floor=VARIANCE_FLOOR,
                   return_kept=False, min_mass=EMPTY_MASS):
    """Closed-form update of mixing weights, means and variances.

    ``mu_update="residual"`` averages ``x_i - x~_i`` (the maximizer of the
    expected complete log-likelihood); ``"literal"`` averages raw ``x_i``.
    Components whose responsibility mass is at most ``min_mass`` are dropped
    with a warning (the heaviest one is always kept).
    """
    X = np.asarray(X, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    N = X.shape[0]
    if gamma.ndim != 2 or gamma.shape[1] != N:
        raise DimensionError(f"gamma shape {gamma.shape} does not match N={N}")
    mass = gamma.sum(axis=1)
    kept = np.flatnonzero(mass > max(min_mass, EMPTY_MASS))
    if kept.size == 0:
        kept = np.array([int(np.argmax(mass))])
    if kept.size < gamma.shape[0]:
        log.info("dropping %d mixture component(s) with too little mass", gamma.shape[0] - kept.size)
    gamma, mass = gamma[kept], mass[kept]
    R = X - Xrec
    pi = mass / N
    pi = pi / pi.sum()
    src = R if mu_update == "residual" else X
    if mu_update not in ("residual", "literal"):
        raise InvalidInputError(f"unknown mu_update mode {mu_update!r}")
    mu = (gamma @ src) / mass[:, None]
    var = np.empty_like(mu)
    for g in range(len(kept)):
        dev = R - mu[g]
        var[g] = (gamma[g] @ (dev * dev)) / mass[g]
    params = GmmParams(pi, mu, np.maximum(var, floor))
    return (params, kept) if return_kept else params


def compute_weights(params, gamma):
    """Per-element weights ``w[g, i, p] = sqrt(gamma[g, i] / var[g, p])``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape[0] != params.G:
        raise DimensionError("gamma and params disagree on G")
    return np.sqrt(gamma[:, :, None] / params.var[:, None, :])


def log_posterior(X, Xrec, params, Z, beta):
    """Mixture log-likelihood of the residuals minus ``beta * ||Z||_1``.

    Additive constants from the Laplace prior normalizer are omitted.
    """
    lj = _log_joint(X, Xrec, params)
    return float(np.sum(logsumexp(lj, axis=0))) - beta * float(np.sum(np.abs(Z)))


def relative_differences(params, normalize=False):
    """Symmetric ``(G, G)`` matrix of summed relative variance differences."""
    v = params.var
    num = np.abs(v[:, None, :] - v[None, :, :])
    den = v[:, None, :] + v[None, :, :]
    rd = np.sum(num / den, axis=2)
    if normalize:
        rd = rd / params.P
    return rd


def closest_pair(params, normalize=False):
    """Return ``(a, b, value)`` for the pair with smallest relative difference."""
    rd = relative_differences(params, normalize)
    iu = np.triu_indices(params.G, k=1)
    j = int(np.argmin(rd[iu]))
    return int(iu[0][j]), int(iu[1][j]), float(rd[iu][j])


def merge_pair(params, a, b):
    """Fuse component ``b`` into ``a`` with pi-weighted means and variances."""
    pa, pb = params.pi[a], params.pi[b]
    tot = pa + pb
    mu = params.mu.copy()
    var = params.var.copy()
    if tot > 0:
        mu[a] = (pa * mu[a] + pb * mu[b]) / tot
        var[a] = (pa * var[a] + pb * var[b]) / tot
    pi = params.pi.copy()
    pi[a] = tot
    keep = [g for g in range(params.G) if g != b]
    pi = pi[keep]
    return GmmParams(pi / pi.sum(), mu[keep], var[keep])


def prune_merge(params, threshold=MERGE_THRESHOLD, normalize=False, return_pair=False):
    """Merge the closest pair of components if it is closer than ``threshold``.

    At most one merge happens per call. With ``return_pair`` the merged
    ``(a, b)`` indices (or ``None``) are returned alongside the parameters.
    """
    if params.G < 2:
        return (params, None) if return_pair else params
    a, b, value = closest_pair(params, normalize)
    if value < threshold:
        out, pair = merge_pair(params, a, b), (a, b)
    else:
        out, pair = params, None
    return (out, pair) if return_pair else out


def merge_responsibilities(gamma, pair):
    """Apply a merge returned by :func:`prune_merge` to a responsibility matrix."""
    if pair is None:
        return gamma
    a, b = pair
    out = gamma.copy()
    out[a] = gamma[a] + gamma[b]
    return np.delete(out, b, axis=0)
