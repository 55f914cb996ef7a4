"""Weighted CSC subproblem and its accelerated proximal gradient solver.

The subproblem is

    min_{D feasible, Z}  f(D, Z) + beta * ||Z||_1
    f(D, Z) = 1/2 sum_i sum_g || w_gi * (x_i - sum_k d_k (*) z_ik - mu_g) ||^2

Convolutions are evaluated in the frequency domain while the elementwise
weights stay in the spatial domain.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .csc_core import check_dims, is_feasible, project_unit_ball, prox_r, reconstruct_hat
from .errors import DimensionError, InvalidInputError, NumericalError
from .signal_fft import irfft, rfft

log = logging.getLogger(__name__)

HISTORY = 5


@dataclass
class WcscProblem:
    X: np.ndarray    # (N, P)
    mu: np.ndarray   # (G, P)
    W: np.ndarray    # (G, N, P)
    beta: float

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=np.float64))
        self.W = np.asarray(self.W, dtype=np.float64)
        N, P = self.X.shape
        G = self.mu.shape[0]
        if self.mu.shape != (G, P) or self.W.shape != (G, N, P):
            raise DimensionError(
                f"inconsistent shapes X{self.X.shape} mu{self.mu.shape} W{self.W.shape}")
        if np.any(self.W < 0):
            raise InvalidInputError("weights must be nonnegative")
        if self.beta < 0:
            raise InvalidInputError("beta must be nonnegative")
        self.W2 = self.W * self.W

    @classmethod
    def unweighted(cls, X, beta):
        """Plain square-loss CSC: one component, unit weights, zero mean."""
        X = np.asarray(X, dtype=np.float64)
        return cls(X, np.zeros((1, X.shape[1])), np.ones((1,) + X.shape), beta)

    @property
    def shape(self):
        G, N, P = self.W.shape
        return N, P, G


@dataclass
class LineSearchConfig:
    shrink: float = 0.5
    max_backtracks: int = 50
    sigma: float = 1e-4
    use_bb: bool = True
    eta_min: float = 1e-14
    eta_max: float = 1e14

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise InvalidInputError("shrink factor must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise InvalidInputError("max_backtracks must be >= 1")


@dataclass
class SolveResult:
    D: np.ndarray
    Z: np.ndarray
    trace: list = field(default_factory=list)
    times: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def _recon(D, Z, P):
    Dh = rfft(D, n=P)
    Zh = rfft(Z)
    return Dh, Zh, irfft(reconstruct_hat(Dh, Zh), P)


def weighted_f(D, Z, prob):
    N, K, M, P = check_dims(D, Z, prob.X)
    _, _, xrec = _recon(D, Z, P)
    return float(_accel.weighted_residual(prob.X, xrec, prob.mu, prob.W2)[1])


def weighted_F(D, Z, prob):
    """``f + beta ||Z||_1``, or ``inf`` when some filter leaves the unit ball."""
    if not is_feasible(D):
        return float("inf")
    return weighted_f(D, Z, prob) + prob.beta * float(np.sum(np.abs(Z)))


def residual_u(D, Z, prob):
    N, K, M, P = check_dims(D, Z, prob.X)
    _, _, xrec = _recon(D, Z, P)
    return _accel.weighted_residual(prob.X, xrec, prob.mu, prob.W2)[0]


def f_and_grad(D, Z, prob):
    """Return ``(f, dF/dD, dF/dZ)`` sharing one FFT of ``u_i`` per sample."""
    N, K, M, P = check_dims(D, Z, prob.X)
    Dh, Zh, xrec = _recon(D, Z, P)
    u, f = _accel.weighted_residual(prob.X, xrec, prob.mu, prob.W2)
    Uh = rfft(u)
    gD = -irfft(np.einsum("nkf,nf->kf", np.conj(Zh), Uh), P)[:, :M]
    gZ = -irfft(np.conj(Dh)[None, :, :] * Uh[:, None, :], P)
    return float(f), gD, gZ


def grad_dict(D, Z, prob):
    return f_and_grad(D, Z, prob)[1]


def grad_codes(D, Z, prob):
    return f_and_grad(D, Z, prob)[2]


def _initial_step(prob):
    wmax = float(np.max(prob.W2)) if prob.W2.size else 0.0
    return 1.0 / wmax if wmax > 0 else 1.0


def niapg_solve(prob, init, cfg=None, tol=1e-4, max_iter=100, callback=None):
    """Minimize the weighted CSC objective jointly over filters and codes.

    Each iteration extrapolates from the last two iterates, falls back to
    the current iterate when the extrapolated point is not better than the
    worst of the last few objective values, and takes one proximal gradient
    step with a nonmonotone backtracking line search. The step size starts
    from the (short) Barzilai-Borwein estimate ``<s, y> / <y, y>``.

    The extrapolated filters are projected back onto the unit ball so the
    safeguard compares finite objective values.
    """
    cfg = cfg or LineSearchConfig()
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    D0, Z0 = init
    D = project_unit_ball(np.array(D0, dtype=np.float64))
    Z = np.array(Z0, dtype=np.float64)
    check_dims(D, Z, prob.X)
    beta = prob.beta

    t0 = time.perf_counter()
    F = weighted_F(D, Z, prob)
    if not np.isfinite(F):
        raise NumericalError("non-finite objective at the initial point", 0)
    res = SolveResult(D, Z, [F], [0.0])
    hist = [F]
    D_prev, Z_prev = D, Z
    eta = _initial_step(prob)
    v_old = g_old = None

    for tau in range(1, max_iter + 1):
        c = (tau - 1.0) / (tau + 2.0)
        delta = max(hist[-HISTORY:])
        grad = None
        if c > 0:
            Dv = project_unit_ball(D + c * (D - D_prev))
            Zv = Z + c * (Z - Z_prev)
            fv, gD, gZ = f_and_grad(Dv, Zv, prob)
            Fv = fv + beta * float(np.sum(np.abs(Zv)))
            if Fv < delta:
                grad = (gD, gZ)
        if grad is None:
            Dv, Zv = D, Z
            _, gD, gZ = f_and_grad(D, Z, prob)
            grad = (gD, gZ)
        gD, gZ = grad

        if cfg.use_bb and v_old is not None:
            sD, sZ = Dv - v_old[0], Zv - v_old[1]
            yD, yZ = gD - g_old[0], gZ - g_old[1]
            sy = float(np.sum(sD * yD) + np.sum(sZ * yZ))
            yy = float(np.sum(yD * yD) + np.sum(yZ * yZ))
            # Short BB step; the long variant overshoots badly on this problem.
            if sy > 0 and yy > 0:
                eta = sy / yy
        eta = min(max(eta, cfg.eta_min), cfg.eta_max)
        v_old, g_old = (Dv, Zv), (gD, gZ)

        for bt in range(cfg.max_backtracks):
            Dn, Zn = prox_r(Dv - eta * gD, Zv - eta * gZ, eta, beta)
            Fn = weighted_F(Dn, Zn, prob)
            if np.isnan(Fn):
                raise NumericalError(f"NaN objective at iteration {tau}", tau)
            step2 = float(np.sum((Dn - Dv) ** 2) + np.sum((Zn - Zv) ** 2))
            if Fn <= delta - 0.5 * cfg.sigma / eta * step2:
                break
            if bt < cfg.max_backtracks - 1:
                eta *= cfg.shrink
        else:
            log.info("line search exhausted at iteration %d (eta=%.3g)", tau, eta)

        D_prev, Z_prev = D, Z
        D, Z = Dn, Zn
        F_old, F = F, Fn
        hist.append(F)
        res.trace.append(F)
        res.times.append(time.perf_counter() - t0)
        res.n_iter = tau
        if callback is not None:
            callback(tau, D, Z, F)
        # Nonmonotone steps may raise F slightly; only a small decrease stops.
        if 0.0 <= F_old - F <= tol * max(abs(F_old), 1e-300):
            res.converged = True
            break

    res.D, res.Z = D, Z
    return res
