"""Block coordinate descent baselines with ADMM inner solvers.

Three problems share one ADMM core:

* weighted CSC (same objective as :mod:`gcsc.wcsc_niapg`),
* CSC with square loss, the weighted problem with one unit-weight component,
* CSC with l1 loss, ``sum_i 0.5 ||x_i - x~_i||_1 + beta ||Z||_1``.

Each BCD round runs an ADMM code update (auxiliary residual ``e`` and code
copy ``u``) followed by an ADMM filter update (auxiliary residual ``e`` and
filter copy ``v``). Linear systems are solved per frequency. The filter
update works with a length-P filter ``d`` whose feasible copy ``v`` is
supported on the first M taps and lies in the unit ball.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .csc_core import check_dims, project_unit_ball, reconstruct_hat
from .errors import InvalidInputError, NumericalError
from .signal_fft import irfft, rfft
from .wcsc_niapg import WcscProblem, weighted_F

log = logging.getLogger(__name__)

L1_LOSS_SCALE = 0.5
MIN_INNER = 2


@dataclass
class AdmmConfig:
    rho: float = 1.0
    inner_tol: float = 1e-4
    max_inner: int = 100
    outer_tol: float = 1e-4
    max_outer: int = 50

    def __post_init__(self):
        if self.rho <= 0:
            raise InvalidInputError("ADMM penalty rho must be positive")


@dataclass
class BcdResult:
    D: np.ndarray
    Z: np.ndarray
    trace: list = field(default_factory=list)
    times: list = field(default_factory=list)
    n_outer: int = 0
    converged: bool = False
    residuals: dict = field(default_factory=dict)
    # objective at the returned (D, Z): the lowest value in ``trace``
    objective: float = float("nan")


def weighted_e_update(nu, w2, rho):
    """Minimizer of ``0.5 w2 e^2 + rho/2 (nu - e)^2``: ``rho nu / (w2 + rho)``."""
    return rho * nu / (w2 + rho)


def project_support_ball(d, M):
    """Zero taps beyond ``M`` and scale into the unit ball."""
    out = np.zeros_like(d)
    out[..., :M] = project_unit_ball(d[..., :M])
    return out


def solve_code_rows(Dh, zeta, b, G):
    """Per-frequency code solve ``(G conj(d) d^T + I) z = conj(d) zeta + b``.

    ``Dh`` is ``(K, F)``; ``zeta`` is ``(N, F)``; ``b`` is ``(N, K, F)``.
    Uses the rank-one structure of the system matrix.
    """
    N, K, F = b.shape
    a = np.broadcast_to(Dh.T[None], (N, F, K)).reshape(N * F, K)
    rhs = zeta[:, :, None] * np.conj(Dh.T)[None] + np.transpose(b, (0, 2, 1))
    z = _accel.rank1_solve(a, rhs.reshape(N * F, K), G)
    return np.transpose(z.reshape(N, F, K), (0, 2, 1))


def solve_filter_rows(Zh, zeta, b, G):
    """Per-frequency filter solve ``(G sum_i conj(z_i) z_i^T + I) d = sum_i zeta_i conj(z_i) + b``.

    ``Zh`` is ``(N, K, F)``; ``zeta`` is ``(N, F)``; ``b`` is ``(K, F)``.
    Sherman-Morrison for a single sample, stacked dense solves otherwise.
    """
    N, K, F = Zh.shape
    rhs = np.einsum("nf,nkf->fk", zeta, np.conj(Zh)) + b.T
    if N == 1:
        d = _accel.rank1_solve(Zh[0].T, rhs, G)
    else:
        A = G * np.einsum("nkf,nlf->fkl", np.conj(Zh), Zh)
        A += np.eye(K)[None]
        d = _accel.dense_solve(A, rhs)
    return d.T


class _Loss:
    """Data-term specifics: weighted square loss or (scaled) l1 loss."""

    def __init__(self, kind, X, mu=None, W2=None):
        self.kind = kind
        self.X = X
        N, P = X.shape
        if kind == "l1":
            self.mu = np.zeros((1, P))
            self.W2 = None
        else:
            self.mu = mu
            self.W2 = W2
        self.G = self.mu.shape[0]

    def e_update(self, nu, rho):
        if self.kind == "l1":
            return _accel.soft_threshold(nu, L1_LOSS_SCALE / rho)
        return weighted_e_update(nu, self.W2, rho)

    def value(self, resid):
        # resid: (N, P), x - x~
        if self.kind == "l1":
            return L1_LOSS_SCALE * float(np.sum(np.abs(resid)))
        r = resid[None] - self.mu[:, None, :]
        return 0.5 * float(np.sum(self.W2 * r * r))


def _objective(loss, D, Z, beta):
    P = Z.shape[-1]
    xrec = irfft(reconstruct_hat(rfft(D, n=P), rfft(Z)), P)
    return loss.value(loss.X - xrec) + beta * float(np.sum(np.abs(Z)))


def _rel_change(old, new):
    return abs(old - new) / max(abs(old), 1e-300)


def _code_update(loss, D, Z, beta, cfg):
    X, mu, G, rho = loss.X, loss.mu, loss.G, cfg.rho
    N, P = X.shape
    Dh = rfft(D, n=P)
    e = np.zeros((G, N, P))
    alpha = np.zeros_like(e)
    u = Z.copy()
    lam = np.zeros_like(Z)
    obj = _objective(loss, D, u, beta)
    res = {}
    for it in range(cfg.max_inner):
        eta = X[None] - mu[:, None, :] - e - alpha / rho
        zeta = rfft(eta.sum(axis=0))
        Zh = solve_code_rows(Dh, zeta, rfft(u - lam / rho), G)
        Z = irfft(Zh, P)
        xrec = irfft(reconstruct_hat(Dh, Zh), P)
        base = X[None] - xrec[None] - mu[:, None, :]
        e = loss.e_update(base - alpha / rho, rho)
        u = _accel.soft_threshold(Z + lam / rho, beta / rho)
        alpha += rho * (e - base)
        lam += rho * (Z - u)
        new = _objective(loss, D, u, beta)
        if not np.isfinite(new):
            raise NumericalError("non-finite objective in code update", it)
        done = it >= MIN_INNER and _rel_change(obj, new) < cfg.inner_tol
        obj = new
        if done:
            break
    res["code_data"] = float(np.linalg.norm(e - base))
    res["code_consensus"] = float(np.linalg.norm(Z - u))
    return u, res


def _filter_update(loss, Dfull, Z, beta, cfg, M):
    X, mu, G, rho = loss.X, loss.mu, loss.G, cfg.rho
    N, P = X.shape
    Zh = rfft(Z)
    e = np.zeros((G, N, P))
    alpha = np.zeros_like(e)
    v = project_support_ball(Dfull, M)
    theta = np.zeros_like(v)
    obj = _objective(loss, v[:, :M], Z, beta)
    res = {}
    for it in range(cfg.max_inner):
        eta = X[None] - mu[:, None, :] - e - alpha / rho
        zeta = rfft(eta.sum(axis=0))
        Dh = solve_filter_rows(Zh, zeta, rfft(v - theta / rho), G)
        Dfull = irfft(Dh, P)
        xrec = irfft(reconstruct_hat(Dh, Zh), P)
        base = X[None] - xrec[None] - mu[:, None, :]
        e = loss.e_update(base - alpha / rho, rho)
        v = project_support_ball(Dfull + theta / rho, M)
        alpha += rho * (e - base)
        theta += rho * (Dfull - v)
        new = _objective(loss, v[:, :M], Z, beta)
        if not np.isfinite(new):
            raise NumericalError("non-finite objective in filter update", it)
        done = it >= MIN_INNER and _rel_change(obj, new) < cfg.inner_tol
        obj = new
        if done:
            break
    res["filter_data"] = float(np.linalg.norm(e - base))
    res["filter_consensus"] = float(np.linalg.norm(Dfull - v))
    return v, res


def _bcd(loss, D0, Z0, beta, cfg, report=None):
    D0 = project_unit_ball(np.asarray(D0, dtype=np.float64))
    Z = np.array(Z0, dtype=np.float64)
    N, K, M, P = check_dims(D0, Z, loss.X)
    Dfull = np.zeros((K, P))
    Dfull[:, :M] = D0
    report = report or (lambda D, Z: _objective(loss, D, Z, beta))

    t0 = time.perf_counter()
    obj = report(D0, Z)
    out = BcdResult(D0, Z, [obj], [0.0], objective=obj)
    # ADMM rounds are not descent steps, so the best iterate is kept.
    best = (D0.copy(), Z)
    for outer in range(1, cfg.max_outer + 1):
        try:
            Z, r1 = _code_update(loss, Dfull[:, :M], Z, beta, cfg)
            Dfull, r2 = _filter_update(loss, Dfull, Z, beta, cfg, M)
        except NumericalError as exc:
            exc.partial = out
            raise
        new = report(Dfull[:, :M], Z)
        if not np.isfinite(new):
            raise NumericalError(f"non-finite objective at BCD round {outer}", outer, out)
        out.trace.append(new)
        out.times.append(time.perf_counter() - t0)
        out.n_outer = outer
        out.residuals = {**r1, **r2}
        if new < out.objective:
            out.objective, best = new, (Dfull[:, :M].copy(), Z)
        if outer >= 20 and new > 10.0 * out.trace[outer - 20]:
            raise NumericalError(f"BCD diverging at round {outer}", outer, out)
        if _rel_change(obj, new) < cfg.outer_tol:
            out.converged = True
            obj = new
            break
        obj = new
    out.D, out.Z = best
    return out


def _weight_scale(W2):
    s = float(np.mean(W2.sum(axis=0))) if W2.size else 0.0
    return s if s > 0 else 1.0


def wcsc_bcd_solve(prob, init, cfg=None):
    """Solve the weighted CSC subproblem by BCD with ADMM inner loops.

    Returns the iterate with the lowest objective (``result.objective``);
    ``trace`` holds the objective after every round.

    The problem is rescaled so the mean per-element weight is one before
    ADMM runs; the minimizer is unchanged and ``rho`` becomes scale-free.
    The returned trace holds unscaled objective values.
    """
    cfg = cfg or AdmmConfig()
    s = _weight_scale(prob.W2)
    loss = _Loss("weighted", prob.X, prob.mu, prob.W2 / s)
    D0, Z0 = init
    return _bcd(loss, D0, Z0, prob.beta / s, cfg,
                report=lambda D, Z: weighted_F(D, Z, prob))


def cscl2_fit(X, D0, Z0, beta, cfg=None):
    """Square-loss CSC as the one-component, unit-weight weighted problem."""
    prob = WcscProblem.unweighted(X, beta)
    return wcsc_bcd_solve(prob, (D0, Z0), cfg)


def cscl1_fit(X, D0, Z0, beta, cfg=None):
    """CSC with l1 data loss, ``sum_i 0.5 ||x_i - x~_i||_1 + beta ||Z||_1``.

    The data are rescaled to unit RMS before ADMM runs (the l1 objective is
    positively homogeneous, so the minimizer scales with the data).
    """
    cfg = cfg or AdmmConfig()
    X = np.asarray(X, dtype=np.float64)
    s = float(np.sqrt(np.mean(X * X)))
    if s == 0:
        D = project_unit_ball(np.asarray(D0, dtype=np.float64))
        Z = np.zeros_like(np.asarray(Z0, dtype=np.float64))
        return BcdResult(D, Z, [0.0], [0.0], 0, True, objective=0.0)
    loss = _Loss("l1", X / s)
    orig = _Loss("l1", X)
    out = _bcd(loss, D0, np.asarray(Z0, dtype=np.float64) / s, beta, cfg,
               report=lambda D, Z: _objective(orig, D, Z * s, beta))
    out.Z = out.Z * s
    return out


def cscl1_objective(D, Z, X, beta):
    return _objective(_Loss("l1", np.asarray(X, dtype=np.float64)), D, Z, beta)
