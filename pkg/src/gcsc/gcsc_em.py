"""EM fitting of convolutional sparse coding with Gaussian-mixture noise.

Each EM iteration computes responsibilities, updates the mixture in closed
form, prunes/merges components, then solves the weighted CSC subproblem for
filters and codes (warm-started from the previous iterate).
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gmm_noise as gm
from .admm_baselines import AdmmConfig, wcsc_bcd_solve
from .csc_core import random_init, reconstruct
from .errors import InvalidInputError, NumericalError
from .wcsc_niapg import LineSearchConfig, WcscProblem, niapg_solve

log = logging.getLogger(__name__)


@dataclass
class GcscConfig:
    K: int = 3
    M: int = 65
    beta: float = 1.0
    G: int = 10
    merge_threshold: float = gm.MERGE_THRESHOLD
    merge_normalize: bool = False
    em_tol: float = 1e-4
    em_max_iter: int = 50
    inner_tol: float = 1e-4
    inner_max_iter: int = 100
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    mu_update: str = "residual"
    seed: int = 0
    solver: str = "niapg"
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    warm_start: bool = True
    var_init_range: tuple = (1e-4, 1e-1)
    update_mixture: bool = True
    init_params: gm.GmmParams = None
    min_component_mass: float = 2.0
    # "csc": start EM from a single-component fit at a robust noise estimate.
    init_codes: str = "csc"
    warmup_max_iter: int = 500

    def __post_init__(self):
        if self.K < 1 or self.M < 1:
            raise InvalidInputError("K and M must be >= 1")
        if self.G < 1:
            raise InvalidInputError("initial G must be >= 1")
        if min(self.em_tol, self.inner_tol) <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.beta < 0:
            raise InvalidInputError("beta must be nonnegative")
        if self.init_codes not in ("csc", "random"):
            raise InvalidInputError(f"unknown code initialization {self.init_codes!r}")
        if self.solver not in ("niapg", "bcd"):
            raise InvalidInputError(f"unknown weighted-CSC solver {self.solver!r}")


@dataclass
class GcscModel:
    D: np.ndarray
    Z: np.ndarray
    params: gm.GmmParams
    gamma: np.ndarray


@dataclass
class IterRecord:
    iteration: int
    log_posterior: float
    G: int
    inner_iters: int
    seconds: float
    pi_sum: float = 1.0


@dataclass
class FitTrace:
    initial_log_posterior: float = float("nan")
    records: list = field(default_factory=list)
    converged: bool = False

    def log_posteriors(self):
        return [r.log_posterior for r in self.records]


def _solve_m_step(prob, D, Z, cfg):
    if cfg.solver == "bcd":
        res = wcsc_bcd_solve(prob, (D, Z), cfg.admm)
        return res.D, res.Z, res.n_outer
    res = niapg_solve(prob, (D, Z), cfg.line_search, cfg.inner_tol, cfg.inner_max_iter)
    return res.D, res.Z, res.n_iter


def noise_scale(X):
    """Robust noise level ``median|dx| / (0.6745 sqrt 2)``, floored at the variance floor's root."""
    dx = np.diff(np.asarray(X, dtype=np.float64), axis=-1)
    s = float(np.median(np.abs(dx))) / (0.6745 * np.sqrt(2.0))
    # Piecewise-constant (e.g. noiseless) data give a zero median difference.
    return max(s, float(np.sqrt(gm.VARIANCE_FLOOR)))


def initial_fit(X, D, Z, cfg):
    """Fit filters/codes under one zero-mean component at the estimated noise variance."""
    N, P = X.shape
    var = noise_scale(X) ** 2
    prob = WcscProblem(X, np.zeros((1, P)), np.full((1, N, P), 1.0 / np.sqrt(var)), cfg.beta)
    D, Z, _ = _solve_m_step(prob, D, Z, replace(cfg, inner_max_iter=cfg.warmup_max_iter))
    return D, Z


def fit(X, cfg):
    """Fit filters, codes and the noise mixture to signals ``X`` (N, P)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidInputError("X must be a non-empty (N, P) array")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("X contains NaN or Inf")
    N, P = X.shape
    if cfg.M > P:
        raise InvalidInputError(f"filter length {cfg.M} exceeds signal length {P}")
    rng = np.random.default_rng(cfg.seed)
    D, Z = random_init(N, cfg.K, cfg.M, P, rng)
    trace = FitTrace()

    if not np.any(X):
        log.warning("all-zero input; returning the trivial model")
        params = gm.GmmParams([1.0], np.zeros((1, P)), np.full((1, P), gm.VARIANCE_FLOOR))
        gamma = np.ones((1, N))
        lp = gm.log_posterior(X, np.zeros_like(X), params, Z, cfg.beta)
        trace.initial_log_posterior = lp
        trace.records.append(IterRecord(1, lp, 1, 0, 0.0))
        trace.converged = True
        return GcscModel(D, Z, params, gamma), trace

    if cfg.init_params is not None:
        params = cfg.init_params.copy()
    else:
        params = gm.init_params(cfg.G, P, rng, *cfg.var_init_range)
    if cfg.init_codes == "csc":
        D, Z = initial_fit(X, D, Z, cfg)
    Xrec = reconstruct(D, Z)
    lp_prev = gm.log_posterior(X, Xrec, params, Z, cfg.beta)
    trace.initial_log_posterior = lp_prev
    t0 = time.perf_counter()
    gamma = None

    for it in range(1, cfg.em_max_iter + 1):
        gamma = gm.e_step(X, Xrec, params)
        if cfg.update_mixture:
            params, kept = gm.m_step_mixture(X, Xrec, gamma, cfg.mu_update, return_kept=True,
                                             min_mass=cfg.min_component_mass)
            params, pair = gm.prune_merge(params, cfg.merge_threshold, cfg.merge_normalize,
                                          return_pair=True)
            if kept.size < gamma.shape[0]:
                # Samples owned by a dropped component need fresh responsibilities.
                gamma = gm.e_step(X, Xrec, params)
            else:
                gamma = gm.merge_responsibilities(gamma, pair)

        prob = WcscProblem(X, params.mu, gm.compute_weights(params, gamma), cfg.beta)
        if not cfg.warm_start:
            Z = np.zeros_like(Z)
        try:
            D, Z, inner = _solve_m_step(prob, D, Z, cfg)
        except NumericalError as exc:
            raise NumericalError(f"EM iteration {it}: {exc}", it, trace) from exc
        Xrec = reconstruct(D, Z)
        lp = gm.log_posterior(X, Xrec, params, Z, cfg.beta)
        if not np.isfinite(lp):
            raise NumericalError(f"non-finite log posterior at EM iteration {it}", it, trace)
        trace.records.append(IterRecord(it, lp, params.G, inner, time.perf_counter() - t0,
                                        float(params.pi.sum())))
        log.debug("EM %d: log posterior %.6g, G=%d, inner=%d", it, lp, params.G, inner)
        if abs(lp - lp_prev) < cfg.em_tol * abs(lp_prev):
            trace.converged = True
            break
        lp_prev = lp

    gamma = gm.e_step(X, Xrec, params)
    return GcscModel(D, Z, params, gamma), trace


def first_m_step_problem(X, cfg):
    """The weighted CSC problem solved in the first EM iteration, with its start point.

    Used to compare M-step solvers on a realistic instance.
    """
    X = np.asarray(X, dtype=np.float64)
    N, P = X.shape
    rng = np.random.default_rng(cfg.seed)
    D, Z = random_init(N, cfg.K, cfg.M, P, rng)
    params = cfg.init_params.copy() if cfg.init_params is not None else \
        gm.init_params(cfg.G, P, rng, *cfg.var_init_range)
    if cfg.init_codes == "csc":
        D, Z = initial_fit(X, D, Z, cfg)
    Xrec = reconstruct(D, Z)
    gamma = gm.e_step(X, Xrec, params)
    params, kept = gm.m_step_mixture(X, Xrec, gamma, cfg.mu_update, return_kept=True,
                                     min_mass=cfg.min_component_mass)
    if kept.size < gamma.shape[0]:
        gamma = gm.e_step(X, Xrec, params)
    return WcscProblem(X, params.mu, gm.compute_weights(params, gamma), cfg.beta), (D, Z)


def reconstruct_model(model):
    return reconstruct(model.D, model.Z)
