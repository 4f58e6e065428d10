"""Langevin (unadjusted and Metropolis-adjusted) and factorization Gibbs samplers.

Each sampler returns a :class:`ChainOutput` whose ``estimate`` is the mean of
the iterates after burn-in, i.e. iterates ``burn_in + 1 .. T`` where iterate 0
is the initial matrix.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .numerics import (
    frobenius_sq,
    gaussian_from_precision,
    solve_spd,
    standard_normal_matrix,
    svd,
)
from .posterior import (
    DimensionError,
    PriorSpec,
    RegressionData,
    grad_neg_log_posterior,
    log_posterior,
)

NoiseFn = Callable[[np.random.Generator, int, int], np.ndarray]


class TransienceError(RuntimeError):
    """The chain diverged; the step size is too large for this problem."""

    def __init__(self, iteration: int, norm: float):
        self.iteration = iteration
        self.norm = norm
        super().__init__(
            f"chain diverged at iteration {iteration} (||B||_F = {norm:.3g}); "
            "the Markov chain is transient at this step size, retry with a smaller h"
        )


@dataclass(frozen=True)
class SamplerConfig:
    h: float
    T: int = 200
    burn_in: int = 100
    lam: float = 3.0
    init: Optional[np.ndarray] = None
    divergence_threshold: float = 1e8

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("step size h must be positive")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if not 0 <= self.burn_in < self.T:
            raise ValueError("burn_in must satisfy 0 <= burn_in < T")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.divergence_threshold > 0:
            raise ValueError("divergence_threshold must be positive")


@dataclass(frozen=True)
class GibbsConfig:
    k: Optional[int] = None  # None: min(p, m) capped at 20
    tau: float = 1.0
    T: int = 200
    burn_in: int = 100
    divergence_threshold: float = 1e8

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ValueError("k must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.T < 1 or not 0 <= self.burn_in < self.T:
            raise ValueError("need T >= 1 and 0 <= burn_in < T")

    def rank_for(self, p: int, m: int) -> int:
        k = min(p, m, 20) if self.k is None else self.k
        if k > min(p, m):
            raise ValueError(f"k={k} exceeds min(p, m)={min(p, m)}")
        return k


@dataclass(frozen=True)
class ChainOutput:
    estimate: np.ndarray
    acceptance_rate: float
    log_posterior_trace: np.ndarray
    wall_time_seconds: float
    iterations_used: int
    samples: Optional[np.ndarray] = field(default=None, repr=False)


def _std_noise(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return standard_normal_matrix(rng, rows, cols)


def default_init(data: RegressionData) -> np.ndarray:
    """Ridge start ``(X^T X + 0.1 I)^{-1} X^T Y``."""
    A = data.XtX.copy()
    A[np.diag_indices(data.p)] += 0.1
    return solve_spd(A, data.XtY)


def _initial(data: RegressionData, init: Optional[np.ndarray]) -> np.ndarray:
    if init is None:
        return default_init(data)
    B = np.array(init, dtype=np.float64)
    if B.shape != (data.p, data.m):
        raise DimensionError(f"init has shape {B.shape}, expected {(data.p, data.m)}")
    return B


def _guard(B: np.ndarray, k: int, threshold: float) -> None:
    norm = math.sqrt(frobenius_sq(B))
    if not math.isfinite(norm) or norm > threshold:
        raise TransienceError(k, norm)


def log_q(to: np.ndarray, frm: np.ndarray, h: float, grad_at_from: np.ndarray) -> float:
    """Unnormalized log density of the Langevin proposal moving ``frm`` to ``to``."""
    return -frobenius_sq(to - frm + h * grad_at_from) / (4.0 * h)


def lmc_sample(
    data: RegressionData,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    *,
    noise: NoiseFn = _std_noise,
    keep_samples: bool = False,
) -> ChainOutput:
    """Unadjusted Langevin Monte Carlo.

    ``B_{k+1} = B_k - h grad(B_k) + sqrt(2h) W_k``, averaged after burn-in.
    ``noise`` replaces the standard-normal draws of ``W_k`` (testing hook).
    """
    t0 = time.perf_counter()
    prior = PriorSpec(cfg.lam)
    p, m = data.p, data.m
    B = _initial(data, cfg.init)
    scale = math.sqrt(2.0 * cfg.h)
    total = np.zeros_like(B)
    trace = np.empty(cfg.T)
    samples = np.empty((cfg.T, p, m)) if keep_samples else None
    for k in range(1, cfg.T + 1):
        B = B - cfg.h * grad_neg_log_posterior(data, B, prior) + scale * noise(rng, p, m)
        _guard(B, k, cfg.divergence_threshold)
        trace[k - 1] = log_posterior(data, B, prior)
        if k > cfg.burn_in:
            total += B
        if samples is not None:
            samples[k - 1] = B
    used = cfg.T - cfg.burn_in
    return ChainOutput(total / used, 1.0, trace, time.perf_counter() - t0, used, samples)


def mala_sample(
    data: RegressionData,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    *,
    noise: NoiseFn = _std_noise,
    keep_samples: bool = False,
) -> ChainOutput:
    """Metropolis-adjusted Langevin.

    The Langevin step is a proposal accepted when ``log u`` is below the
    log Metropolis-Hastings ratio. The gradient of the current state is
    cached, so each iteration evaluates one new gradient.
    """
    t0 = time.perf_counter()
    prior = PriorSpec(cfg.lam)
    p, m = data.p, data.m
    h = cfg.h
    scale = math.sqrt(2.0 * h)
    B = _initial(data, cfg.init)
    grad = grad_neg_log_posterior(data, B, prior)
    logp = log_posterior(data, B, prior)
    total = np.zeros_like(B)
    trace = np.empty(cfg.T)
    samples = np.empty((cfg.T, p, m)) if keep_samples else None
    accepted = 0
    for k in range(1, cfg.T + 1):
        prop = B - h * grad + scale * noise(rng, p, m)
        _guard(prop, k, cfg.divergence_threshold)
        grad_prop = grad_neg_log_posterior(data, prop, prior)
        logp_prop = log_posterior(data, prop, prior)
        log_ratio = logp_prop + log_q(B, prop, h, grad_prop) - logp - log_q(prop, B, h, grad)
        # u is drawn every iteration so the stream does not depend on the ratio
        if math.log(rng.uniform()) <= log_ratio:
            B, grad, logp = prop, grad_prop, logp_prop
            accepted += 1
        trace[k - 1] = logp
        if k > cfg.burn_in:
            total += B
        if samples is not None:
            samples[k - 1] = B
    used = cfg.T - cfg.burn_in
    return ChainOutput(total / used, accepted / cfg.T, trace, time.perf_counter() - t0, used, samples)


def _factor_log_posterior(data: RegressionData, M: np.ndarray, N: np.ndarray, tau: float) -> float:
    resid = data.Y - data.X @ (M @ N.T)
    return -frobenius_sq(resid) / (2.0 * data.sigma2) - 0.5 * tau * tau * (frobenius_sq(M) + frobenius_sq(N))


def sample_n_given_m(data: RegressionData, M: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Draw N (m x k) given M: rows are independent with a shared k x k precision.

    With ``Z = X M``, row j has precision ``Z^T Z / sigma^2 + tau^2 I`` and
    mean ``C Z^T Y_j / sigma^2`` where C is the inverse precision.
    """
    s2 = data.sigma2
    Z = data.X @ M
    Q = Z.T @ Z / s2
    Q[np.diag_indices(M.shape[1])] += tau * tau
    return gaussian_from_precision(rng, Q, Z.T @ data.Y / s2).T


def sample_m_given_n(data: RegressionData, N: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    """Draw M (p x k) given N jointly from its pk-dimensional Gaussian conditional.

    In column-stacked ``vec(M)`` the precision is
    ``(N^T N kron X^T X) / sigma^2 + tau^2 I`` and the linear term is
    ``vec(X^T Y N) / sigma^2``. Dense Cholesky, so cubic in p k.
    """
    p, k = data.p, N.shape[1]
    s2 = data.sigma2
    Q = np.kron(N.T @ N, data.XtX) / s2
    Q[np.diag_indices(p * k)] += tau * tau
    b = (data.XtY @ N).reshape(-1, 1, order="F") / s2
    return gaussian_from_precision(rng, Q, b).reshape(p, k, order="F")


def gibbs_sample(
    data: RegressionData,
    cfg: GibbsConfig,
    rng: np.random.Generator,
    *,
    init: Optional[np.ndarray] = None,
    keep_samples: bool = False,
) -> ChainOutput:
    """Gibbs sampler for ``B = M N^T`` under independent Gaussian factor priors.

    Each sweep draws N | M and then M | N exactly. The factors start from the
    truncated SVD of ``init`` (ridge start by default). The trace holds the
    joint log posterior of (M, N).
    """
    t0 = time.perf_counter()
    p, m, tau = data.p, data.m, cfg.tau
    k = cfg.rank_for(p, m)
    start = svd(_initial(data, init))
    root = np.sqrt(start.singular_values[:k])
    M = start.U[:, :k] * root
    N = start.V[:, :k] * root
    total = np.zeros((p, m))
    trace = np.empty(cfg.T)
    samples = np.empty((cfg.T, p, m)) if keep_samples else None
    for it in range(1, cfg.T + 1):
        N = sample_n_given_m(data, M, tau, rng)
        M = sample_m_given_n(data, N, tau, rng)
        B = M @ N.T
        _guard(B, it, cfg.divergence_threshold)
        trace[it - 1] = _factor_log_posterior(data, M, N, tau)
        if it > cfg.burn_in:
            total += B
        if samples is not None:
            samples[it - 1] = B
    used = cfg.T - cfg.burn_in
    return ChainOutput(total / used, 1.0, trace, time.perf_counter() - t0, used, samples)


SAMPLERS = {"lmc": lmc_sample, "mala": mala_sample, "gibbs": gibbs_sample}


def run_chain_timed(sampler: str, data: RegressionData, cfg, rng: np.random.Generator, **kwargs) -> ChainOutput:
    """Run ``sampler`` ('lmc', 'mala' or 'gibbs') and record its wall-clock time."""
    try:
        fn = SAMPLERS[sampler]
    except KeyError:
        raise ValueError(f"unknown sampler {sampler!r}; expected one of {sorted(SAMPLERS)}") from None
    t0 = time.perf_counter()
    out = fn(data, cfg, rng, **kwargs)
    return replace(out, wall_time_seconds=time.perf_counter() - t0)


__all__ = [
    "ChainOutput",
    "GibbsConfig",
    "SamplerConfig",
    "TransienceError",
    "default_init",
    "gibbs_sample",
    "lmc_sample",
    "log_q",
    "mala_sample",
    "sample_m_given_n",
    "sample_n_given_m",
    "run_chain_timed",
]
