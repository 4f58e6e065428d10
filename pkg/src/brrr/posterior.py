"""Log-likelihood, spectral Student log-prior and the posterior gradient.

All log-densities are unnormalized: additive constants are dropped because
only differences of log-densities are ever used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import as_matrix, frobenius_sq, singular_values, solve_spd


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class RegressionData:
    """Observed design ``X`` (n x p), responses ``Y`` (n x m) and known noise variance."""

    X: np.ndarray
    Y: np.ndarray
    sigma2: float = 1.0
    XtX: np.ndarray = field(init=False, repr=False, compare=False)
    XtY: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = as_matrix(self.X, "X")
        Y = as_matrix(self.Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "XtX", X.T @ X)
        object.__setattr__(self, "XtY", X.T @ Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class PriorSpec:
    lam: float = 3.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("prior scale lambda must be positive")


def _lam(prior) -> float:
    return prior.lam if isinstance(prior, PriorSpec) else float(prior)


def _check_coef(data: RegressionData, B: np.ndarray) -> None:
    if B.shape != (data.p, data.m):
        raise DimensionError(f"B has shape {B.shape}, expected {(data.p, data.m)}")


def log_likelihood(data: RegressionData, B: np.ndarray) -> float:
    """``-||Y - X B||_F^2 / (2 sigma^2)``; the Gaussian normalizing constant is omitted."""
    _check_coef(data, B)
    return -frobenius_sq(data.Y - data.X @ B) / (2.0 * data.sigma2)


def log_prior(B: np.ndarray, prior: PriorSpec | float) -> float:
    """Log of ``det(lam^2 I_p + B B^T)^{-(p+m+2)/2}`` evaluated from the singular values of B.

    For p > m the p - m zero singular values each contribute ``log(lam^2)``.
    """
    lam = _lam(prior)
    p, m = B.shape
    s = singular_values(B)
    logdet = np.sum(np.log(lam * lam + s * s)) + (p - len(s)) * 2.0 * np.log(lam)
    return -0.5 * (p + m + 2) * float(logdet)


def log_posterior(data: RegressionData, B: np.ndarray, prior: PriorSpec | float) -> float:
    return log_likelihood(data, B) + log_prior(B, prior)


def shrink(B: np.ndarray, lam: float) -> np.ndarray:
    """``(lam^2 I_p + B B^T)^{-1} B`` computed as ``B (lam^2 I_m + B^T B)^{-1}``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    m = B.shape[1]
    G = B.T @ B
    G[np.diag_indices(m)] += lam * lam
    # G is symmetric, so B G^{-1} = (G^{-1} B^T)^T
    return solve_spd(G, B.T).T


def grad_neg_log_posterior(data: RegressionData, B: np.ndarray, prior: PriorSpec | float) -> np.ndarray:
    """Gradient of ``-log_posterior`` at B.

    ``-(1/sigma^2) X^T (Y - X B) + (p + m + 2) shrink(B, lam)``. The Langevin
    drift is ``B - h * grad_neg_log_posterior(B)``.
    """
    _check_coef(data, B)
    lam = _lam(prior)
    p, m = B.shape
    return (data.XtX @ B - data.XtY) / data.sigma2 + (p + m + 2) * shrink(B, lam)
