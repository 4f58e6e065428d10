"""Classical reduced-rank regression with the rank chosen by K-fold cross-validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import frobenius_sq, svd


@dataclass(frozen=True)
class RrrFit:
    coefficients: np.ndarray
    rank: int
    cv_errors: np.ndarray
    cv_se: np.ndarray


def ols_pinv(X: np.ndarray, Y: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Minimum-norm least squares ``X^+ Y``; singular values below ``rcond * s_max`` are dropped."""
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    d = svd(X)
    s = d.singular_values
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return d.V @ (inv[:, None] * (d.U.T @ Y))


def _right_vectors(X: np.ndarray, B_ols: np.ndarray) -> np.ndarray:
    return svd(X @ B_ols).V


def rrr_fit(X: np.ndarray, Y: np.ndarray, r: int) -> np.ndarray:
    """Rank-``r`` reduced-rank estimator ``B_ols V_r V_r^T``.

    ``V_r`` spans the top-``r`` right singular vectors of the OLS fitted values.
    """
    p, m = X.shape[1], Y.shape[1]
    if not 0 <= r <= min(p, m):
        raise ValueError(f"rank {r} outside [0, {min(p, m)}]")
    if r == 0:
        return np.zeros((p, m))
    B_ols = ols_pinv(X, Y)
    V = _right_vectors(X, B_ols)[:, :r]
    return B_ols @ V @ V.T


def assign_folds(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Random fold label per row; fold sizes differ by at most one."""
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if n < folds:
        raise ValueError(f"cannot split {n} rows into {folds} folds")
    labels = np.arange(n) % folds
    return labels[rng.permutation(n)]


def default_max_rank(n: int, p: int, m: int) -> int:
    return max(0, min(p, m, n - 1, 30))


def cv_select_rank(
    X: np.ndarray,
    Y: np.ndarray,
    folds: int = 10,
    r_max: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    fold_ids: Optional[np.ndarray] = None,
    rule: str = "1se",
) -> RrrFit:
    """Choose the RRR rank from the mean held-out squared error per entry.

    ``rule="min"`` takes the minimizing rank; ``rule="1se"`` takes the smallest
    rank whose error is within one standard error (across folds) of that
    minimum. Ties go to the smaller rank. Folds come from ``fold_ids`` when
    given, otherwise from ``rng``. The final fit uses all rows.
    """
    if rule not in ("min", "1se"):
        raise ValueError(f"unknown rule {rule!r}; expected 'min' or '1se'")
    n, p = X.shape
    m = Y.shape[1]
    if r_max is None:
        r_max = default_max_rank(n, p, m)
    r_max = min(r_max, p, m)
    if fold_ids is None:
        if rng is None:
            raise ValueError("either rng or fold_ids is required")
        fold_ids = assign_folds(n, folds, rng)
    fold_ids = np.asarray(fold_ids)
    labels = np.unique(fold_ids)
    if labels.size < 2:
        raise ValueError("need at least two non-empty folds")
    errors = np.zeros((labels.size, r_max + 1))
    for i, f in enumerate(labels):
        test = fold_ids == f
        Xtr, Ytr, Xte, Yte = X[~test], Y[~test], X[test], Y[test]
        B_ols = ols_pinv(Xtr, Ytr)
        V = _right_vectors(Xtr, B_ols)
        P_te = Xte @ B_ols
        scale = Yte.size
        for r in range(r_max + 1):
            pred = P_te @ V[:, :r] @ V[:, :r].T if r else np.zeros_like(Yte)
            errors[i, r] = frobenius_sq(Yte - pred) / scale
    mean = errors.mean(axis=0)
    se = errors.std(axis=0, ddof=1) / np.sqrt(labels.size)
    best = int(np.argmin(mean))  # first, i.e. smallest, minimizer
    if rule == "1se":
        best = int(np.argmax(mean <= mean[best] + se[best]))
    return RrrFit(rrr_fit(X, Y, best), best, mean, se)
