"""Dense matrix substrate: seeded random streams, SVD, SPD solves and CSV I/O.

Matrices are plain 2-D ``float64`` numpy arrays. Random streams are
``numpy.random.Generator`` objects backed by PCG64 (period 2**128), which
produces the same sequence for a given seed on every platform numpy supports.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import lapack, solve_triangular


class NumericalError(RuntimeError):
    """A decomposition failed to converge or produced unusable output."""


class NotPositiveDefiniteError(NumericalError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (pivot {pivot} is non-positive)")


class CsvParseError(ValueError):
    """Malformed CSV input, located by 1-based row and column."""

    def __init__(self, path, row: int, col: int | None, message: str):
        self.path, self.row, self.col = path, row, col
        where = f"row {row}" if col is None else f"row {row}, column {col}"
        super().__init__(f"{path}: {where}: {message}")


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array (1-D input becomes a column)."""
    arr = np.array(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    """PCG64 stream for ``seed`` (a u64 or a tuple of u64 words)."""
    return np.random.Generator(np.random.PCG64(seed))


def child_seed(seed: int, *key: int) -> list[int]:
    """Entropy words for an independent sub-stream of ``seed`` identified by ``key``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return [int(w) for w in ss.generate_state(4, dtype=np.uint64)]


def standard_normal_matrix(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    return rng.standard_normal((rows, cols))


@dataclass(frozen=True)
class SvdResult:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def svd(A: np.ndarray) -> SvdResult:
    """Thin SVD ``A = U diag(s) V^T`` with ``s`` non-increasing."""
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return SvdResult(U, s, Vt.T)


def singular_values(A: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises NotPositiveDefiniteError carrying the 1-based failing pivot.
    """
    L, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(int(info))
    if info < 0:
        raise NumericalError(f"dpotrf: illegal argument {-info}")
    return L


def cho_solve(L: np.ndarray, RHS: np.ndarray) -> np.ndarray:
    """Solve ``(L L^T) X = RHS`` given the lower factor ``L``."""
    X, info = lapack.dpotrs(L, RHS, lower=1)
    if info != 0:
        raise NumericalError(f"dpotrs: illegal argument {-info}")
    return X


def solve_spd(A: np.ndarray, RHS: np.ndarray) -> np.ndarray:
    """Solve ``A X = RHS`` for symmetric positive-definite ``A`` via Cholesky."""
    return cho_solve(cholesky(A), RHS)


def gaussian_from_precision(rng: np.random.Generator, Q: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Draw from N(Q^{-1} b, Q^{-1}); columns of ``b`` share the precision ``Q``."""
    L = cholesky(Q)
    mean = cho_solve(L, b)
    z = rng.standard_normal(b.shape)
    return mean + solve_triangular(L, z, lower=True, trans="T")


def frobenius_sq(A: np.ndarray) -> float:
    return float(np.sum(np.square(A)))


# --- CSV ---------------------------------------------------------------------

def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def read_csv_matrix(path: str | os.PathLike) -> np.ndarray:
    """Read a numeric CSV matrix; a non-numeric first row is taken as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    # ignore trailing blank lines
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise CsvParseError(path, 1, None, "file is empty")
    start = 0
    if not all(_is_number(c.strip()) for c in rows[0]):
        start = 1
    if start >= len(rows):
        raise CsvParseError(path, 1, None, "header row but no data")
    width = len(rows[start])
    data = np.empty((len(rows) - start, width))
    for i, row in enumerate(rows[start:], start=start):
        if len(row) != width:
            raise CsvParseError(path, i + 1, None, f"expected {width} fields, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell.strip())
            except ValueError:
                raise CsvParseError(path, i + 1, j + 1, f"non-numeric cell {cell!r}") from None
            if not np.isfinite(v):
                raise CsvParseError(path, i + 1, j + 1, f"non-finite value {cell!r}")
            data[i - start, j] = v
    return data


def write_csv_matrix(path: str | os.PathLike, A: np.ndarray, header: Sequence[str] | None = None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for row in np.atleast_2d(A):
        w.writerow([format_float(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_csv_rows(path: str | os.PathLike, header: Sequence[str], rows) -> None:
    """Write a mixed-type table; floats use round-trip formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
