import math

import numpy as np
import pytest

from brrr.numerics import make_rng
from brrr.posterior import RegressionData

# Scalar test instance: n = 20, x ~ N(0, 1), y = 0.8 x + N(0, 1), seed 20240601.
# Posterior moments from Simpson quadrature of exp(-(y - x b)^2 / 2 - 2 log(1 + b^2))
# on 200001 nodes spanning the least-squares estimate +/- 12 standard errors.
SCALAR_SEED = 20240601
SCALAR_POSTERIOR_MEAN = 0.638752708365655
SCALAR_POSTERIOR_SD = 0.21681364035734813


def scalar_data() -> RegressionData:
    rng = make_rng(SCALAR_SEED)
    x = rng.standard_normal((20, 1))
    y = 0.8 * x + rng.standard_normal((20, 1))
    return RegressionData(x, y, 1.0)


def scalar_posterior_grid(data: RegressionData, nodes: int = 200001, half_width: float = 12.0):
    """Normalized posterior weights on a uniform grid (lambda = 1, sigma = 1)."""
    x, y = data.X.ravel(), data.Y.ravel()
    A, c, yy = float(x @ x), float(x @ y), float(y @ y)
    center, se = c / A, 1.0 / math.sqrt(A)
    grid = np.linspace(center - half_width * se, center + half_width * se, nodes)
    logp = -0.5 * (yy - 2 * c * grid + A * grid * grid) - 2.0 * np.log1p(grid * grid)
    w = np.exp(logp - logp.max())
    return grid, w / w.sum()


def batch_means_se(draws: np.ndarray, batches: int = 100) -> float:
    usable = len(draws) - len(draws) % batches
    means = draws[:usable].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


@pytest.fixture(scope="session")
def scalar():
    return scalar_data()


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
