"""Simulation scenarios, error metrics, the replication runner and the runtime benchmark."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .baselines import cv_select_rank
from .numerics import child_seed, frobenius_sq, make_rng, singular_values
from .posterior import RegressionData
from .samplers import (
    GibbsConfig,
    SamplerConfig,
    TransienceError,
    gibbs_sample,
    lmc_sample,
    mala_sample,
)

log = logging.getLogger(__name__)

METHODS = ("lmc", "mala", "rrr", "gibbs")
METRICS = ("est", "pred", "nmse", "rank")


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    model_id: str
    n: int
    p: int
    m: int
    r: int = 3
    rho_x: float = 0.0
    sigma2: float = 1.0
    coef_scale: float = 1.0
    perturbation: bool = False

    def __post_init__(self):
        if self.model_id not in ("I", "II", "III"):
            raise ValueError(f"unknown model {self.model_id!r}")
        if min(self.n, self.p, self.m, self.r) < 1:
            raise ValueError("n, p, m, r must be positive")
        if self.r > min(self.p, self.m):
            raise ValueError("r must not exceed min(p, m)")
        if not 0.0 <= self.rho_x < 1.0:
            raise ValueError("rho_x must lie in [0, 1)")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")


def scenario(model_id: str, rho_x: float = 0.0, sigma2: float = 1.0, **overrides) -> Scenario:
    """The simulation settings: I is 100x12x8, II and III are 100x150x90, all rank 3."""
    presets = {
        "I": dict(n=100, p=12, m=8),
        "II": dict(n=100, p=150, m=90),
        "III": dict(n=100, p=150, m=90, coef_scale=2.0, perturbation=True),
    }
    if model_id not in presets:
        raise ValueError(f"unknown model {model_id!r}; expected I, II or III")
    kw = dict(model_id=model_id, r=3, rho_x=rho_x, sigma2=sigma2, **presets[model_id])
    kw.update(overrides)
    return Scenario(**kw)


class Dataset(NamedTuple):
    X: np.ndarray
    Y: np.ndarray
    B_true: np.ndarray
    X_test: np.ndarray
    Y_test: np.ndarray


def gen_design(n: int, p: int, rho_x: float, rng: np.random.Generator) -> np.ndarray:
    """Rows from N(0, (1 - rho) I + rho 11^T) through a shared scalar factor per row."""
    if not 0.0 <= rho_x < 1.0:
        raise ValueError("rho_x must lie in [0, 1)")
    g = rng.standard_normal((n, 1))
    z = rng.standard_normal((n, p))
    return math.sqrt(rho_x) * g + math.sqrt(1.0 - rho_x) * z


def gen_coef(p: int, m: int, r: int, sc: Scenario, rng: np.random.Generator) -> np.ndarray:
    B1 = rng.standard_normal((p, r))
    B2 = rng.standard_normal((m, r))
    B = sc.coef_scale * (B1 @ B2.T)
    if sc.perturbation:
        B = B + rng.standard_normal((p, m))
    return B


def gen_dataset(sc: Scenario, rng: np.random.Generator) -> Dataset:
    B = gen_coef(sc.p, sc.m, sc.r, sc, rng)
    sd = math.sqrt(sc.sigma2)

    def draw():
        X = gen_design(sc.n, sc.p, sc.rho_x, rng)
        return X, X @ B + sd * rng.standard_normal((sc.n, sc.m))

    X, Y = draw()
    X_test, Y_test = draw()
    return Dataset(X, Y, B, X_test, Y_test)


def estimate_rank(B_hat: np.ndarray, delta: float = 0.1) -> int:
    """Number of singular values at least ``delta`` times the largest one."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    s = singular_values(B_hat)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= delta * s[0]))


@dataclass(frozen=True)
class MetricsRecord:
    est: float
    nmse: float
    pred: float
    rank_hat: float
    wall_time_seconds: float = 0.0

    def get(self, metric: str) -> float:
        return self.rank_hat if metric == "rank" else getattr(self, metric)


def compute_metrics(
    B_true: np.ndarray,
    B_hat: np.ndarray,
    X_test: np.ndarray,
    Y_test: np.ndarray,
    delta: float = 0.1,
    wall_time_seconds: float = 0.0,
) -> MetricsRecord:
    if B_true.shape != B_hat.shape:
        raise ValueError(f"shape mismatch: {B_true.shape} vs {B_hat.shape}")
    p, m = B_true.shape
    n = X_test.shape[0]
    norm_true = frobenius_sq(B_true)
    if norm_true == 0.0:
        raise ValueError("Nmse is undefined when the true coefficient matrix is zero")
    err = frobenius_sq(B_true - B_hat)
    return MetricsRecord(
        est=err / (p * m),
        nmse=err / norm_true,
        pred=frobenius_sq(Y_test - X_test @ B_hat) / (n * Y_test.shape[1]),
        rank_hat=float(estimate_rank(B_hat, delta)),
        wall_time_seconds=wall_time_seconds,
    )


def default_step_size(sc: Scenario) -> float:
    n, p, m = sc.n, sc.p, sc.m
    if sc.model_id == "I":
        return 2.0 / (p * m * math.sqrt(n))
    if sc.model_id == "II":
        return 5.0 / (m * n * p)
    return 3.0 / (math.sqrt(m) * n * p)


@dataclass(frozen=True)
class MethodSettings:
    """Tuning shared by every replication of a run."""

    h: Optional[float] = None  # None: scenario default
    lam: float = 3.0
    T: int = 200
    burn_in: int = 100
    delta: float = 0.1
    gibbs_k: Optional[int] = None
    gibbs_tau: float = 1.0
    folds: int = 10


@dataclass
class ReplicationResult:
    index: int
    seed: int
    records: dict  # method -> MetricsRecord
    acceptance: dict  # method -> acceptance rate
    diverged: list  # methods that raised TransienceError


class Fit(NamedTuple):
    estimate: np.ndarray
    acceptance_rate: float
    wall_time_seconds: float
    rank: Optional[int] = None  # set when the method selects a rank itself


def fit_method(method: str, data: RegressionData, settings: MethodSettings, h: float,
               rng: np.random.Generator) -> Fit:
    t0 = time.perf_counter()
    if method in ("lmc", "mala"):
        cfg = SamplerConfig(h=h, T=settings.T, burn_in=settings.burn_in, lam=settings.lam)
        out = (lmc_sample if method == "lmc" else mala_sample)(data, cfg, rng)
        return Fit(out.estimate, out.acceptance_rate, time.perf_counter() - t0)
    if method == "gibbs":
        cfg = GibbsConfig(k=settings.gibbs_k, tau=settings.gibbs_tau, T=settings.T, burn_in=settings.burn_in)
        out = gibbs_sample(data, cfg, rng)
        return Fit(out.estimate, 1.0, time.perf_counter() - t0)
    if method == "rrr":
        fit = cv_select_rank(data.X, data.Y, folds=settings.folds, rng=rng)
        return Fit(fit.coefficients, 1.0, time.perf_counter() - t0, fit.rank)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def run_one_replication(sc: Scenario, methods: Sequence[str], index: int, seed: int,
                        settings: MethodSettings) -> ReplicationResult:
    """One replication: data from sub-stream 0, method j of METHODS from sub-stream j + 1."""
    ds = gen_dataset(sc, make_rng(child_seed(seed, 0)))
    data = RegressionData(ds.X, ds.Y, sc.sigma2 if sc.sigma2 > 0 else 1.0)
    h = settings.h if settings.h is not None else default_step_size(sc)
    res = ReplicationResult(index, seed, {}, {}, [])
    for method in methods:
        rng = make_rng(child_seed(seed, METHODS.index(method) + 1))
        try:
            fit = fit_method(method, data, settings, h, rng)
        except TransienceError:
            res.diverged.append(method)
            continue
        rec = compute_metrics(ds.B_true, fit.estimate, ds.X_test, ds.Y_test, settings.delta, fit.wall_time_seconds)
        if fit.rank is not None:
            rec = replace(rec, rank_hat=float(fit.rank))
        res.records[method] = rec
        res.acceptance[method] = fit.acceptance_rate
    return res


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float


@dataclass
class ReplicationReport:
    scenario: Scenario
    methods: tuple
    R: int
    seeds: list
    stats: dict  # (method, metric) -> Summary
    acceptance: dict  # method -> mean acceptance rate
    n_divergent: dict  # method -> count
    results: list = field(repr=False, default_factory=list)

    def mean(self, method: str, metric: str) -> float:
        return self.stats[method, metric].mean

    def sd(self, method: str, metric: str) -> float:
        return self.stats[method, metric].sd

    def values(self, method: str, metric: str) -> np.ndarray:
        return np.array([r.records[method].get(metric) for r in self.results if method in r.records])

    def rows(self):
        """(method, metric, mean, sd) rows in table order."""
        for method in self.methods:
            for metric in METRICS:
                s = self.stats[method, metric]
                yield method, metric, s.mean, s.sd


def _summarize(values: np.ndarray) -> Summary:
    mean = float(np.mean(values))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    if values.size > 1 and np.all(values == values[0]):
        mean, sd = float(values[0]), 0.0
    return Summary(mean, sd)


def _run_job(args):
    return run_one_replication(*args)


def run_replications(
    sc: Scenario,
    methods: Iterable[str],
    R: int,
    base_seed: int = 0,
    settings: Optional[MethodSettings] = None,
    jobs: int = 1,
    progress=None,
) -> ReplicationReport:
    """Replicate the data generation and every fit ``R`` times.

    Replication i uses seed ``base_seed + i``. Diverged fits are excluded and
    counted; more than 10% divergent replications for any method is an error.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    methods = tuple(dict.fromkeys(methods))
    for mth in methods:
        if mth not in METHODS:
            raise ValueError(f"unknown method {mth!r}; expected one of {METHODS}")
    settings = settings or MethodSettings()
    seeds = [base_seed + i for i in range(R)]
    tasks = [(sc, methods, i, s, settings) for i, s in enumerate(seeds)]
    results: list[ReplicationResult] = []
    if jobs > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_run_job, tasks):
                results.append(res)
                if progress:
                    progress(res)
    else:
        for t in tasks:
            res = _run_job(t)
            results.append(res)
            if progress:
                progress(res)
    results.sort(key=lambda r: r.index)

    n_div = {mth: sum(mth in r.diverged for r in results) for mth in methods}
    for mth, cnt in n_div.items():
        if cnt:
            log.warning("%s diverged in %d of %d replications (excluded)", mth, cnt, R)
        if cnt > 0.1 * R:
            raise ExperimentError(f"{mth} diverged in {cnt} of {R} replications (more than 10%)")
    stats, acceptance = {}, {}
    for mth in methods:
        kept = [r for r in results if mth in r.records]
        for metric in METRICS:
            stats[mth, metric] = _summarize(np.array([r.records[mth].get(metric) for r in kept]))
        acceptance[mth] = float(np.mean([r.acceptance[mth] for r in kept]))
    return ReplicationReport(sc, methods, R, seeds, stats, acceptance, n_div, results)


class TimingRow(NamedTuple):
    method: str
    p: int
    seconds: float


def runtime_bench(
    p_values: Sequence[int] = (10, 50, 100, 150),
    n: int = 100,
    m: int = 90,
    r: int = 2,
    iters: int = 10,
    methods: Sequence[str] = METHODS,
    base_seed: int = 0,
    repeats: int = 3,
    lam: float = 3.0,
    progress=None,
) -> list[TimingRow]:
    """Wall time of ``iters`` sampler iterations (one full 10-fold CV for RRR) per p.

    Each timing is the minimum over ``repeats`` runs on the same dataset.
    """
    if not p_values:
        raise ValueError("p_values must be non-empty")
    rows = []
    for p in p_values:
        sc = Scenario("II", n=n, p=p, m=m, r=min(r, p, m))
        ds = gen_dataset(sc, make_rng(child_seed(base_seed, p)))
        data = RegressionData(ds.X, ds.Y, 1.0)
        settings = MethodSettings(h=default_step_size(sc), lam=lam, T=iters, burn_in=0)
        for method in methods:
            best = math.inf
            for rep in range(repeats):
                rng = make_rng(child_seed(base_seed, p, METHODS.index(method), rep))
                best = min(best, fit_method(method, data, settings, settings.h, rng).wall_time_seconds)
            rows.append(TimingRow(method, p, best))
            if progress:
                progress(rows[-1])
    return rows


# --- train/test resplitting on a fixed dataset --------------------------------

@dataclass
class SplitReport:
    methods: tuple
    mspe: dict  # method -> array over resplits
    rank: dict  # method -> array over resplits

    def rows(self):
        for mth in self.methods:
            for name, vals in (("mspe", self.mspe[mth]), ("rank", self.rank[mth])):
                s = _summarize(np.asarray(vals, dtype=float))
                yield mth, name, s.mean, s.sd


def auto_step_size(X: np.ndarray, sigma2: float, lam: float, m: int) -> float:
    """Half the inverse of a Lipschitz bound on the posterior gradient near zero."""
    p = X.shape[1]
    smax = singular_values(X)[0]
    return 0.5 / (smax * smax / sigma2 + (p + m + 2) / (lam * lam))


def split_protocol(
    X: np.ndarray,
    Y: np.ndarray,
    methods: Sequence[str] = ("lmc", "mala", "rrr"),
    n_test: int = 10,
    resplits: int = 100,
    seed: int = 0,
    settings: Optional[MethodSettings] = None,
    sigma2: float = 1.0,
    progress=None,
) -> SplitReport:
    """Random train/test resplits: fit on the training rows, score MSPE on the rest."""
    n = X.shape[0]
    if not 1 <= n_test < n:
        raise ValueError(f"n_test must lie in [1, {n - 1}]")
    settings = settings or MethodSettings()
    methods = tuple(dict.fromkeys(methods))
    mspe = {mth: [] for mth in methods}
    rank = {mth: [] for mth in methods}
    for i in range(resplits):
        perm = make_rng(child_seed(seed, i, 0)).permutation(n)
        te, tr = perm[:n_test], perm[n_test:]
        data = RegressionData(X[tr], Y[tr], sigma2)
        h = settings.h if settings.h is not None else auto_step_size(data.X, sigma2, settings.lam, data.m)
        for mth in methods:
            rng = make_rng(child_seed(seed, i, METHODS.index(mth) + 1))
            fit = fit_method(mth, data, settings, h, rng)
            mspe[mth].append(frobenius_sq(Y[te] - X[te] @ fit.estimate) / (n_test * Y.shape[1]))
            rank[mth].append(fit.rank if fit.rank is not None else estimate_rank(fit.estimate, settings.delta))
        if progress:
            progress(i)
    return SplitReport(methods, mspe, rank)
