"""Bayesian reduced-rank regression with a spectral scaled Student prior.

Posterior means are computed by unadjusted Langevin Monte Carlo or by the
Metropolis-adjusted Langevin algorithm; a factorization-prior Gibbs sampler
and cross-validated reduced-rank regression serve as baselines.
"""

from .baselines import RrrFit, cv_select_rank, ols_pinv, rrr_fit
from .experiments import (
    MetricsRecord,
    ReplicationReport,
    Scenario,
    compute_metrics,
    default_step_size,
    estimate_rank,
    gen_dataset,
    run_replications,
    runtime_bench,
    scenario,
)
from .numerics import make_rng
from .posterior import (
    PriorSpec,
    RegressionData,
    grad_neg_log_posterior,
    log_likelihood,
    log_posterior,
    log_prior,
    shrink,
)
from .samplers import (
    ChainOutput,
    GibbsConfig,
    SamplerConfig,
    TransienceError,
    default_init,
    gibbs_sample,
    lmc_sample,
    mala_sample,
    run_chain_timed,
)

__version__ = "0.1.0"
