"""Sliced Wasserstein variational inference with MCMC-driven targets."""

from .baselines import (ElboTrace, SinkhornConfig, SinkhornResult, exact_ot, gaussian_sw,
                        gaussian_w2, run_elbo_vi, sinkhorn_divergence)
from .engine import (NumericalError, OptimizerConfig, RunTrace, SwviConfig,
                     detect_stationarity, run_swvi, trailing_mean)
from .families import FamilyParams, backward, forward, fullcov, meanfield, mlp
from .mcmc import KernelConfig, leapfrog, step_hmc, step_rwmh, step_ula
from .sliced import ProjectionSet, sample_projections, sliced_wasserstein, wasserstein_1d
from .targets import (GaussianSpec, LogisticPosteriorSpec, MixtureSpec, Target,
                      gaussian_target, logistic_posterior, mixture_target)

__version__ = "0.1.0"

__all__ = [
    "ElboTrace", "SinkhornConfig", "SinkhornResult", "exact_ot", "gaussian_sw", "gaussian_w2",
    "run_elbo_vi", "sinkhorn_divergence", "NumericalError", "OptimizerConfig", "RunTrace",
    "SwviConfig", "detect_stationarity", "run_swvi", "trailing_mean", "FamilyParams",
    "backward", "forward", "fullcov", "meanfield", "mlp", "KernelConfig", "leapfrog",
    "step_hmc", "step_rwmh", "step_ula", "ProjectionSet", "sample_projections",
    "sliced_wasserstein", "wasserstein_1d", "GaussianSpec", "LogisticPosteriorSpec",
    "MixtureSpec", "Target", "gaussian_target", "logistic_posterior", "mixture_target",
]
