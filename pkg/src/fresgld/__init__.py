"""Replica-exchange Langevin samplers with noisy energy and gradient estimators.

The bias-corrected variant (``f_resgld``) shrinks the injected noise by the
estimated gradient-noise covariance and swaps chains with a rule that stays
unbiased under Gaussian energy noise.
"""
from .config import ConfigError, ExperimentConfig, preset
from .diagnostics import (DensityEstimate, RunMetrics, kde, mixture_quantile, swap_summary,
                          wasserstein2_1d, wasserstein2_gaussian, wasserstein2_vs_target)
from .experiment import compare, run_ensemble, run_experiment, run_seed
from .pde import (HeatModelParams, IqoiMetrics, PdePosterior, forward_solution, iqoi_metrics,
                  make_pde_arm, pde_energy, pde_gradient)
from .samplers import (ChainState, NonFiniteGradient, ReplicaPair, SampleTrace, StepSchedule,
                       StepTooLarge, SwapRule, attempt_swap, effective_noise_factor, f_sgld_step,
                       ld_step, run_replica_exchange, sgld_step, swap_rate_exact,
                       swap_rate_fresgld, swap_rate_mresgld, swap_rate_resgld)
from .targets import (GaussianMixture, NoiseSpec, NoisyEnergyModel, Quadratic,
                      gaussian_mixture_energy, gaussian_mixture_gradient,
                      mixture_state_dependent_noise, quadratic_energy, quadratic_gradient)
from .variance import (KernelRidgeVariance, KnownVariance, RunningVariance, krr_fit, krr_predict,
                       running_update, sample_variance_at_state)

__version__ = "0.1.0"
