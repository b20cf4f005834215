"""Why the injected noise has to shrink when the gradient is noisy.

Run with ``python demos/01_noise_correction.py``.
"""
import numpy as np

from fresgld import (ChainState, GaussianMixture, KnownVariance, NoiseSpec, NoisyEnergyModel,
                     StepTooLarge, effective_noise_factor, f_sgld_step, sgld_step)

# %% One exact Langevin step has variance 2 eta tau.  A noisy gradient adds
# eta^2 s^2 on top, so plain SGLD overshoots.
eta, tau, s = 0.03, 1.0, 2.0
print("exact step variance      ", 2 * eta * tau)
print("SGLD step variance       ", 2 * eta * tau + eta**2 * s**2)

# %% The corrected step injects sqrt(2) c xi with c c^T = tau eta - eta^2 s^2 / 2,
# so the two sources add back up to 2 eta tau.
c = effective_noise_factor(s, eta, tau)
print("noise factor c           ", c[0, 0])
print("eta^2 s^2 + 2 c^2        ", eta**2 * s**2 + 2 * c[0, 0] ** 2)

# %% Empirically, on the two-mode mixture at theta = 0.5.
n = 200_000
base = GaussianMixture()
noise = NoiseSpec.constant(1, 0.0, s)
rng = np.random.default_rng(0)
model = NoisyEnergyModel(base, noise, rng)
start = np.full((n, 1), 0.5)
plain = sgld_step(ChainState(start, tau, rng), model, eta).position
fixed = f_sgld_step(ChainState(start, tau, rng), model, KnownVariance(noise), eta).position
print("SGLD sample variance     ", plain.var())
print("corrected sample variance", fixed.var())

# %% The correction is only possible while eta s^2 <= 2 tau.
try:
    effective_noise_factor(9.0, eta, tau)
except StepTooLarge as err:
    print("s = 9:", err)
