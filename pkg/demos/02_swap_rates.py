"""Swapping two chains when energies are only known up to Gaussian noise.

Run with ``python demos/02_swap_rates.py``.
"""
import numpy as np

from fresgld import (swap_rate_exact, swap_rate_fresgld, swap_rate_mresgld, swap_rate_resgld)

tau1, tau2 = 1.0, 10.0
u1, u2 = 1.0, 2.0
var1, var2 = 1.0, 9.0

# %% The exact rate, and the corrected estimates with noise-free inputs.  The
# corrections subtract the lognormal bias that the noise would add.
print("exact                 ", swap_rate_exact(u1, u2, tau1, tau2))
print("single-variance rule  ", swap_rate_resgld(u1, u2, var1, tau1, tau2))
print("two-estimator rule    ", swap_rate_mresgld(u1, u2, u1, u2, var1, var2, 0.5, 0.5, tau1, tau2))
print("averaged-variance rule", swap_rate_fresgld(u1, u2, var1, var2, tau1, tau2))

# %% Averaged over noisy energies the averaged-variance rule is unbiased,
# using one energy call per chain instead of two.
rng = np.random.default_rng(1)
n = 1_000_000
z1, z2 = rng.standard_normal((2, n))
noisy = swap_rate_fresgld(u1 + np.sqrt(var1) * z1, u2 + np.sqrt(var2) * z2, var1, var2, tau1, tau2)
print("mean of noisy estimates", noisy.mean(), "+-", noisy.std() / np.sqrt(n))

# %% The acceptance probability clips at one, so by Jensen it is biased low.
clipped = np.minimum(1.0, noisy).mean()
print("E min(1, S_hat)", clipped, "<= min(1, S)", min(1.0, swap_rate_exact(u1, u2, tau1, tau2)))
