"""Recovering the center of a heat source from one sensor reading.

Every center on the circle around the sensor explains the reading, so a good
sampler spreads its samples along the whole circle.
"""
import numpy as np

from fresgld import HeatModelParams, PdePosterior, forward_solution, iqoi_metrics, preset, run_seed

params = HeatModelParams()
post = PdePosterior(params)

# %% The reading and the ring of equally good explanations.
print("sensor reading", forward_solution(params, params.sensor, params.T))
angles = np.linspace(0, 2 * np.pi, 5)[:-1]
ring = np.column_stack([0.3 + 0.2 * np.cos(angles), 0.5 + 0.2 * np.sin(angles)])
print("energy on the ring", post.energy(ring))

# %% The three noise settings, 12k steps each.
for arm in "sfl":
    res = run_seed(preset(f"paper-pde-{arm}", n_steps=12_000, n_retained=12_000), 0, keep_trace=False)
    m = iqoi_metrics(res.samples, params, arm)
    print(f"{arm}-reSGLD: {m.annulus_coverage:.3f} of samples near the ring, "
          f"{m.angular_bins_occupied}/36 sectors visited")
