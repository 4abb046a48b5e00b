# %% [markdown]
# # Resonance and damping
#
# A fixed kernel on a two-dimensional Gaussian with variances 1 and 16 and the
# identity mass. The step size is chosen so that 20 leapfrog steps make exactly
# half a period of the unit-variance coordinate. Without damping that
# coordinate is mirrored on every draw, so its square never changes and its
# ESS collapses. A little damping breaks the resonance.

# %%
import math

import numpy as np

from adaptive_malt import RunConfig, make_target, min_ess_squared_coords, run
from adaptive_malt.diagnostics import percentile

target = make_target({"kind": "diag-gaussian", "variances": [1.0, 16.0]})
h = 2 * math.sin(math.pi / 40)

# %%
print(f"{'tau':>7} {'gamma':>6} {'p10 ESS/grad':>13} {'ESS x0^2':>9} {'ESS x1^2':>9}")
for steps in (20, 40):
    for gamma in (0.0, 0.1, 0.3, 1.0):
        vals, ess = [], []
        for seed in range(5):
            cfg = RunConfig(chains=4, n_adapt=0, n_clip=0, n_postadapt_warmup=100,
                            n_sample=1000, seed=seed, step_size=h, length=steps * h,
                            damping=gamma, adapt_mass=False)
            rep = min_ess_squared_coords(run(target, cfg))
            vals.append(rep.ess_per_grad)
            ess.append(rep.ess)
        ess = np.mean(ess, axis=0)
        print(f"{steps * h:7.3f} {gamma:6.1f} {percentile(vals):13.5f} {ess[0]:9.0f} {ess[1]:9.0f}")

# %% [markdown]
# The same grid (without the undamped column, since sweep grids must be
# positive) can be produced from the command line with
# `adaptive-malt sweep --config configs/sweep.toml`.
