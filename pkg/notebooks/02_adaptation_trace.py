# %% [markdown]
# # Watching the tuner
#
# An adaptive run on an ill-conditioned Gaussian. The trace records the step
# size, trajectory length, damping, PCA eigenvalue estimate and the lag
# correlation `rho` at every iteration.

# %%
import numpy as np

from adaptive_malt import RunConfig, make_target, min_ess_squared_coords, run

variances = np.logspace(0, 2, 10)
target = make_target({"kind": "diag-gaussian", "variances": list(variances)})
rec = run(target, RunConfig(chains=4, n_adapt=2000, n_sample=1600, seed=0))

# %%
adapt = rec.phase == 0
print(f"{'iter':>6} {'h':>8} {'tau':>8} {'gamma':>8} {'lambda':>9} {'rho':>6} {'accept':>7}")
for it in [0, 10, 50, 100, 200, 500, 1000, 1999]:
    print(f"{it + 1:6d} {rec.step_size[it]:8.3f} {rec.length[it]:8.3f} {rec.damping[it]:8.3f} "
          f"{rec.eigenvalue[it]:9.2f} {rec.rho[it]:6.3f} {rec.acceptance[it]:7.3f}")

# %% [markdown]
# The learned mass rescales every coordinate to the largest variance, so the
# preconditioned target is close to isotropic with variance 100. The PCA
# estimate should sit near that value and the damping near `100 ** -0.5`.

# %%
print("final mass * variances:", np.round(rec.final_mass * variances, 1))
print("eigenvalue estimate:", round(float(rec.eigenvalue[adapt][-1]), 1))
print("damping:", round(float(rec.damping[-1]), 4))
print("mean acceptance (last 200 adaptation iterations):", rec.acceptance[adapt][-200:].mean())

# %%
rep = min_ess_squared_coords(rec, target)
print("per-coordinate ESS of squared centred draws:", np.round(rep.ess))
print("min ESS per gradient:", rep.ess_per_grad)
