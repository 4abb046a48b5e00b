# %% [markdown]
# # Trajectory kernels
#
# A MALT trajectory interleaves partial velocity refreshes with leapfrog steps
# and is accepted or rejected as a whole. This script looks at the energy error
# it accumulates, how the damping changes acceptance, and the HMC limit.

# %%
import numpy as np

from adaptive_malt import KernelParams, MassDiag, hmc_step, leapfrog, make_target, malt_step

target = make_target({"kind": "diag-gaussian", "variances": [1.0, 4.0, 16.0]})
mass = MassDiag.identity(3)

# %% [markdown]
# One leapfrog step forward, then one back with the velocity negated, returns
# to the start up to rounding.

# %%
x0 = np.array([0.5, -1.0, 2.0])
v0 = np.array([1.0, 0.3, -0.2])
x1, v1, _ = leapfrog(x0, v0, target, mass, 0.4)
xb, vb, _ = leapfrog(x1, -v1, target, mass, 0.4)
print("reversal error:", np.max(np.abs(xb - x0)), np.max(np.abs(vb + v0)))

# %% [markdown]
# Acceptance against step size for a few damping values, with the starting
# points drawn exactly from the target.

# %%
rng = np.random.default_rng(0)
x = rng.standard_normal((20_000, 3)) * np.sqrt([1.0, 4.0, 16.0])
print(f"{'h':>5} " + " ".join(f"gamma={g:<5}" for g in (0.0, 0.5, 2.0)))
for h in (0.2, 0.5, 1.0, 1.5):
    row = []
    for gamma in (0.0, 0.5, 2.0):
        out = malt_step(x, target, KernelParams(mass, gamma, h, 4.0), np.random.default_rng(1))
        row.append(out.accept_prob.mean())
    print(f"{h:5.1f} " + " ".join(f"{a:11.3f}" for a in row))

# %% [markdown]
# With exact draws the average of `exp(-delta)` is one. Per-step energy errors
# with their positive parts summed give a smaller acceptance probability than
# the whole trajectory.

# %%
out = malt_step(x, target, KernelParams(mass, 0.5, 1.0, 4.0), np.random.default_rng(2))
w = np.exp(-out.delta)
print("mean exp(-delta): %.4f +/- %.4f" % (w.mean(), w.std() / np.sqrt(w.size)))
steps = out.per_step_deltas
print("per-step acceptance:  ", np.exp(-np.maximum(steps, 0).sum(1)).mean())
print("trajectory acceptance:", np.exp(-np.maximum(steps.sum(1), 0)).mean())

# %% [markdown]
# Without damping the MALT code path reproduces HMC exactly.

# %%
p = KernelParams(mass, 0.0, 0.5, 3.0)
a = malt_step(x[:100], target, p, np.random.default_rng(3))
b = hmc_step(x[:100], target, p, np.random.default_rng(3))
print("identical:", np.array_equal(a.accepted_position, b.accepted_position))
