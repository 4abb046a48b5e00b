# %% [markdown]
# # A small benchmark battery
#
# Adaptive MALT with adaptive and fixed `rho` against HMC and the two jittered
# HMC variants, all using the same tuner, on a synthetic logistic regression.
# The summary rows hold the 10th percentile across seeds, its bootstrap SEM and
# the ratio to MALT with `rho = 1`.

# %%
import tempfile

from adaptive_malt.config import parse_config
from adaptive_malt.experiments import run_bench

cfg = parse_config({
    "target": {"kind": "synthetic-logistic-regression", "n_obs": 200, "dim": 10, "data_seed": 1},
    "run": {"chains": 4, "n_adapt": 1000, "n_postadapt_warmup": 200, "n_sample": 800},
    "bench": {"repeats": 5, "n_boot": 200},
})

with tempfile.TemporaryDirectory() as out:
    rows = run_bench(cfg, out)

# %%
print(f"{'method':<20} {'p10 ESS/grad':>13} {'SEM':>9} {'vs rho=1':>9} {'p10 ESS/iter':>13}")
for r in rows:
    if r["row_type"] == "summary":
        print(f"{r['method']:<20} {r['min_ess_per_grad']:13.5f} {r['sem_per_grad']:9.5f} "
              f"{r['normalized_per_grad']:9.3f} {r['min_ess_per_iter']:13.4f}")
