import dataclasses

import numpy as np
import pytest

from adaptive_malt.sampler import (
    RunConfig,
    SamplerAbort,
    initialize_chains,
    kernel_params_from_record,
    run,
    run_adaptive,
    run_baseline,
)
from adaptive_malt.targets import make_target

GAUSS3 = make_target({"kind": "standard-gaussian", "dim": 3})
SMALL = dict(chains=3, n_adapt=150, n_clip=20, n_postadapt_warmup=20, n_sample=40)


def test_same_config_is_bit_reproducible():
    a = run(GAUSS3, RunConfig(seed=5, **SMALL))
    b = run(GAUSS3, RunConfig(seed=5, **SMALL))
    assert a.same_data(b)
    c = run(GAUSS3, RunConfig(seed=6, **SMALL))
    assert not a.same_data(c)


def test_phases_and_shapes():
    rec = run(GAUSS3, RunConfig(**SMALL))
    assert rec.phase.size == 210
    assert (rec.phase == 0).sum() == 150 and (rec.phase == 2).sum() == 40
    assert rec.draws.shape == (3, 40, 3)
    assert rec.deltas.shape == (210, 3)
    np.testing.assert_array_equal(rec.draws[:, -1, :], rec.final_positions)
    assert np.all(np.isnan(rec.grad_step[150:]))
    assert rec.total_grad_evals == int(np.sum(3 * (rec.n_leapfrog + 1)))


def test_length_clipped_to_step_during_initial_window():
    rec = run(GAUSS3, RunConfig(**SMALL))
    np.testing.assert_array_equal(rec.length[:20], rec.step_size[:20])
    assert np.all(rec.n_leapfrog[:20] == 1)
    assert np.all(rec.length >= rec.step_size)


def test_parameters_frozen_after_adaptation():
    rec = run(GAUSS3, RunConfig(**SMALL))
    for name in ("step_size", "length", "damping", "eta", "n_leapfrog"):
        tail = getattr(rec, name)[150:]
        assert np.all(tail == tail[0]), name
    assert rec.tuner_after_adapt == rec.tuner_final
    p = kernel_params_from_record(rec)
    assert p.step == rec.step_size[-1] and p.length == rec.length[-1]


def test_no_adaptation_keeps_initial_parameters():
    cfg = RunConfig(chains=2, n_adapt=0, n_clip=0, n_postadapt_warmup=5, n_sample=20,
                    step_size=0.3, length=1.2, damping=0.7, adapt_mass=False)
    rec = run(GAUSS3, cfg)
    assert np.all(rec.step_size == 0.3) and np.all(rec.length == 1.2)
    assert np.all(rec.damping == 0.7) and np.all(rec.n_leapfrog == 4)
    np.testing.assert_array_equal(rec.final_mass, np.ones(3))


def test_default_initial_step_size():
    rec = run(GAUSS3, RunConfig(chains=1, n_adapt=0, n_clip=0, n_sample=10))
    h0 = 0.5 * 3 ** -0.25
    assert rec.step_size[0] == pytest.approx(h0) and rec.length[0] == pytest.approx(h0)


def test_fixed_one_rho_mode():
    rec = run(GAUSS3, RunConfig(rho_mode="fixed-one", **SMALL))
    assert np.all(rec.rho == 1.0)
    adaptive = run(GAUSS3, RunConfig(**SMALL))
    assert np.all((adaptive.rho >= 0) & (adaptive.rho <= 1))
    assert not np.all(adaptive.rho == 1.0)


def test_hmc_baseline_records_no_damping():
    rec = run_baseline(GAUSS3, RunConfig(kernel="hmc", **SMALL))
    assert np.all(rec.eta == 1.0) and np.all(rec.damping == 0.0)


@pytest.mark.parametrize("spec", [
    {"kind": "diag-gaussian", "variances": [1.0, 9.0]},
    {"kind": "rosenbrock", "dim": 2},
])
def test_malt_without_damping_equals_hmc(spec):
    target = make_target(spec)
    cfg = RunConfig(seed=2, damping=0.0, **SMALL)
    assert run(target, cfg).same_data(run(target, dataclasses.replace(cfg, kernel="hmc")))


def test_rhmc_uniform_realised_length_mean():
    cfg = RunConfig(chains=2, n_adapt=0, n_clip=0, n_postadapt_warmup=0, n_sample=2000,
                    kernel="rhmc-uniform", step_size=0.05, length=1.0, adapt_mass=False)
    rec = run_baseline(GAUSS3, cfg)
    assert np.mean(rec.realized_length) == pytest.approx(1.0, rel=0.05)
    assert np.all(rec.length == 1.0)


def test_rhmc_shares_jitter_across_chains():
    cfg = RunConfig(chains=4, kernel="rhmc-exponential", **{k: v for k, v in SMALL.items()
                                                             if k != "chains"})
    rec = run(GAUSS3, cfg)
    # one realised length per iteration; every chain used the same number of steps
    np.testing.assert_array_equal(rec.grad_evals, 4 * (rec.n_leapfrog + 1))
    assert len(np.unique(rec.n_leapfrog)) > 1


def test_run_wrappers_check_kernel():
    with pytest.raises(ValueError):
        run_adaptive(GAUSS3, RunConfig(kernel="hmc", **SMALL))
    with pytest.raises(ValueError):
        run_baseline(GAUSS3, RunConfig(**SMALL))


def test_initialize_chains_reproducible_and_distinct():
    a = initialize_chains(GAUSS3, RunConfig(chains=5, seed=1))
    b = initialize_chains(GAUSS3, RunConfig(chains=5, seed=1))
    np.testing.assert_array_equal(a.positions, b.positions)
    assert len({tuple(p) for p in a.positions}) == 5
    s = a.streams(3)
    assert s[0].standard_normal() != s[1].standard_normal()


def test_initial_scale_variance():
    target = make_target({"kind": "standard-gaussian", "dim": 100})
    ens = initialize_chains(target, RunConfig(chains=200, init_scale=2.0))
    assert ens.positions.var() == pytest.approx(4.0, rel=0.10)


def test_sampling_phase_stationarity_identity():
    target = make_target({"kind": "diag-gaussian", "variances": [1.0, 4.0]})
    rec = run(target, RunConfig(chains=8, n_adapt=500, n_postadapt_warmup=200, n_sample=800,
                                seed=4))
    w = np.exp(-rec.deltas[rec.phase == 2]).ravel()
    assert abs(w.mean() - 1.0) < 3 * w.std() / np.sqrt(w.size)


def test_store_coords_subset():
    rec = run(GAUSS3, RunConfig(store_coords=[2, 0], **SMALL))
    assert rec.draws.shape[-1] == 2
    np.testing.assert_array_equal(rec.draws[:, -1], rec.final_positions[:, [2, 0]])


def test_single_chain_preset():
    cfg = RunConfig.single_chain(n_adapt=100)
    assert cfg.chains == 1 and cfg.n_adapt == 400
    assert cfg.tuner.adam.learning_rate == 0.01


def test_nonfinite_tuner_state_aborts():
    with np.errstate(all="ignore"):
        with pytest.raises(SamplerAbort) as err:
            run(GAUSS3, RunConfig(chains=2, n_adapt=20, n_clip=0, n_sample=10, init_scale=1e300))
    assert "iteration" in err.value.snapshot


@pytest.mark.parametrize("bad", [
    dict(chains=0), dict(n_clip=10, n_adapt=5), dict(kernel="nuts"), dict(rho_mode="auto"),
    dict(step_size=0.0), dict(length=-1.0), dict(damping=-0.1), dict(n_sample=-1),
])
def test_run_config_validation(bad):
    with pytest.raises(ValueError):
        RunConfig(**bad)


def test_mass_dimension_checked():
    with pytest.raises(ValueError):
        run(GAUSS3, RunConfig(n_adapt=0, n_clip=0, n_sample=10, mass=[1.0, 2.0],
                              adapt_mass=False))
