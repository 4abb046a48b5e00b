"""MALT sampler with online hyperparameter tuning, HMC baselines and ESS diagnostics."""

from .adaptation import (
    AdamConfig,
    AdamState,
    AmnesiaSchedule,
    OnlineMoments,
    adam_update,
    ccipca_update,
    compute_damping,
    compute_mass,
    compute_rho,
    esjd_grad_forward,
    esjd_grad_reduced,
    online_update,
    phi,
    phi_grad,
    step_size_gradient,
    trajectory_gradient,
)
from .diagnostics import (
    EssReport,
    autocorrelation,
    ess_geyer,
    esjd,
    min_ess_squared_coords,
)
from .dynamics import (
    KernelParams,
    MassDiag,
    NonFiniteStateError,
    TrajectoryOutcome,
    hmc_step,
    leapfrog,
    malt_step,
    partial_refresh,
    rhmc_step,
)
from .sampler import (
    ChainEnsemble,
    RunConfig,
    RunRecord,
    SamplerAbort,
    TunerConfig,
    initialize_chains,
    run,
    run_adaptive,
    run_baseline,
)
from .targets import BuiltinTargetSpec, TargetDensity, check_gradient, make_target

__version__ = "0.1.0"
