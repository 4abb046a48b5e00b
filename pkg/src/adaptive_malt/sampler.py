"""Multi-chain adaptive MALT driver and the HMC / RHMC baselines.

One iteration runs the kernel on all ``K`` chains at once (vectorised over
the chain axis), reduces the per-chain statistics, then applies the tuner
updates serially. Every random draw comes from a stream keyed by
``(seed, purpose, chain, iteration)``, so runs replay bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from .adaptation import (
    AdamConfig,
    AdamState,
    AmnesiaSchedule,
    OnlineMoments,
    adam_update,
    compute_damping,
    compute_mass,
    compute_rho,
    online_update,
    phi,
    trajectory_gradient,
)
from .dynamics import (
    KernelParams,
    MassDiag,
    TrajectoryOutcome,
    _trajectory,
    draw_jittered_length,
    num_steps,
)
from .targets import TargetDensity

__all__ = [
    "KERNELS",
    "TunerConfig",
    "RunConfig",
    "ChainEnsemble",
    "TunerState",
    "RunRecord",
    "SamplerAbort",
    "initialize_chains",
    "run_adaptive",
    "run_baseline",
    "run",
]

KERNELS = ("malt", "hmc", "rhmc-uniform", "rhmc-exponential")
RHO_MODES = ("adaptive", "fixed-one")

# stream purposes
_INIT, _KERNEL, _JITTER = 0, 1, 2


class SamplerAbort(RuntimeError):
    """The tuner state became non-finite; ``snapshot`` holds the offending values."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class TunerConfig:
    adam: AdamConfig = AdamConfig()
    amnesia: AmnesiaSchedule = AmnesiaSchedule()
    target_accept: float = 0.8
    var_floor: float = 1e-10
    damping_fallback: float = 1.0
    max_length_ratio: float = 1e6
    acceptance_mean: str = "arithmetic"

    def __post_init__(self):
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.acceptance_mean not in ("arithmetic", "harmonic"):
            raise ValueError("acceptance_mean must be 'arithmetic' or 'harmonic'")
        if not self.max_length_ratio >= 1.0:
            raise ValueError("max_length_ratio must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    """Settings of one run.

    ``step_size``/``length`` are the initial values of ``h`` and ``tau``
    (default ``h0 = 0.5 d^{-1/4}``, ``tau0 = h0``). ``damping`` pins ``gamma`` to
    a fixed value instead of deriving it from the PCA estimate. With
    ``adapt_mass=False`` the mass stays at ``mass`` (identity by default).
    ``store_coords`` restricts the stored draws to the listed coordinates.
    """

    chains: int = 4
    n_adapt: int = 5000
    n_clip: int = 100
    n_postadapt_warmup: int = 400
    n_sample: int = 1600
    seed: int = 0
    kernel: str = "malt"
    rho_mode: str = "adaptive"
    tuner: TunerConfig = TunerConfig()
    step_size: Optional[float] = None
    length: Optional[float] = None
    damping: Optional[float] = None
    adapt_mass: bool = True
    mass: Optional[Sequence[float]] = None
    init_scale: Optional[float] = None
    store_coords: Optional[Sequence[int]] = None

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be at least 1")
        for name in ("n_adapt", "n_clip", "n_postadapt_warmup", "n_sample"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_clip > self.n_adapt:
            raise ValueError("n_clip cannot exceed n_adapt")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.rho_mode not in RHO_MODES:
            raise ValueError(f"rho_mode must be one of {RHO_MODES}")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.length is not None and not self.length > 0:
            raise ValueError("length must be positive")
        if self.damping is not None and not self.damping >= 0:
            raise ValueError("damping must be non-negative")

    @classmethod
    def single_chain(cls, **overrides) -> "RunConfig":
        """One chain with a smaller learning rate and four times the adaptation.

        A lone chain gives noisier gradient estimates, so the tuner needs both a
        lower Adam rate (0.01) and a longer warm-up.
        """
        overrides = dict(overrides)
        overrides["n_adapt"] = 4 * overrides.get("n_adapt", cls.n_adapt)
        overrides["chains"] = 1
        tuner = overrides.get("tuner", TunerConfig())
        overrides["tuner"] = replace(tuner, adam=replace(tuner.adam, learning_rate=0.01))
        return cls(**overrides)


def _stream(seed: int, purpose: int, chain: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, chain, iteration)))


@dataclass
class ChainEnsemble:
    positions: np.ndarray
    seed: int
    iteration: int = 0

    @property
    def n_chains(self) -> int:
        return self.positions.shape[0]

    def streams(self, iteration: int) -> list:
        """Per-chain generators for the kernel call of ``iteration``."""
        return [_stream(self.seed, _KERNEL, k, iteration) for k in range(self.n_chains)]

    def shared_stream(self, iteration: int) -> np.random.Generator:
        """Generator shared by all chains, used for jittered trajectory lengths."""
        return _stream(self.seed, _JITTER, 0, iteration)


def initialize_chains(target: TargetDensity, config: RunConfig) -> ChainEnsemble:
    """Overdispersed start: ``x_k ~ N(0, scale^2 I)``, one stream per chain."""
    scale = config.init_scale if config.init_scale is not None else target.init_scale
    positions = np.stack([
        scale * _stream(config.seed, _INIT, k, 0).standard_normal(target.dim)
        for k in range(config.chains)
    ])
    return ChainEnsemble(positions, config.seed, 0)


@dataclass(frozen=True)
class TunerState:
    moments: OnlineMoments
    adam_step: AdamState
    adam_length: AdamState

    @property
    def step_size(self) -> float:
        return math.exp(self.adam_step.theta)

    @property
    def length(self) -> float:
        return math.exp(self.adam_length.theta)

    def snapshot(self) -> dict:
        m = self.moments
        return {
            "mean": m.mean.tolist(), "var": m.var.tolist(), "pca_vector": m.pca_vector.tolist(),
            "proj_mean": m.proj_mean, "proj_var": m.proj_var, "lag_cov": m.lag_cov,
            "log_step": self.adam_step.theta, "log_length": self.adam_length.theta,
            "adam_step": [self.adam_step.m, self.adam_step.s, self.adam_step.n],
            "adam_length": [self.adam_length.m, self.adam_length.s, self.adam_length.n],
        }

    def is_finite(self) -> bool:
        vals = (self.adam_step.theta, self.adam_step.s, self.adam_length.theta,
                self.adam_length.s)
        return self.moments.is_finite() and all(math.isfinite(v) for v in vals)


@dataclass
class RunRecord:
    """Per-iteration trace, sampling-phase draws and gradient counters.

    Trace arrays have one entry per iteration over all three phases
    (adaptation, post-adaptation warm-up, sampling); ``phase`` labels them
    0, 1 and 2. Adaptation-only quantities are NaN outside phase 0.
    """

    kernel: str
    rho_mode: str
    phase: np.ndarray
    step_size: np.ndarray
    length: np.ndarray
    damping: np.ndarray
    eta: np.ndarray
    eigenvalue: np.ndarray
    rho: np.ndarray
    realized_length: np.ndarray
    n_leapfrog: np.ndarray
    acceptance: np.ndarray
    accept_rate: np.ndarray
    grad_step: np.ndarray
    grad_length: np.ndarray
    deltas: np.ndarray
    grad_evals: np.ndarray
    draws: np.ndarray
    stored_coords: np.ndarray
    final_mass: np.ndarray
    final_positions: np.ndarray
    tuner_after_adapt: dict = field(repr=False)
    tuner_final: dict = field(repr=False)

    _DATA_FIELDS = (
        "phase", "step_size", "length", "damping", "eta", "eigenvalue", "rho",
        "realized_length", "n_leapfrog", "acceptance", "accept_rate", "grad_step",
        "grad_length", "deltas", "grad_evals", "draws", "stored_coords", "final_mass",
        "final_positions",
    )

    @property
    def n_chains(self) -> int:
        return self.deltas.shape[1]

    @property
    def n_sample(self) -> int:
        return self.draws.shape[1]

    @property
    def total_grad_evals(self) -> int:
        return int(np.sum(self.grad_evals))

    @property
    def sampling_grad_evals(self) -> int:
        return int(np.sum(self.grad_evals[self.phase == 2]))

    def same_data(self, other: "RunRecord") -> bool:
        """Bit-for-bit equality of every numeric field (NaNs compare equal)."""
        for name in self._DATA_FIELDS:
            a, b = getattr(self, name), getattr(other, name)
            if a.shape != b.shape or not np.array_equal(a, b, equal_nan=a.dtype.kind == "f"):
                return False
        return self.tuner_after_adapt == other.tuner_after_adapt and \
            self.tuner_final == other.tuner_final

    def trace_columns(self) -> dict:
        """Per-iteration columns in a fixed order, as written to trace.csv."""
        return {
            "iteration": np.arange(1, self.phase.size + 1),
            "phase": self.phase,
            "step_size": self.step_size,
            "length": self.length,
            "damping": self.damping,
            "eigenvalue": self.eigenvalue,
            "rho": self.rho,
            "acceptance": self.acceptance,
            "accept_rate": self.accept_rate,
            "n_leapfrog": self.n_leapfrog,
            "grad_step": self.grad_step,
            "grad_length": self.grad_length,
            "grad_evals": self.grad_evals,
        }


def _mean_acceptance(probs: np.ndarray, how: str) -> float:
    if how == "harmonic":
        if np.any(probs <= 0):
            return 0.0
        return float(probs.size / np.sum(1.0 / probs))
    return float(np.mean(probs))


def _tuner_step(state, probs, x, out, rho, tau, realized, jitter, moments, mass, tcfg, n):
    """Adam updates of ``log h`` and ``log tau`` followed by the moment update."""
    g_h = _mean_acceptance(probs, tcfg.acceptance_mean) - tcfg.target_accept
    scale = realized / tau if jitter is not None else 1.0
    g_k = trajectory_gradient(x, out.end_velocity, out.start_position,
                              out.start_velocity, rho, tau, moments, mass, scale)
    g_tau = float(np.mean(g_k))
    adam_step = adam_update(state.adam_step, g_h, tcfg.adam)
    adam_length = adam_update(state.adam_length, g_tau, tcfg.adam)
    log_h = adam_step.theta
    log_tau = min(max(adam_length.theta, log_h), log_h + math.log(tcfg.max_length_ratio))
    adam_length = replace(adam_length, theta=log_tau)
    new_moments = online_update(moments, tcfg.amnesia, x, out.start_position, mass, n)
    return TunerState(new_moments, adam_step, adam_length), g_h, g_tau


def run(target: TargetDensity, config: RunConfig) -> RunRecord:
    """Adapt for ``n_adapt`` iterations, then warm up and sample with frozen parameters.

    Each adaptation iteration ``n`` computes the mass and damping from the
    current estimates, forces ``tau = h`` while ``n <= n_clip``, runs the
    kernel on all chains, Adam-updates ``log h`` (target acceptance) and
    ``log tau`` (rescaled ESJD gradient), then updates the online moments.
    """
    d = target.dim
    K = config.chains
    tcfg = config.tuner
    ensemble = initialize_chains(target, config)
    x = ensemble.positions

    h0 = config.step_size if config.step_size is not None else 0.5 * d ** -0.25
    tau0 = config.length if config.length is not None else h0
    state = TunerState(
        OnlineMoments.initial(d),
        AdamState(math.log(h0)),
        AdamState(math.log(tau0)),
    )
    fixed_mass = MassDiag(config.mass) if config.mass is not None else MassDiag.identity(d)
    if fixed_mass.dim != d:
        raise ValueError("mass dimension does not match the target")
    is_hmc = config.kernel != "malt"
    jitter = config.kernel.split("-", 1)[1] if config.kernel.startswith("rhmc") else None
    rho_fixed = config.rho_mode == "fixed-one"

    n_total = config.n_adapt + config.n_postadapt_warmup + config.n_sample
    coords = np.arange(d) if config.store_coords is None else np.asarray(config.store_coords, int)
    trace = {name: np.full(n_total, np.nan) for name in (
        "step_size", "length", "damping", "eta", "eigenvalue", "rho", "realized_length",
        "acceptance", "accept_rate", "grad_step", "grad_length")}
    n_leapfrog = np.zeros(n_total, dtype=np.int64)
    grad_evals = np.zeros(n_total, dtype=np.int64)
    phase = np.zeros(n_total, dtype=np.int64)
    phase[config.n_adapt:] = 1
    phase[config.n_adapt + config.n_postadapt_warmup:] = 2
    deltas = np.zeros((n_total, K))
    draws = np.zeros((K, config.n_sample, coords.size))

    def kernel_params(st: TunerState, n: int, adapting: bool):
        mass = compute_mass(st.moments.var, tcfg.var_floor) if config.adapt_mass else fixed_mass
        if config.damping is not None:
            gamma = float(config.damping)
        else:
            gamma = compute_damping(st.moments.pca_vector, tcfg.damping_fallback)
        h = st.step_size
        clip = n <= config.n_clip if adapting else (
            config.n_adapt > 0 and config.n_clip >= config.n_adapt)
        tau = h if clip else st.length
        if is_hmc:
            gamma = 0.0
        return mass, gamma, h, tau

    tuner_after_adapt = None
    frozen = None
    for it in range(n_total):
        n = it + 1
        adapting = it < config.n_adapt
        if adapting:
            mass, gamma, h, tau = kernel_params(state, n, True)
        else:
            if frozen is None:
                frozen = kernel_params(state, n, False)
                tuner_after_adapt = state.snapshot()
            mass, gamma, h, tau = frozen
        moments = state.moments
        rho = 1.0 if rho_fixed else compute_rho(moments.lag_cov, moments.proj_var)

        if jitter is not None:
            realized = draw_jittered_length(tau, h, jitter, ensemble.shared_stream(n))
        else:
            realized = tau
        steps = num_steps(realized, h)
        eta = 1.0 if is_hmc else math.exp(-gamma * h)
        out: TrajectoryOutcome = _trajectory(
            x, target, mass, h, steps, eta, ensemble.streams(n), track_steps=False)
        x = out.accepted_position
        probs = out.accept_prob

        trace["step_size"][it] = h
        trace["length"][it] = tau
        trace["damping"][it] = gamma
        trace["eta"][it] = eta
        trace["eigenvalue"][it] = moments.eigenvalue
        trace["rho"][it] = rho
        trace["realized_length"][it] = realized
        trace["acceptance"][it] = np.mean(probs)
        trace["accept_rate"][it] = np.mean(out.accepted)
        n_leapfrog[it] = steps
        grad_evals[it] = K * out.gradient_evals
        deltas[it] = out.delta

        if adapting:
            with np.errstate(all="ignore"):
                state, g_h, g_tau = _tuner_step(
                    state, probs, x, out, rho, tau, realized, jitter, moments, mass, tcfg, n)
            trace["grad_step"][it] = g_h
            trace["grad_length"][it] = g_tau
            if not (state.is_finite() and math.isfinite(g_h) and math.isfinite(g_tau)):
                raise SamplerAbort(
                    f"non-finite tuner state at iteration {n}",
                    {"iteration": n, "grad_step": g_h, "grad_length": g_tau,
                     **state.snapshot()},
                )
        if phase[it] == 2:
            draws[:, it - config.n_adapt - config.n_postadapt_warmup, :] = x[:, coords]

    if frozen is None:
        frozen = kernel_params(state, n_total + 1, False)
        tuner_after_adapt = state.snapshot()
    return RunRecord(
        kernel=config.kernel,
        rho_mode=config.rho_mode,
        phase=phase,
        n_leapfrog=n_leapfrog,
        deltas=deltas,
        grad_evals=grad_evals,
        draws=draws,
        stored_coords=coords,
        final_mass=frozen[0].entries.copy(),
        final_positions=x,
        tuner_after_adapt=tuner_after_adapt,
        tuner_final=state.snapshot(),
        **trace,
    )


def run_adaptive(target: TargetDensity, config: RunConfig) -> RunRecord:
    """Adaptive MALT run (``config.kernel`` must be ``"malt"``)."""
    if config.kernel != "malt":
        raise ValueError("run_adaptive needs kernel='malt'; use run_baseline for HMC/RHMC")
    return run(target, config)


def run_baseline(target: TargetDensity, config: RunConfig) -> RunRecord:
    """Same adaptive loop with the HMC or RHMC kernel substituted.

    RHMC draws one trajectory length per iteration and shares it across chains.
    """
    if config.kernel == "malt":
        raise ValueError("run_baseline needs an hmc or rhmc kernel")
    return run(target, config)


def kernel_params_from_record(record: RunRecord) -> KernelParams:
    """Frozen kernel parameters of a finished run."""
    last = -1
    return KernelParams(MassDiag(record.final_mass), float(record.damping[last]),
                        float(record.step_size[last]), float(record.length[last]))
