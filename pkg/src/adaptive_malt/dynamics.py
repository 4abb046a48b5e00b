"""Leapfrog integration, partial momentum refreshment and trajectory kernels.

All kernels are vectorised over a leading batch axis: ``x`` may be a single
position of shape ``(d,)`` or an ensemble of shape ``(K, d)``. Random numbers
come either from one ``numpy.random.Generator`` shared by the batch or from a
sequence of generators, one per chain. In both cases a trajectory of ``L``
steps consumes ``(L + 1) * d`` standard normals followed by one ``Exp(1)``
variate per chain, in that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .targets import TargetDensity

__all__ = [
    "MassDiag",
    "KernelParams",
    "TrajectoryOutcome",
    "NonFiniteStateError",
    "leapfrog",
    "partial_refresh",
    "malt_step",
    "hmc_step",
    "rhmc_step",
    "draw_jittered_length",
    "num_steps",
]

RngLike = Union[np.random.Generator, Sequence[np.random.Generator]]


class NonFiniteStateError(FloatingPointError):
    """A potential, gradient or phase-space coordinate became non-finite."""


@dataclass(frozen=True)
class MassDiag:
    """Diagonal mass matrix with cached square root and inverse."""

    entries: np.ndarray
    sqrt: np.ndarray = field(init=False, repr=False, compare=False)
    inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float, ndmin=1)
        if not np.all(np.isfinite(entries)) or np.any(entries <= 0):
            raise ValueError("mass entries must be finite and strictly positive")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "sqrt", np.sqrt(entries))
        object.__setattr__(self, "inv", 1.0 / entries)

    @classmethod
    def identity(cls, dim: int) -> "MassDiag":
        return cls(np.ones(dim))

    @property
    def dim(self) -> int:
        return self.entries.size

    def kinetic(self, v: np.ndarray) -> np.ndarray:
        """Half the squared ``M^{-1}`` norm, ``v^T M^{-1} v / 2``."""
        return 0.5 * np.sum(v * v * self.inv, axis=-1)


@dataclass(frozen=True)
class KernelParams:
    """The four tunables of one MALT/HMC step: mass, damping, step, length."""

    mass: MassDiag
    damping: float
    step: float
    length: float

    def __post_init__(self):
        if not self.step > 0 or not math.isfinite(self.step):
            raise ValueError(f"step must be positive and finite, got {self.step}")
        if not self.length > 0 or not math.isfinite(self.length):
            raise ValueError(f"length must be positive and finite, got {self.length}")
        if not self.damping >= 0:
            raise ValueError(f"damping must be non-negative, got {self.damping}")

    @property
    def n_steps(self) -> int:
        return num_steps(self.length, self.step)

    @property
    def eta(self) -> float:
        return math.exp(-self.damping * self.step)


def num_steps(length: float, step: float) -> int:
    """``ceil(length / step)``, never below one."""
    return max(1, math.ceil(length / step))


@dataclass
class TrajectoryOutcome:
    """Everything produced by one (batched) trajectory kernel call.

    ``start_velocity`` is the first refreshed velocity, matching what the
    trajectory-length gradient estimator consumes. ``per_step_deltas`` holds the
    energy error of each leapfrog step, potential difference included, and is
    ``None`` when step tracking was switched off.
    """

    accepted_position: np.ndarray
    end_velocity: np.ndarray
    start_position: np.ndarray
    start_velocity: np.ndarray
    delta: np.ndarray
    accepted: np.ndarray
    per_step_deltas: Optional[np.ndarray]
    gradient_evals: int
    n_steps: int
    proposal: np.ndarray = field(repr=False)

    @property
    def accept_prob(self) -> np.ndarray:
        return np.exp(-np.maximum(self.delta, 0.0))


def leapfrog(x0, v0, target: TargetDensity, mass: MassDiag, h: float, grad_x0=None):
    """One leapfrog step; returns ``(x1, v1, grad_x1)``.

    ``grad_x0`` may be passed to reuse a gradient computed at ``x0``. Raises
    :class:`NonFiniteStateError` if the new state is not finite.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if grad_x0 is None:
        grad_x0 = target.gradient(x0)
    with np.errstate(all="ignore"):
        x1, v1, grad_x1 = _leapfrog(x0, v0, grad_x0, target, mass, h)
    if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(v1)) and np.all(np.isfinite(grad_x1))):
        raise NonFiniteStateError("leapfrog produced a non-finite state")
    return x1, v1, grad_x1


def _leapfrog(x0, v0, grad_x0, target, mass, h):
    v_half = v0 - (0.5 * h) * grad_x0
    x1 = x0 + h * mass.inv * v_half
    grad_x1 = target.gradient(x1)
    v1 = v_half - (0.5 * h) * grad_x1
    return x1, v1, grad_x1


def _refresh(v, eta, mass, noise):
    return eta * v + math.sqrt(max(0.0, 1.0 - eta * eta)) * (mass.sqrt * noise)


def partial_refresh(v, eta: float, mass: MassDiag, rng=None, noise=None):
    """Partial momentum refreshment ``eta * v + sqrt(1 - eta^2) * xi`` with ``xi ~ N(0, M)``.

    Draws ``v.size`` standard normals from ``rng`` unless ``noise`` is given.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    v = np.asarray(v, dtype=float)
    if noise is None:
        noise = rng.standard_normal(v.shape)
    return _refresh(v, eta, mass, np.asarray(noise, dtype=float))


def _draw(rng: RngLike, batch_shape, n_steps, dim):
    """Pre-draw the Gaussian noise (K, L+1, d) and exponential variates (K,)."""
    if isinstance(rng, np.random.Generator):
        noise = rng.standard_normal(batch_shape + (n_steps + 1, dim))
        expo = rng.exponential(size=batch_shape)
        return noise, expo
    gens = list(rng)
    k = batch_shape[0] if batch_shape else 1
    if len(gens) != k:
        raise ValueError(f"expected {k} generators, got {len(gens)}")
    noise = np.empty((k, n_steps + 1, dim))
    expo = np.empty(k)
    for i, gen in enumerate(gens):
        noise[i] = gen.standard_normal((n_steps + 1, dim))
        expo[i] = gen.exponential()
    if not batch_shape:
        return noise[0], expo[0]
    return noise, expo


def _trajectory(x, target, mass, h, n_steps, eta, rng, track_steps):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[-1] != mass.dim:
        raise ValueError("position and mass dimensions differ")
    if single and not isinstance(rng, np.random.Generator):
        noise, expo = _draw(rng, (1,), n_steps, mass.dim)
    else:
        noise, expo = _draw(rng, xb.shape[:1], n_steps, mass.dim)

    with np.errstate(all="ignore"):
        x0 = xb
        phi0 = target.potential(x0)
        grad = target.gradient(x0)
        v = mass.sqrt * noise[:, 0, :]
        xi = x0
        kinetic_sum = np.zeros(xb.shape[0])
        steps = np.empty((xb.shape[0], n_steps)) if track_steps else None
        phi_prev = phi0
        bad = ~np.isfinite(phi0) | ~np.all(np.isfinite(grad), axis=-1)
        v_start = None
        for i in range(1, n_steps + 1):
            v_ref = _refresh(v, eta, mass, noise[:, i, :])
            if v_start is None:
                v_start = v_ref
            xi, v, grad = _leapfrog(xi, v_ref, grad, target, mass, h)
            dk = mass.kinetic(v) - mass.kinetic(v_ref)
            kinetic_sum = kinetic_sum + dk
            if track_steps:
                phi_i = target.potential(xi)
                steps[:, i - 1] = phi_i - phi_prev + dk
                phi_prev = phi_i
            bad |= ~np.all(np.isfinite(grad), axis=-1) | ~np.all(np.isfinite(v), axis=-1)
        phi_end = phi_prev if track_steps else target.potential(xi)
        delta = kinetic_sum + (phi_end - phi0)
        bad |= ~np.isfinite(delta)
    delta = np.where(bad, np.inf, delta)
    accepted = ~(expo < delta)
    new_x = np.where(accepted[:, None], xi, x0)

    out = TrajectoryOutcome(
        accepted_position=new_x,
        end_velocity=v,
        start_position=x0,
        start_velocity=v_start,
        delta=delta,
        accepted=accepted,
        per_step_deltas=steps,
        gradient_evals=n_steps + 1,
        n_steps=n_steps,
        proposal=xi,
    )
    if single:
        out = TrajectoryOutcome(
            accepted_position=new_x[0],
            end_velocity=v[0],
            start_position=x0[0],
            start_velocity=v_start[0],
            delta=delta[0],
            accepted=accepted[0],
            per_step_deltas=None if steps is None else steps[0],
            gradient_evals=n_steps + 1,
            n_steps=n_steps,
            proposal=xi[0],
        )
    return out


def malt_step(
    x,
    target: TargetDensity,
    params: KernelParams,
    rng: RngLike,
    track_steps: bool = True,
) -> TrajectoryOutcome:
    """One Metropolis adjusted Langevin trajectory.

    Draws ``v0 ~ N(0, M)``; for each of ``L = ceil(tau / h)`` steps refreshes the
    velocity with ``eta = exp(-gamma h)`` then takes a leapfrog step, summing the
    kinetic energy changes. The potential difference is added at the end and the
    whole trajectory is rejected iff ``Z < Delta`` with ``Z ~ Exp(1)``.
    Non-finite trajectories get ``Delta = inf`` and are rejected.
    """
    return _trajectory(x, target, params.mass, params.step, params.n_steps, params.eta,
                       rng, track_steps)


def hmc_step(
    x,
    target: TargetDensity,
    params: KernelParams,
    rng: RngLike,
    track_steps: bool = True,
) -> TrajectoryOutcome:
    """Fixed-length HMC: :func:`malt_step` with the refresh switched off.

    The refresh noise is still drawn (and discarded) so the stream position
    matches a MALT trajectory with ``gamma = 0``.
    """
    return _trajectory(x, target, params.mass, params.step, params.n_steps, 1.0,
                       rng, track_steps)


def draw_jittered_length(tau: float, h: float, jitter: str, rng: np.random.Generator) -> float:
    """Random trajectory length with mean ``tau``, clamped below at ``h``.

    ``uniform`` draws from ``(0, 2 tau]``, ``exponential`` from ``Exp(mean tau)``.
    """
    if jitter == "uniform":
        length = 2.0 * tau * (1.0 - rng.uniform())
    elif jitter == "exponential":
        length = rng.exponential(tau)
    else:
        raise ValueError(f"unknown jitter {jitter!r}")
    return max(float(length), h)


def rhmc_step(
    x,
    target: TargetDensity,
    params: KernelParams,
    jitter: str,
    rng: RngLike,
    jitter_rng: Optional[np.random.Generator] = None,
    track_steps: bool = True,
) -> TrajectoryOutcome:
    """HMC with a randomised trajectory length of mean ``params.length``.

    One length is drawn per call (shared by the batch) from ``jitter_rng``, or
    from ``rng`` when that is a single generator.
    """
    if jitter_rng is None:
        jitter_rng = rng if isinstance(rng, np.random.Generator) else rng[0]
    length = draw_jittered_length(params.length, params.step, jitter, jitter_rng)
    n_steps = num_steps(length, params.step)
    return _trajectory(x, target, params.mass, params.step, n_steps, 1.0, rng, track_steps)
