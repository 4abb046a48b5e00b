"""Online tuning machinery for the MALT hyperparameters.

Covers Adam (ascent form), the online moment estimates with amnesia decay,
CCIPCA for the leading principal component, the mass/damping rules, the
step-size synthetic gradient, and the trajectory-length gradient built from
the squared principal projection.

Position arguments are batched like the kernels: ``(d,)`` or ``(K, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import MassDiag

__all__ = [
    "AdamConfig",
    "AdamState",
    "AmnesiaSchedule",
    "OnlineMoments",
    "UndefinedAxisError",
    "adam_update",
    "step_size_gradient",
    "phi",
    "phi_grad",
    "esjd_grad_forward",
    "esjd_grad_reduced",
    "trajectory_gradient",
    "ccipca_update",
    "compute_mass",
    "compute_damping",
    "compute_rho",
    "online_update",
]


class UndefinedAxisError(ValueError):
    """The principal-component estimate is still the zero vector."""


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.05
    beta1: float = 0.0
    beta2: float = 0.95
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class AdamState:
    theta: float
    m: float = 0.0
    s: float = 0.0
    n: int = 0


def adam_update(state: AdamState, g: float, cfg: AdamConfig = AdamConfig()) -> AdamState:
    """One Adam ascent step on ``theta`` with bias-corrected moments.

    The step counter is incremented first, so the first call corrects with ``n = 1``.
    """
    n = state.n + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g
    s = cfg.beta2 * state.s + (1.0 - cfg.beta2) * g * g
    m_hat = m / (1.0 - cfg.beta1**n)
    s_hat = s / (1.0 - cfg.beta2**n)
    theta = state.theta + cfg.learning_rate * m_hat / (math.sqrt(s_hat) + cfg.epsilon)
    return AdamState(theta, m, s, n)


@dataclass(frozen=True)
class AmnesiaSchedule:
    """Decay ``beta(n) = n / (n + a)``; ``a_w`` is used for the PCA vector."""

    a: float = 8.0
    a_w: float = 3.0

    def __post_init__(self):
        if not (self.a > 1 and self.a_w > 1):
            raise ValueError("amnesia parameters must exceed 1")

    def beta(self, n: int) -> float:
        return n / (n + self.a)

    def beta_w(self, n: int) -> float:
        return n / (n + self.a_w)


@dataclass(frozen=True)
class OnlineMoments:
    """Running estimates used by the tuner.

    ``mean``/``var`` are coordinate-wise moments, ``pca_vector`` the CCIPCA
    vector ``w`` whose norm estimates the top eigenvalue of the preconditioned
    covariance, ``proj_mean``/``proj_var`` the mean and variance of the squared
    projection, and ``lag_cov`` its covariance across one transition.
    """

    mean: np.ndarray
    var: np.ndarray
    pca_vector: np.ndarray
    proj_mean: float = 0.0
    proj_var: float = 0.0
    lag_cov: float = 0.0

    @classmethod
    def initial(cls, dim: int) -> "OnlineMoments":
        return cls(np.zeros(dim), np.ones(dim), np.zeros(dim))

    @property
    def eigenvalue(self) -> float:
        return float(np.linalg.norm(self.pca_vector))

    def principal_axis(self, fallback: bool = True) -> np.ndarray:
        """Unit vector ``w / |w|``; the first coordinate axis while ``w`` is zero."""
        norm = np.linalg.norm(self.pca_vector)
        if norm > 0:
            return self.pca_vector / norm
        if not fallback:
            raise UndefinedAxisError("principal axis undefined while |w| = 0")
        axis = np.zeros_like(self.pca_vector)
        axis[0] = 1.0
        return axis

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.var))
            and np.all(np.isfinite(self.pca_vector))
            and math.isfinite(self.proj_mean) and math.isfinite(self.proj_var)
            and math.isfinite(self.lag_cov)
        )


def step_size_gradient(delta, alpha_star: float = 0.8):
    """``exp(-max(0, delta)) - alpha_star``; a divergence (``inf``) gives ``-alpha_star``."""
    return np.exp(-np.maximum(delta, 0.0)) - alpha_star


def _projection(x, moments: OnlineMoments, mass: MassDiag, fallback: bool):
    z = moments.principal_axis(fallback=fallback)
    direction = mass.sqrt * z
    return (np.asarray(x, dtype=float) - moments.mean) @ direction, direction


def phi(x, moments: OnlineMoments, mass: MassDiag, fallback: bool = True):
    """Squared principal projection ``(z^T M^{1/2} (x - m))^2``."""
    proj, _ = _projection(x, moments, mass, fallback)
    return proj * proj


def phi_grad(x, moments: OnlineMoments, mass: MassDiag, fallback: bool = True):
    """Gradient of :func:`phi`: ``2 (z^T M^{1/2} (x - m)) M^{1/2} z``."""
    proj, direction = _projection(x, moments, mass, fallback)
    return 2.0 * np.multiply.outer(proj, direction)


def esjd_grad_forward(x_end, x_start, v_end, moments: OnlineMoments, mass: MassDiag):
    """Single-ended estimate of the derivative of the ESJD with respect to the length.

    ``2 (grad_phi(x_end)^T M^{-1} v_end) (phi(x_end) - phi(x_start))``.
    """
    speed = np.sum(phi_grad(x_end, moments, mass) * mass.inv * np.asarray(v_end, dtype=float),
                   axis=-1)
    return 2.0 * speed * (phi(x_end, moments, mass) - phi(x_start, moments, mass))


def esjd_grad_reduced(x_end, v_end, x_start, v_start, moments: OnlineMoments, mass: MassDiag):
    """Average of the forward estimate and its time-reversed counterpart."""
    fwd = esjd_grad_forward(x_end, x_start, v_end, moments, mass)
    rev = esjd_grad_forward(x_start, x_end, -np.asarray(v_start, dtype=float), moments, mass)
    return 0.5 * (fwd + rev)


def trajectory_gradient(
    x_accepted,
    v_end,
    x_start,
    v_start,
    rho: float,
    tau: float,
    moments: OnlineMoments,
    mass: MassDiag,
    jitter_scale=1.0,
):
    """Per-chain gradient of the rescaled ESJD criterion in the trajectory length.

    ``jitter_scale * g(X, v_end, x0, v0) - (1 + rho) / (2 tau) * (phi(X) - phi(x0))^2``.
    ``jitter_scale`` is the ratio of the realised to the mean length for
    randomised trajectories (1 otherwise).
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if not tau > 0:
        raise ValueError("tau must be positive")
    g = esjd_grad_reduced(x_accepted, v_end, x_start, v_start, moments, mass)
    jump = phi(x_accepted, moments, mass) - phi(x_start, moments, mass)
    return jitter_scale * g - (1.0 + rho) / (2.0 * tau) * jump * jump


def ccipca_update(w, x, moments: OnlineMoments, mass: MassDiag, beta: float):
    """CCIPCA step ``w <- beta w + (1 - beta) mean_k y_k (y_k^T w) / |w|``.

    ``y = M^{1/2} (x - m)`` with ``x`` one sample or a batch. From ``w = 0`` the
    direction is seeded by the first sample, which gives ``(1 - beta) y |y|`` for
    a single sample.
    """
    w = np.asarray(w, dtype=float)
    y = np.atleast_2d(mass.sqrt * (np.asarray(x, dtype=float) - moments.mean))
    norm = np.linalg.norm(w)
    if norm > 0:
        z = w / norm
    else:
        seed_norm = np.linalg.norm(y[0])
        if seed_norm == 0:
            return np.zeros_like(w)
        z = y[0] / seed_norm
    proj = y @ z
    return beta * w + (1.0 - beta) * np.mean(proj[:, None] * y, axis=0)


def compute_mass(s, floor: float = 1e-10) -> MassDiag:
    """``M = max(s) diag(s)^{-1}`` with variances floored at ``floor * max(s)``."""
    s = np.asarray(s, dtype=float)
    top = np.max(s)
    if not top > 0 or not np.isfinite(top):
        return MassDiag.identity(s.size)
    s = np.maximum(s, floor * top)
    return MassDiag(top / s)


def compute_damping(w, fallback: float = 1.0) -> float:
    """``|w|^{-1/2}``, or ``fallback`` while ``w`` is still zero."""
    norm = float(np.linalg.norm(w))
    if not norm > 0:
        return float(fallback)
    return norm**-0.5


def compute_rho(c: float, s2: float) -> float:
    """``max(0, c) / s2`` clipped to ``[0, 1]``; 1 when ``s2`` is not positive."""
    if not s2 > 0:
        return 1.0
    return float(min(1.0, max(0.0, c) / s2))


def online_update(
    moments: OnlineMoments,
    schedule: AmnesiaSchedule,
    positions,
    start_positions,
    mass: MassDiag,
    n: int,
) -> OnlineMoments:
    """Fold one batch of chain positions into the running estimates.

    The lag covariance uses the pre-update projection statistics, as computed
    alongside the kernel calls. The five remaining statistics are then updated
    in order ``m, s, w, m2, s2``, each seeing the values already refreshed in
    this call. ``mass`` is the mass used for the current iteration.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    start_positions = np.atleast_2d(np.asarray(start_positions, dtype=float))
    beta = schedule.beta(n)
    beta_w = schedule.beta_w(n)

    phi_end = phi(positions, moments, mass)
    phi_start = phi(start_positions, moments, mass)
    lag = np.mean((phi_end - moments.proj_mean) * (phi_start - moments.proj_mean))
    lag_cov = beta * moments.lag_cov + (1.0 - beta) * lag

    mean = beta * moments.mean + (1.0 - beta) * np.mean(positions, axis=0)
    var = beta * moments.var + (1.0 - beta) * np.mean((positions - mean) ** 2, axis=0)
    staged = replace(moments, mean=mean, var=var)
    w = ccipca_update(moments.pca_vector, positions, staged, mass, beta_w)
    staged = replace(staged, pca_vector=w)
    sq = phi(positions, staged, mass)
    proj_mean = beta * moments.proj_mean + (1.0 - beta) * np.mean(sq)
    proj_var = beta * moments.proj_var + (1.0 - beta) * np.mean((sq - proj_mean) ** 2)
    return OnlineMoments(mean, var, w, float(proj_mean), float(proj_var), float(lag_cov))
