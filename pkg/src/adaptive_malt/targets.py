"""Differentiable target densities and the built-in desk-scale targets.

Every potential and gradient accepts positions of shape ``(..., d)`` so that
a whole ensemble of chains can be evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "TargetDensity",
    "BuiltinTargetSpec",
    "GradientCheckReport",
    "InvalidTargetError",
    "make_target",
    "check_gradient",
    "TARGET_KINDS",
]

TARGET_KINDS = (
    "standard-gaussian",
    "diag-gaussian",
    "rotated-gaussian",
    "rosenbrock",
    "synthetic-logistic-regression",
)


class InvalidTargetError(ValueError):
    """Raised when a target specification has invalid parameters."""


@dataclass(frozen=True)
class TargetDensity:
    """A density ``exp(-potential(x))`` on R^d together with its gradient.

    ``potential`` maps ``(..., d) -> (...)`` and ``gradient`` maps
    ``(..., d) -> (..., d)``. Gaussian built-ins also carry their exact
    moments so that tests can compare against ground truth.
    """

    dim: int
    potential: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    name: str
    mean: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None
    init_scale: float = 1.0
    data: Optional[dict] = field(default=None, compare=False, repr=False)

    @property
    def variances(self) -> Optional[np.ndarray]:
        if self.covariance is None:
            return None
        return np.diag(self.covariance).copy()

    @property
    def covariance_eigenvalues(self) -> Optional[np.ndarray]:
        """Eigenvalues of the true covariance in decreasing order."""
        if self.covariance is None:
            return None
        return np.linalg.eigvalsh(self.covariance)[::-1]

    @classmethod
    def from_pointwise(
        cls,
        dim: int,
        potential: Callable[[np.ndarray], float],
        gradient: Callable[[np.ndarray], np.ndarray],
        name: str = "user",
        **kwargs,
    ) -> "TargetDensity":
        """Wrap functions of a single ``(d,)`` point so they accept batches."""

        def batched_potential(x):
            x = np.asarray(x, dtype=float)
            flat = x.reshape(-1, dim)
            out = np.array([potential(row) for row in flat], dtype=float)
            return out.reshape(x.shape[:-1])

        def batched_gradient(x):
            x = np.asarray(x, dtype=float)
            flat = x.reshape(-1, dim)
            out = np.array([gradient(row) for row in flat], dtype=float)
            return out.reshape(x.shape)

        return cls(dim, batched_potential, batched_gradient, name, **kwargs)


@dataclass(frozen=True)
class BuiltinTargetSpec:
    """Name plus parameters of a built-in target.

    Only the fields relevant to ``kind`` are read:

    * ``standard-gaussian``: ``dim``
    * ``diag-gaussian``: ``variances``
    * ``rotated-gaussian``: ``spectrum``, ``rotation_seed``
    * ``rosenbrock``: ``dim`` (even), ``curvature``
    * ``synthetic-logistic-regression``: ``n_obs``, ``dim``, ``data_seed``
    """

    kind: str
    dim: Optional[int] = None
    variances: Optional[Sequence[float]] = None
    spectrum: Optional[Sequence[float]] = None
    rotation_seed: int = 0
    curvature: float = 5.0
    n_obs: int = 100
    data_seed: int = 0
    init_scale: float = 1.0


def _positive_array(values, what: str) -> np.ndarray:
    if values is None:
        raise InvalidTargetError(f"{what} must be given")
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size < 1:
        raise InvalidTargetError(f"{what} must have at least one entry")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidTargetError(f"{what} must be strictly positive, got {arr}")
    return arr


def _check_dim(dim) -> int:
    if dim is None or int(dim) != dim or dim < 1:
        raise InvalidTargetError(f"dim must be a positive integer, got {dim!r}")
    return int(dim)


def _gaussian(precision: np.ndarray, covariance: np.ndarray, name: str, init_scale: float):
    dim = precision.shape[0]

    def potential(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, precision, x)

    def gradient(x):
        return np.asarray(x, dtype=float) @ precision

    return TargetDensity(
        dim, potential, gradient, name,
        mean=np.zeros(dim), covariance=covariance, init_scale=init_scale,
    )


def _diag_gaussian(variances: np.ndarray, name: str, init_scale: float):
    inv = 1.0 / variances

    def potential(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x * inv, axis=-1)

    def gradient(x):
        return np.asarray(x, dtype=float) * inv

    return TargetDensity(
        variances.size, potential, gradient, name,
        mean=np.zeros(variances.size), covariance=np.diag(variances),
        init_scale=init_scale,
    )


def random_rotation(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def _rosenbrock(dim: int, curvature: float, init_scale: float):
    # coordinates are paired (x[0], x[1]), (x[2], x[3]), ...
    def potential(x):
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0::2], x[..., 1::2]
        return np.sum((1.0 - a) ** 2 + curvature * (b - a * a) ** 2, axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0::2], x[..., 1::2]
        r = b - a * a
        g = np.empty_like(x)
        g[..., 0::2] = -2.0 * (1.0 - a) - 4.0 * curvature * a * r
        g[..., 1::2] = 2.0 * curvature * r
        return g

    return TargetDensity(dim, potential, gradient, f"rosenbrock({dim},b={curvature:g})",
                         init_scale=init_scale)


def _logistic_regression(n_obs: int, dim: int, data_seed: int, init_scale: float):
    rng = np.random.default_rng(data_seed)
    covariates = rng.standard_normal((n_obs, dim))
    true_weights = rng.standard_normal(dim)
    labels = (rng.uniform(size=n_obs) < expit(covariates @ true_weights)).astype(float)

    def potential(w):
        w = np.asarray(w, dtype=float)
        logits = w @ covariates.T
        nll = np.sum(np.logaddexp(0.0, logits) - labels * logits, axis=-1)
        return nll + 0.5 * np.sum(w * w, axis=-1)

    def gradient(w):
        w = np.asarray(w, dtype=float)
        resid = expit(w @ covariates.T) - labels
        return resid @ covariates + w

    return TargetDensity(
        dim, potential, gradient,
        f"logistic-regression(n={n_obs},d={dim},seed={data_seed})",
        init_scale=init_scale,
        data={"covariates": covariates, "labels": labels, "true_weights": true_weights},
    )


def make_target(spec: BuiltinTargetSpec | dict) -> TargetDensity:
    """Build a :class:`TargetDensity` from a built-in spec (or an equivalent dict)."""
    if isinstance(spec, dict):
        spec = BuiltinTargetSpec(**spec)
    if spec.init_scale <= 0:
        raise InvalidTargetError("init_scale must be positive")
    kind = spec.kind
    if kind == "standard-gaussian":
        dim = _check_dim(spec.dim)
        return _diag_gaussian(np.ones(dim), f"standard-gaussian({dim})", spec.init_scale)
    if kind == "diag-gaussian":
        variances = _positive_array(spec.variances, "variances")
        if spec.dim is not None and spec.dim != variances.size:
            raise InvalidTargetError("dim does not match the number of variances")
        return _diag_gaussian(variances, f"diag-gaussian({variances.size})", spec.init_scale)
    if kind == "rotated-gaussian":
        spectrum = _positive_array(spec.spectrum, "spectrum")
        if spec.dim is not None and spec.dim != spectrum.size:
            raise InvalidTargetError("dim does not match the spectrum length")
        q = random_rotation(spectrum.size, spec.rotation_seed)
        cov = (q * spectrum) @ q.T
        prec = (q / spectrum) @ q.T
        cov = 0.5 * (cov + cov.T)
        prec = 0.5 * (prec + prec.T)
        return _gaussian(prec, cov, f"rotated-gaussian({spectrum.size})", spec.init_scale)
    if kind == "rosenbrock":
        dim = _check_dim(2 if spec.dim is None else spec.dim)
        if dim % 2:
            raise InvalidTargetError("rosenbrock needs an even dimension")
        if not spec.curvature > 0:
            raise InvalidTargetError("curvature must be positive")
        return _rosenbrock(dim, float(spec.curvature), spec.init_scale)
    if kind == "synthetic-logistic-regression":
        dim = _check_dim(spec.dim)
        if int(spec.n_obs) < 1:
            raise InvalidTargetError("n_obs must be at least 1")
        return _logistic_regression(int(spec.n_obs), dim, int(spec.data_seed), spec.init_scale)
    raise InvalidTargetError(f"unknown target kind {kind!r}; expected one of {TARGET_KINDS}")


@dataclass
class GradientCheckReport:
    passed: bool
    max_error: float
    errors: np.ndarray
    tol: float


def check_gradient(
    target: TargetDensity,
    points: Sequence[np.ndarray],
    tol: float = 1e-5,
    eps: float = 1e-5,
) -> GradientCheckReport:
    """Compare ``target.gradient`` with central finite differences of the potential.

    The error at a point is ``max|fd - grad| / max(1, max|grad|)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = target.dim
    errors = np.empty(len(points))
    eye = np.eye(d)
    for i, x in enumerate(points):
        step = eps * np.maximum(1.0, np.abs(x))
        fwd = target.potential(x + eye * step[:, None])
        bwd = target.potential(x - eye * step[:, None])
        fd = (fwd - bwd) / (2.0 * step)
        g = np.asarray(target.gradient(x), dtype=float)
        if g.shape != (d,):
            errors[i] = np.inf
            continue
        errors[i] = np.max(np.abs(fd - g)) / max(1.0, np.max(np.abs(g)))
    max_error = float(np.max(errors)) if errors.size else 0.0
    return GradientCheckReport(bool(max_error <= tol), max_error, errors, tol)
