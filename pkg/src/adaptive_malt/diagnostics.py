"""Post-run diagnostics: autocorrelation, ESS, ESJD and efficiency summaries."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "AutocorrResult",
    "EssReport",
    "autocorrelation",
    "ess_geyer",
    "esjd",
    "min_ess_squared_coords",
    "rolling_acceptance",
    "percentile",
    "bootstrap_sem",
    "default_max_lag",
]


def default_max_lag(n: int) -> int:
    return int(max(1, min(n - 1, math.floor(10 * math.sqrt(n)))))


class AutocorrResult(np.ndarray):
    """Autocorrelation array carrying a ``degenerate`` flag."""

    degenerate: bool = False


def _autocov(series: np.ndarray, mean: Optional[float] = None) -> np.ndarray:
    n = series.size
    centered = series - (series.mean() if mean is None else mean)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, size)
    return np.fft.irfft(spec * np.conj(spec), size)[:n] / n


def autocorrelation(series, max_lag: Optional[int] = None) -> AutocorrResult:
    """Biased (1/N normalised) sample autocorrelations at lags ``0..max_lag``.

    A zero-variance series returns ``[1, 0, 0, ...]`` with ``degenerate=True``.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if max_lag is None:
        max_lag = default_max_lag(n)
    if not 1 <= max_lag < n:
        raise ValueError(f"need 1 <= max_lag < len(series), got max_lag={max_lag}, n={n}")
    acov = _autocov(x)[: max_lag + 1]
    if not acov[0] > 0:
        out = np.zeros(max_lag + 1).view(AutocorrResult)
        out[0] = 1.0
        out.degenerate = True
        return out
    out = (acov / acov[0]).view(AutocorrResult)
    out[0] = 1.0
    out.degenerate = False
    return out


def ess_geyer(series, mean: Optional[float] = None) -> float:
    """Effective sample size with Geyer's initial monotone sequence estimator.

    Paired sums ``Gamma_k = rho(2k) + rho(2k + 1)`` are truncated at the first
    negative pair and forced to be non-increasing; then
    ``ESS = N / (-1 + 2 sum_k Gamma_k)``. Antithetic chains can give ESS > N.

    ``mean`` centres the autocovariances at a given value (e.g. a mean pooled
    over several chains) instead of the series' own mean, so that a chain stuck
    away from the pooled mean scores a small ESS.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ValueError("ess_geyer needs at least 10 draws")
    acov = _autocov(x, mean)
    if not acov[0] > 0:
        warnings.warn("degenerate (constant) series; reporting ESS = N", RuntimeWarning,
                      stacklevel=2)
        return float(n)
    rho = acov / acov[0]
    n_pairs = n // 2
    pairs = rho[0: 2 * n_pairs: 2] + rho[1: 2 * n_pairs: 2]
    negative = np.nonzero(pairs < 0)[0]
    stop = negative[0] if negative.size else n_pairs
    pairs = np.minimum.accumulate(pairs[:stop])
    tau = -1.0 + 2.0 * np.sum(pairs)
    # same ceiling as common practice: ESS <= N log10(N)
    tau = max(tau, 1.0 / math.log10(n))
    return float(n / tau)


def esjd(series) -> float:
    """Mean squared successive difference, pooled over chains.

    ``series`` is one chain ``(N,)`` or several ``(K, N)``.
    """
    x = np.atleast_2d(np.asarray(series, dtype=float))
    if x.shape[1] < 2:
        raise ValueError("esjd needs at least two draws per chain")
    return float(np.mean(np.diff(x, axis=1) ** 2))


@dataclass
class EssReport:
    ess: np.ndarray
    min_ess: float
    argmin: int
    ess_per_grad: float
    ess_per_iter: float
    autocorr_curve: np.ndarray
    n_draws: int
    n_chains: int
    grad_evals: int

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ess"] = self.ess.tolist()
        out["autocorr_curve"] = self.autocorr_curve.tolist()
        return out


def min_ess_squared_coords(record, target=None, coords: Optional[Sequence[int]] = None) -> EssReport:
    """Minimum ESS over coordinates of the centred second moment.

    For coordinate ``j`` the series ``(x_j - mean_j)^2`` (``mean_j`` pooled over
    all chains) is scored per chain with :func:`ess_geyer`, centring at the
    pooled mean of the squared series, and the chain values are summed. A chain
    stuck at a value far from the other chains therefore scores a small ESS.
    Per-coordinate ESS is capped at twice the total number of draws.
    ``record`` is a :class:`~adaptive_malt.sampler.RunRecord` or a raw draws array
    of shape ``(K, N, d)``; ``target`` is accepted for interface symmetry and unused.
    """
    if isinstance(record, np.ndarray):
        draws, grads = record, 0
    else:
        draws, grads = record.draws, record.sampling_grad_evals
    K, N, d = draws.shape
    if N < 10:
        raise ValueError("need at least 10 sampling draws per chain")
    cols = range(d) if coords is None else coords
    centred = (draws - draws.mean(axis=(0, 1))) ** 2
    pooled = centred.mean(axis=(0, 1))
    ess = np.array([
        min(sum(ess_geyer(centred[k, :, j], pooled[j]) for k in range(K)), 2.0 * K * N)
        for j in cols
    ])
    j = int(np.argmin(ess))
    min_ess = float(ess[j])
    acf = np.mean([autocorrelation(centred[k, :, j], min(N - 1, 50)) for k in range(K)], axis=0)
    return EssReport(
        ess=ess,
        min_ess=min_ess,
        argmin=j,
        ess_per_grad=min_ess / grads if grads else float("nan"),
        ess_per_iter=min_ess / (K * N),
        autocorr_curve=np.asarray(acf),
        n_draws=N,
        n_chains=K,
        grad_evals=int(grads),
    )


def rolling_acceptance(record, window: int = 200) -> float:
    """Mean acceptance probability over the last ``window`` adaptation iterations."""
    acc = record.acceptance[record.phase == 0]
    if acc.size == 0:
        raise ValueError("record has no adaptation phase")
    return float(np.mean(acc[-window:]))


def percentile(values, q: float = 10.0) -> float:
    """Empirical percentile with linear interpolation between order statistics."""
    return float(np.percentile(np.asarray(values, dtype=float), q, method="linear"))


def bootstrap_sem(values, statistic=percentile, n_boot: int = 1000, seed: int = 0) -> float:
    """Bootstrap standard error of ``statistic`` over resampled ``values``."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float("nan")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    stats = np.array([statistic(values[i]) for i in idx])
    return float(np.std(stats, ddof=1))
