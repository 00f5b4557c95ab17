"""Time-series diagnostics for simulated and empirical returns.

Includes the mean squared error against a reference series, the Ljung-Box
portmanteau test, the Durbin-Watson statistic, plain sample moments and a
Gaussian kernel density estimate. The chi-square tail probability needed by
Ljung-Box is evaluated with a self-contained regularized incomplete gamma
function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, DomainError

_GAMMA_EPS = 1e-16
_GAMMA_ITMAX = 10_000
_TINY = 1e-300


@dataclass(frozen=True)
class SeriesDiagnostics:
    mse: float
    ljung_box_stat: float
    ljung_box_pvalue: float
    dw: float
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float


def mse(sim, ref) -> float:
    sim = np.asarray(sim, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if sim.shape != ref.shape or sim.ndim != 1:
        raise DimensionError(f"series shapes differ: {sim.shape} vs {ref.shape}")
    if sim.size == 0:
        raise DimensionError("empty series")
    return float(np.mean((sim - ref) ** 2))


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x) by its power series; converges fast for x < a + 1
    ap, term = a, 1.0 / a
    total = term
    for _ in range(_GAMMA_ITMAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma series did not converge")
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # upper regularized Q(a, x) by modified Lentz continued fraction; for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:
        raise ArithmeticError("incomplete gamma continued fraction did not converge")
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0 or x < 0:
        raise DomainError("gammainc_lower requires a > 0 and x >= 0")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0 or x < 0:
        raise DomainError("gammainc_upper requires a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi2_sf(q: float, dof: int) -> float:
    """Survival function of the chi-square distribution."""
    if math.isinf(q):
        return 0.0
    return gammainc_upper(dof / 2.0, q / 2.0)


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``1..max_lag``."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise DegenerateInputError("zero-variance series")
    return np.array([float(x[j:] @ x[:-j]) / denom for j in range(1, max_lag + 1)])


def ljung_box(series, lags: int = 10) -> tuple[float, float]:
    """Ljung-Box statistic and its chi-square p-value with ``lags`` dof."""
    x = np.asarray(series, dtype=float)
    T = x.size
    if not (1 <= lags < T):
        raise DomainError(f"need 1 <= lags < T, got lags={lags}, T={T}")
    rho = autocorrelation(x, lags)
    j = np.arange(1, lags + 1)
    q = float(T * (T + 2) * np.sum(rho**2 / (T - j)))
    return q, chi2_sf(q, lags)


def durbin_watson(series) -> float:
    """Durbin-Watson statistic of the mean-centred series."""
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise DomainError("durbin_watson needs at least two points")
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise DegenerateInputError("zero-variance series")
    d = np.diff(x)
    return float(d @ d) / denom


def sample_moments(series) -> tuple[float, float, float, float]:
    """Mean, std (1/(T-1)), skewness and excess kurtosis.

    Skewness and kurtosis use central moments with divisor ``T`` and are
    ``nan`` for a constant series.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise DomainError("sample_moments needs at least two points")
    mean = float(x.mean())
    c = x - mean
    m2 = float(np.mean(c**2))
    std = float(np.sqrt(np.sum(c**2) / (x.size - 1)))
    if m2 == 0.0:
        return mean, std, math.nan, math.nan
    skew = float(np.mean(c**3)) / m2**1.5
    kurt = float(np.mean(c**4)) / m2**2 - 3.0
    return mean, std, skew, kurt


def silverman_bandwidth(series) -> float:
    x = np.asarray(series, dtype=float)
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def density_estimate(series, grid, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density estimate evaluated on ``grid``."""
    x = np.asarray(series, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if x.size < 10:
        raise DomainError("density_estimate needs at least ten points")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DegenerateInputError("zero-variance series")
    out = np.empty(grid.shape, dtype=float)
    flat = out.reshape(-1)
    norm = 1.0 / (x.size * h * math.sqrt(2.0 * math.pi))
    # chunk the grid so the kernel matrix stays small for long series
    step = max(1, 2_000_000 // x.size)
    g = grid.reshape(-1)
    for i in range(0, g.size, step):
        z = (g[i:i + step, None] - x[None, :]) / h
        flat[i:i + step] = norm * np.exp(-0.5 * z * z).sum(axis=1)
    return out


def diagnose(series, reference=None, lags: int = 10) -> SeriesDiagnostics:
    """Bundle all diagnostics of ``series``; MSE is ``nan`` without a reference."""
    x = np.asarray(series, dtype=float)
    err = mse(x, reference) if reference is not None else math.nan
    q, p = ljung_box(x, lags)
    return SeriesDiagnostics(err, q, p, durbin_watson(x), *sample_moments(x))
