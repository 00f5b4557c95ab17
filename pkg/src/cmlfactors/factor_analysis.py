"""PCA factor extraction against an uncoupled noise floor.

The number of factors is the count of ranks at which the normalized
eigenvalue spectrum of the coupled panel exceeds that of an uncoupled
(``epsilon = 0``) panel of the same shape. Loadings come from a least-squares
regression of each asset on the factor scores, and their balance across
factors is summarised by a normalized Shannon entropy.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateInputError, DimensionError, ParameterError
from .seeding import BASELINE, derive_seed
from .simulator import ReturnPanel, SimConfig, simulate_panel
from .network import CouplingNetwork

HEAVISIDE = "heaviside"
LEADING_RUN = "leading"


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    eigenvalues: np.ndarray = field(repr=False)
    normalized: np.ndarray
    components: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return self.normalized.shape[0]

    @classmethod
    def from_normalized(cls, normalized) -> "SpectrumReport":
        """Spectrum with no eigenvectors, e.g. a theoretical noise floor."""
        phi = np.sort(np.asarray(normalized, dtype=float))[::-1]
        if np.any(phi < 0) or not phi.sum() > 0:
            raise ParameterError("normalized spectrum must be non-negative with positive sum")
        phi = phi / phi.sum()
        return cls(phi.copy(), phi, np.full((phi.size, 0), np.nan))

    @classmethod
    def uniform(cls, K: int) -> "SpectrumReport":
        return cls.from_normalized(np.full(K, 1.0 / K))


@dataclass(eq=False)
class FactorFit:
    """Result of the factor model ``r_t = B f_t + xi_t`` on a centred panel.

    ``loadings`` and ``weights`` are ``m_hat x K``; ``entropy`` holds ``nan``
    where it is undefined (``m_hat <= 1`` or all loadings zero).
    """

    m_hat: int
    factors: np.ndarray = field(repr=False)
    loadings: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    entropy: np.ndarray = field(repr=False)
    explained_variance: float
    residuals: np.ndarray = field(repr=False)
    spectrum: SpectrumReport | None = field(default=None, repr=False)

    @property
    def n_entropy_defined(self) -> int:
        return int(np.sum(~np.isnan(self.entropy)))

    @property
    def mean_entropy(self) -> float:
        h = self.entropy[~np.isnan(self.entropy)]
        return float(h.mean()) if h.size else math.nan

    @property
    def std_entropy(self) -> float:
        h = self.entropy[~np.isnan(self.entropy)]
        return float(h.std()) if h.size else math.nan


def _returns(panel) -> np.ndarray:
    X = panel.returns if isinstance(panel, ReturnPanel) else panel
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError("panel must be a T x K matrix")
    return X


def center(panel) -> np.ndarray:
    X = _returns(panel)
    return X - X.mean(axis=0)


def pca_spectrum(panel) -> SpectrumReport:
    """Covariance PCA of a return panel, eigenvalues sorted descending."""
    if isinstance(panel, ReturnPanel) and not panel.stable:
        raise DegenerateInputError("cannot analyse an unstable panel")
    X = center(panel)
    T, K = X.shape
    if T < 2:
        raise DegenerateInputError("need at least two observations")
    if T < K:
        warnings.warn(f"T={T} < K={K}: covariance is rank deficient", RuntimeWarning, stacklevel=2)
    cov = X.T @ X / (T - 1)
    lam, V = np.linalg.eigh(cov)
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.clip(lam, 0.0, None)
    total = lam.sum()
    if not total > 0:
        raise DegenerateInputError("zero-variance panel")
    # deterministic sign: largest-magnitude entry of each component positive
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(K)])
    return SpectrumReport(lam, lam / total, V)


def detect_factors(coupled: SpectrumReport, baseline: SpectrumReport, mode: str = HEAVISIDE) -> int:
    """Count ranks where the coupled spectrum strictly exceeds the noise floor."""
    a, b = coupled.normalized, baseline.normalized
    if a.shape != b.shape:
        raise DimensionError(f"spectra have different sizes: {a.size} vs {b.size}")
    above = a > b
    if mode == HEAVISIDE:
        return int(above.sum())
    if mode == LEADING_RUN:
        misses = np.flatnonzero(~above)
        return int(misses[0]) if misses.size else int(above.size)
    raise ParameterError(f"unknown detection mode {mode!r}")


def mean_spectrum(reports) -> SpectrumReport:
    """Rank-wise mean of sorted normalized spectra."""
    reports = list(reports)
    if not reports:
        raise ParameterError("no spectra to average")
    if len({r.K for r in reports}) != 1:
        raise DimensionError("spectra have different sizes")
    lam = np.mean([r.eigenvalues for r in reports], axis=0)
    phi = np.mean([r.normalized for r in reports], axis=0)
    phi = phi / phi.sum()
    comps = reports[0].components if len(reports) == 1 else np.full((reports[0].K, 0), np.nan)
    return SpectrumReport(lam, phi, comps)


def baseline_spectrum(cfg: SimConfig, net: CouplingNetwork, n_baseline: int = 1,
                      max_retries: int = 10) -> SpectrumReport:
    """Mean spectrum of ``n_baseline`` uncoupled panels shaped like ``cfg``.

    Realization ``i`` uses a seed derived from ``cfg.sim_seed``; an unstable
    realization is redrawn with the next derived seed.
    """
    if n_baseline < 1:
        raise ParameterError("n_baseline must be >= 1")
    reports = []
    for i in range(n_baseline):
        for attempt in range(max_retries + 1):
            seed = derive_seed(cfg.sim_seed, BASELINE, i, attempt)
            panel = simulate_panel(replace(cfg, epsilon=0.0, sim_seed=seed), net)
            if panel.stable:
                reports.append(pca_spectrum(panel))
                break
        else:
            raise DegenerateInputError(
                f"baseline realization {i} unstable after {max_retries} retries")
    return mean_spectrum(reports)


def fit_loadings(panel, factors) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares loadings of centred returns on factor scores.

    Returns ``(loadings, residuals)`` with loadings of shape ``m x K``.
    """
    X = center(panel)
    F = np.asarray(factors, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != X.shape[0]:
        raise DimensionError("factor scores and panel differ in length")
    m = F.shape[1]
    if m < 1:
        raise ParameterError("need at least one factor")
    if np.linalg.matrix_rank(F) < m:
        raise DegenerateInputError("factor matrix is rank deficient")
    B, *_ = np.linalg.lstsq(F, X, rcond=None)
    return B, X - F @ B


def loading_weights(loadings_column) -> np.ndarray:
    """``|beta_m| / sum_m |beta_m|``; all ``nan`` if every loading is zero."""
    b = np.abs(np.asarray(loadings_column, dtype=float))
    s = b.sum()
    if s == 0.0:
        return np.full(b.shape, np.nan)
    return b / s


def loading_entropy(loadings_column) -> float:
    """Normalized Shannon entropy of an asset's absolute loadings, in ``[0, 1]``.

    ``nan`` marks the undefined cases: a single factor or all loadings zero.
    """
    alpha = loading_weights(loadings_column)
    m = alpha.size
    if m <= 1 or np.isnan(alpha).any():
        return math.nan
    nz = alpha[alpha > 0]
    h = -float(np.sum(nz * np.log(nz))) / math.log(m)
    return min(max(h, 0.0), 1.0)


def explained_variance(spectrum: SpectrumReport, m_hat: int) -> float:
    """Share of total variance in the top ``m_hat`` components."""
    if not 0 <= m_hat <= spectrum.K:
        raise ParameterError(f"m_hat must lie in [0, {spectrum.K}]")
    return float(min(spectrum.normalized[:m_hat].sum(), 1.0))


def analyze_panel(panel, baseline: SpectrumReport, mode: str = HEAVISIDE) -> FactorFit:
    """PCA, factor count, loadings, entropy and explained variance of a panel."""
    spec = pca_spectrum(panel)
    m_hat = detect_factors(spec, baseline, mode)
    X = center(panel)
    T, K = X.shape
    if m_hat == 0:
        empty = np.empty((0, K))
        return FactorFit(0, np.empty((T, 0)), empty, empty, np.full(K, np.nan), 0.0, X, spec)
    F = X @ spec.components[:, :m_hat]
    B, resid = fit_loadings(X, F)
    W = np.column_stack([loading_weights(B[:, k]) for k in range(K)])
    H = np.array([loading_entropy(B[:, k]) for k in range(K)])
    return FactorFit(m_hat, F, B, W, H, explained_variance(spec, m_hat), resid, spec)
