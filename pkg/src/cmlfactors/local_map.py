"""Single-asset chaotic map with a hyperbolic-secant stationary law.

One step of the map sends a return ``r`` to a latent uniform variable through
the sech CDF, applies the Bernoulli shift ``u -> u/delta mod 1`` and maps the
result back through the sech quantile function::

    u  = 1/2 + arctan(sinh(gamma (r - r0))) / pi
    u' = u/delta - floor(u/delta)
    r' = r0 + asinh(tan(pi (u' - 1/2))) / gamma

Because the Bernoulli shift (approximately) preserves the uniform law, the
orbit is distributed with density ``(gamma/pi) sech(gamma (r - r0))``: mean
``r0``, variance ``pi^2 / (4 gamma^2)`` and excess kurtosis 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

U_EPS = 1e-15
DEFAULT_R_CAP = 10.0

# sinh overflows past ~710; arctan is already pi/2 to double precision well before that
_X_CLIP = 700.0


@dataclass(frozen=True)
class LocalMapParams:
    """Shape ``gamma``, location ``r0`` and Bernoulli slope ``delta``."""

    gamma: float = 60.0
    r0: float = 0.001
    delta: float = 0.011

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ParameterError(f"gamma must be positive, got {self.gamma!r}")
        if not math.isfinite(self.r0):
            raise ParameterError(f"r0 must be finite, got {self.r0!r}")
        if not (0.0 < self.delta < 1.0):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta!r}")

    @property
    def mean(self) -> float:
        return self.r0

    @property
    def variance(self) -> float:
        return math.pi**2 / (4.0 * self.gamma**2)

    @property
    def std(self) -> float:
        return math.pi / (2.0 * self.gamma)

    @property
    def excess_kurtosis(self) -> float:
        return 2.0


@dataclass(frozen=True)
class MapState:
    """A return together with its latent uniform coordinate."""

    r: float
    u: float

    @classmethod
    def from_return(cls, r: float, params: LocalMapParams) -> "MapState":
        return cls(float(r), float(forward_transform(r, params)))

    @classmethod
    def from_uniform(cls, u: float, params: LocalMapParams) -> "MapState":
        return cls(float(inverse_transform(u, params)), float(u))

    def step(self, params: LocalMapParams) -> "MapState":
        u = clamp_unit(bernoulli_step(self.u, params))
        return MapState(float(inverse_transform(u, params)), float(u))


def sech_pdf(r, params: LocalMapParams):
    """Density ``(gamma/pi) sech(gamma (r - r0))``."""
    x = np.abs(params.gamma * (np.asarray(r, dtype=float) - params.r0))
    # sech(x) = 2 e^{-x} / (1 + e^{-2x}), stable for large |x|
    e = np.exp(-x)
    out = (params.gamma / np.pi) * 2.0 * e / (1.0 + e * e)
    return out if out.ndim else float(out)


def _cdf(r, gamma, r0):
    x = np.clip(gamma * (r - r0), -_X_CLIP, _X_CLIP)
    return 0.5 + np.arctan(np.sinh(x)) / np.pi


def _quantile(u, gamma, r0):
    return r0 + np.arcsinh(np.tan(np.pi * (u - 0.5))) / gamma


def forward_transform(r, params: LocalMapParams):
    """The sech CDF, mapping returns to ``[0, 1]``."""
    out = _cdf(np.asarray(r, dtype=float), params.gamma, params.r0)
    return out if out.ndim else float(out)


def inverse_transform(u, params: LocalMapParams, *, r_cap: float = DEFAULT_R_CAP,
                      return_flag: bool = False):
    """The sech quantile function.

    ``u`` must lie strictly inside ``(0, 1)``. Any non-finite result is
    saturated to ``r0 +/- r_cap``; with ``return_flag=True`` a boolean mask of
    saturated entries is returned alongside.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError("inverse_transform requires 0 < u < 1")
    r = _quantile(u, params.gamma, params.r0)
    saturated = ~np.isfinite(r)
    if np.any(saturated):
        r = np.where(saturated, params.r0 + np.copysign(r_cap, u - 0.5), r)
    if r.ndim == 0:
        r, saturated = float(r), bool(saturated)
    return (r, saturated) if return_flag else r


def bernoulli_step(u, params: LocalMapParams):
    """Bernoulli shift ``u/delta - floor(u/delta)`` on ``[0, 1)``."""
    u = np.asarray(u, dtype=float)
    if np.any(~((u >= 0.0) & (u < 1.0))):
        raise DomainError("bernoulli_step requires 0 <= u < 1")
    v = u / params.delta
    out = v - np.floor(v)
    return out if out.ndim else float(out)


def clamp_unit(u, eps: float = U_EPS):
    """Pull ``u`` into ``[eps, 1 - eps]`` so the quantile stays finite."""
    out = np.clip(np.asarray(u, dtype=float), eps, 1.0 - eps)
    return out if out.ndim else float(out)


def _g(r, gamma, r0, delta, hits=None):
    # vectorised map; parameters broadcast against r. ``hits`` (bool array
    # shaped like the result) accumulates steps whose shift landed on a boundary.
    v = _cdf(r, gamma, r0) / delta
    u = v - np.floor(v)
    if hits is not None:
        hits |= (u < U_EPS) | (u > 1.0 - U_EPS)
    return _quantile(np.clip(u, U_EPS, 1.0 - U_EPS), gamma, r0)


def local_map_step(r, params: LocalMapParams, *, return_flag: bool = False):
    """One application of the local map ``g`` (elementwise on arrays).

    A shifted value within ``U_EPS`` of 0 or 1 is clamped before inversion;
    ``return_flag=True`` also returns a mask of the clamped entries.
    """
    r = np.asarray(r, dtype=float)
    hits = np.zeros(r.shape, dtype=bool)
    out = _g(r, params.gamma, params.r0, params.delta, hits)
    if out.ndim == 0:
        out, hits = float(out), bool(hits)
    return (out, hits) if return_flag else out


def initial_returns(u, gamma, r0):
    """Map uniform draws (possibly 0) to returns on the stationary law."""
    return _quantile(np.clip(u, U_EPS, 1.0 - U_EPS), gamma, r0)


def orbit(params: LocalMapParams, T: int, *, r_init: float | None = None,
          seed: int | None = None, burn_in: int = 0) -> np.ndarray:
    """Uncoupled single-asset orbit of length ``T``.

    The starting point is ``r_init`` or, if omitted, a draw from the stationary
    law using ``seed``. The first recorded value is the state after
    ``burn_in + 1`` steps.
    """
    if T < 1 or burn_in < 0:
        raise ParameterError("T must be >= 1 and burn_in >= 0")
    if r_init is None:
        u0 = np.random.default_rng(seed).uniform()
        r = float(initial_returns(u0, params.gamma, params.r0))
    else:
        r = float(r_init)
    g, r0, d = params.gamma, params.r0, params.delta
    lo, hi = U_EPS, 1.0 - U_EPS
    pi, atan, sinh, asinh, tan, floor = math.pi, math.atan, math.sinh, math.asinh, math.tan, math.floor
    out = np.empty(T)
    # scalar loop: an order of magnitude faster than numpy on length-1 arrays
    for t in range(burn_in + T):
        x = g * (r - r0)
        if x > _X_CLIP:
            x = _X_CLIP
        elif x < -_X_CLIP:
            x = -_X_CLIP
        v = (0.5 + atan(sinh(x)) / pi) / d
        u = v - floor(v)
        if u < lo:
            u = lo
        elif u > hi:
            u = hi
        r = r0 + asinh(tan(pi * (u - 0.5))) / g
        if t >= burn_in:
            out[t - burn_in] = r
    return out


def orbits(gamma, r0, delta, T: int, r_init, burn_in: int = 0, *,
           return_boundary_hits: bool = False):
    """Many independent uncoupled orbits advanced in lockstep.

    ``gamma``, ``r0``, ``delta`` and ``r_init`` broadcast to a common shape
    ``(P,)``; the result has shape ``(T, P)``. With ``return_boundary_hits``
    a ``(P,)`` mask of orbits whose shift ever hit ``u = 0`` or ``u = 1``
    (within ``U_EPS``) is returned as well.
    """
    gamma, r0, delta, r = np.broadcast_arrays(
        np.asarray(gamma, float), np.asarray(r0, float), np.asarray(delta, float),
        np.asarray(r_init, float))
    r = r.copy()
    hits = np.zeros(r.shape, dtype=bool)
    out = np.empty((T,) + r.shape)
    for t in range(burn_in + T):
        r = _g(r, gamma, r0, delta, hits)
        if t >= burn_in:
            out[t - burn_in] = r
    return (out, hits) if return_boundary_hits else out
