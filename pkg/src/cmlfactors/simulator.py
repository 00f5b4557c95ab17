"""Iteration of the coupled map ``r' = (1 - eps) g(r) + (eps/N) C g(r)``."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, DivergenceError, DomainError, ParameterError
from .local_map import DEFAULT_R_CAP, LocalMapParams, _g, initial_returns
from .network import CouplingNetwork, NetworkParams


@dataclass(frozen=True)
class SimConfig:
    map: LocalMapParams
    net: NetworkParams
    epsilon: float
    T: int = 251
    burn_in: int = 100
    sim_seed: int = 0
    r_cap: float = DEFAULT_R_CAP

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ParameterError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        if int(self.T) != self.T or self.T < 2:
            raise ParameterError(f"T must be an integer >= 2, got {self.T!r}")
        if int(self.burn_in) != self.burn_in or self.burn_in < 0:
            raise ParameterError(f"burn_in must be a non-negative integer, got {self.burn_in!r}")
        if not (self.r_cap > 0):
            raise ParameterError("r_cap must be positive")
        if self.sim_seed < 0:
            raise ParameterError("sim_seed must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        d["map"] = LocalMapParams(**d["map"])
        d["net"] = NetworkParams(**d["net"])
        return cls(**d)

    def config_hash(self) -> int:
        """64-bit digest of the canonical JSON form of the configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big")


@dataclass(eq=False)
class ReturnPanel:
    """``T x K`` returns; truncated to ``truncated_at`` rows when unstable."""

    returns: np.ndarray = field(repr=False)
    stable: bool = True
    truncated_at: int | None = None
    config_hash: int = 0
    config: SimConfig | None = None

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def K(self) -> int:
        return self.returns.shape[1]


def step_system(r: np.ndarray, cfg: SimConfig, net: CouplingNetwork) -> np.ndarray:
    """Advance the coupled system by one step."""
    r = np.asarray(r, dtype=float)
    if r.shape != (net.K,):
        raise DimensionError(f"state has shape {r.shape}, network expects ({net.K},)")
    if not np.all(np.abs(r) <= cfg.r_cap):
        raise DomainError(f"state exceeds r_cap={cfg.r_cap}")
    m = cfg.map
    y = _g(r, m.gamma, m.r0, m.delta)
    out = (1.0 - cfg.epsilon) * y + (cfg.epsilon / net.params.N) * (net.C @ y)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise DivergenceError(f"non-finite state at asset {bad[0]}", index=int(bad[0]))
    return out


def simulate_panel(cfg: SimConfig, net: CouplingNetwork) -> ReturnPanel:
    """Simulate ``burn_in + T`` steps from stationary initial conditions.

    Divergence (non-finite value or ``|r| > r_cap``) is not an error: the
    panel is returned with ``stable=False`` and the rows recorded so far.
    """
    K = net.K
    if cfg.net.K != K:
        raise DimensionError(f"config K={cfg.net.K} but network K={K}")
    m = cfg.map
    rng = np.random.default_rng(cfg.sim_seed)
    r = initial_returns(rng.uniform(size=K), m.gamma, m.r0)
    a, b = 1.0 - cfg.epsilon, cfg.epsilon / net.params.N
    C = net.C
    out = np.empty((cfg.T, K))
    truncated_at = None
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(cfg.burn_in + cfg.T):
            y = _g(r, m.gamma, m.r0, m.delta)
            r = a * y + b * (C @ y)
            if not (np.all(np.isfinite(r)) and np.max(np.abs(r)) <= cfg.r_cap):
                truncated_at = max(t - cfg.burn_in, 0)
                break
            if t >= cfg.burn_in:
                out[t - cfg.burn_in] = r
    if truncated_at is not None:
        out = out[:truncated_at].copy()
    return ReturnPanel(out, truncated_at is None, truncated_at, cfg.config_hash(), cfg)


def returns_to_prices(returns, p0: float = 1.0) -> np.ndarray:
    """Compound simple returns into a price path starting at ``p0``."""
    returns = np.asarray(returns, dtype=float)
    if not (p0 > 0 and math.isfinite(p0)):
        raise DomainError("p0 must be positive")
    if np.any(returns <= -1.0):
        raise DomainError("returns must exceed -1")
    prices = np.empty(returns.shape[0] + 1)
    prices[0] = p0
    prices[1:] = p0 * np.cumprod(1.0 + returns)
    return prices
