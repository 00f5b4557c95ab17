"""Ensemble studies: the (M, epsilon) sweep, the binary model for the spread of
the factor count, the calibration grid and estimator sampling distributions."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from . import seeding
from .diagnostics import durbin_watson, ljung_box, mse, sample_moments
from .errors import DomainError, ParameterError
from .factor_analysis import HEAVISIDE, FactorFit, analyze_panel, baseline_spectrum
from .local_map import DEFAULT_R_CAP, LocalMapParams, initial_returns, orbits
from .network import NetworkParams, build_coupling
from .simulator import ReturnPanel, SimConfig, simulate_panel

log = logging.getLogger(__name__)


def index_grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive arithmetic grid built from integer indices (no drift)."""
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise ParameterError(f"empty grid {start}..{stop} by {step}")
    return tuple(round(start + i * step, 12) for i in range(n))


@dataclass(frozen=True)
class SweepConfig:
    m_values: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    epsilon_grid: tuple[float, ...] = field(default_factory=lambda: index_grid(0.2, 0.7, 0.01))
    n_per_cluster: int = 10
    reps: int = 200
    T: int = 251
    base_seed: int = 0
    n_baseline: int = 1
    burn_in: int = 100
    map: LocalMapParams = field(default_factory=LocalMapParams)
    r_cap: float = DEFAULT_R_CAP
    fix_network: bool = False
    mode: str = HEAVISIDE

    def __post_init__(self):
        if not self.m_values or not self.epsilon_grid:
            raise ParameterError("m_values and epsilon_grid must be non-empty")
        if self.reps < 1:
            raise ParameterError("reps must be >= 1")
        if any(not 0.0 <= e <= 1.0 for e in self.epsilon_grid):
            raise ParameterError("epsilon values must lie in [0, 1]")
        if any(m < 1 for m in self.m_values):
            raise ParameterError("m values must be positive")

    def tasks(self) -> list[tuple[int, int, int]]:
        """All ``(m_index, epsilon_index, rep)`` triples in canonical order."""
        return [(i, j, r) for i in range(len(self.m_values))
                for j in range(len(self.epsilon_grid)) for r in range(self.reps)]

    def task_id(self, task: tuple[int, int, int]) -> str:
        i, j, r = task
        return f"m{self.m_values[i]}-e{self.epsilon_grid[j]:.4f}-r{r}"


@dataclass(frozen=True)
class SweepRecord:
    m: int
    epsilon: float
    rep: int
    m_hat: int
    mean_entropy: float
    std_entropy: float
    n_entropy_defined: int
    explained_variance: float
    stable: bool
    net_seed: int
    sim_seed: int

    @property
    def task_id(self) -> str:
        return f"m{self.m}-e{self.epsilon:.4f}-r{self.rep}"


@dataclass(frozen=True)
class EnsembleSummary:
    m: int
    epsilon: float
    mu_mhat: float
    sigma_mhat: float
    mu_H: float
    sigma_H: float
    mean_sigma_f2: float
    n_stable: int
    n_entropy_reps: int


def epsilon_key(epsilon: float) -> int:
    return int(round(epsilon * 1_000_000))


def record_seeds(cfg: SweepConfig, task: tuple[int, int, int]) -> tuple[int, int]:
    """Network and initial-condition seeds of one task.

    Keys use the values of ``m`` and ``epsilon`` (not their grid positions) so
    a record can be rerun from any sub-grid and reproduce exactly.
    """
    i, j, r = task
    m, e = cfg.m_values[i], epsilon_key(cfg.epsilon_grid[j])
    net_key = (m, e, 0) if cfg.fix_network else (m, e, r)
    net_seed = seeding.derive_seed(cfg.base_seed, *net_key, seeding.NETWORK)
    sim_seed = seeding.derive_seed(cfg.base_seed, m, e, r, seeding.INITIAL)
    return net_seed, sim_seed


def record_config_hash(cfg: SweepConfig) -> str:
    """Digest of the settings that determine each record's values.

    Grids and ``reps`` are excluded: they choose which records exist, not
    what any one of them contains.
    """
    d = {k: v for k, v in asdict(cfg).items() if k not in ("m_values", "epsilon_grid", "reps")}
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.blake2b(blob, digest_size=8).hexdigest()


def fit_task(cfg: SweepConfig, task: tuple[int, int, int]) -> tuple[ReturnPanel, FactorFit | None]:
    """Simulate one ``(m, epsilon, rep)`` cell and analyse it if stable."""
    i, j, r = task
    net_seed, sim_seed = record_seeds(cfg, task)
    net = build_coupling(NetworkParams(cfg.m_values[i], cfg.n_per_cluster, net_seed))
    sim = SimConfig(cfg.map, net.params, cfg.epsilon_grid[j], cfg.T, cfg.burn_in,
                    sim_seed, cfg.r_cap)
    panel = simulate_panel(sim, net)
    if not panel.stable:
        return panel, None
    base = baseline_spectrum(sim, net, cfg.n_baseline)
    return panel, analyze_panel(panel, base, cfg.mode)


def run_record(cfg: SweepConfig, task: tuple[int, int, int]) -> SweepRecord:
    """Simulate and analyse one cell; unstable cells carry ``m_hat = -1`` and ``nan`` metrics."""
    i, j, r = task
    m, eps = cfg.m_values[i], cfg.epsilon_grid[j]
    net_seed, sim_seed = record_seeds(cfg, task)
    _, fit = fit_task(cfg, task)
    if fit is None:
        return SweepRecord(m, eps, r, -1, math.nan, math.nan, 0, math.nan, False, net_seed, sim_seed)
    return SweepRecord(m, eps, r, fit.m_hat, fit.mean_entropy, fit.std_entropy,
                       fit.n_entropy_defined, fit.explained_variance, True, net_seed, sim_seed)


def _run_chunk(args):
    cfg, tasks = args
    return [run_record(cfg, t) for t in tasks]


def summarize(cfg: SweepConfig, records: Iterable[SweepRecord]) -> list[EnsembleSummary]:
    """Per-(m, epsilon) statistics over stable reps.

    Standard deviations are population (1/n). Entropy statistics are averaged
    over reps that have at least one defined per-asset entropy.
    """
    cells: dict[tuple[int, float], list[SweepRecord]] = {}
    for rec in records:
        cells.setdefault((rec.m, rec.epsilon), []).append(rec)
    out = []
    for m in cfg.m_values:
        for eps in cfg.epsilon_grid:
            recs = sorted(cells.get((m, eps), []), key=lambda r: r.rep)
            ok = [r for r in recs if r.stable]
            mh = np.array([r.m_hat for r in ok], dtype=float)
            ent = [r for r in ok if r.n_entropy_defined > 0]
            nan = math.nan
            out.append(EnsembleSummary(
                m, eps,
                float(mh.mean()) if ok else nan,
                float(mh.std()) if ok else nan,
                float(np.mean([r.mean_entropy for r in ent])) if ent else nan,
                float(np.mean([r.std_entropy for r in ent])) if ent else nan,
                float(np.mean([r.explained_variance for r in ok])) if ok else nan,
                len(ok), len(ent)))
    return out


def run_sweep(cfg: SweepConfig, *, workers: int = 1, skip: Iterable[str] = (),
              on_record: Callable[[SweepRecord], None] | None = None,
              chunk_size: int = 16) -> tuple[list[SweepRecord], list[EnsembleSummary]]:
    """Run every task not listed in ``skip`` and summarise.

    The returned records cover only tasks run here and are sorted by task;
    callers that resume a sweep should merge them with previously stored
    records before calling :func:`summarize`.
    """
    done = set(skip)
    todo = [t for t in cfg.tasks() if cfg.task_id(t) not in done]
    log.info("sweep: %d tasks (%d skipped)", len(todo), len(cfg.tasks()) - len(todo))
    records: list[SweepRecord] = []
    if workers <= 1:
        for t in todo:
            rec = run_record(cfg, t)
            records.append(rec)
            if on_record:
                on_record(rec)
    else:
        chunks = [todo[k:k + chunk_size] for k in range(0, len(todo), chunk_size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for batch in pool.map(_run_chunk, [(cfg, c) for c in chunks]):
                for rec in batch:
                    records.append(rec)
                    if on_record:
                        on_record(rec)
    order = {cfg.task_id(t): n for n, t in enumerate(cfg.tasks())}
    records.sort(key=lambda r: order[r.task_id])
    return records, summarize(cfg, records)


def binary_model_sigma(mu: float, m: int) -> float:
    """Std of a two-point law on ``{m, m+1}`` with mean ``mu``."""
    if not (m <= mu <= m + 1):
        raise DomainError(f"mu={mu} outside [{m}, {m + 1}]")
    return math.sqrt(max((mu - m) * (m + 1 - mu), 0.0))


def check_binary_model(records: Sequence[SweepRecord], m: int | None = None) -> float:
    """``|sigma_observed - binary_model_sigma(mu_observed, m)|`` over stable records.

    When the mean falls outside ``[m, m+1]`` the model value is taken as 0.
    """
    mh = np.array([r.m_hat for r in records if r.stable], dtype=float)
    if mh.size < 2:
        raise ParameterError("need at least two stable records")
    if m is None:
        m = records[0].m
    mu, sigma = float(mh.mean()), float(mh.std())
    model = binary_model_sigma(mu, m) if m <= mu <= m + 1 else 0.0
    return abs(sigma - model)


# calibration ---------------------------------------------------------------

DEFAULT_DELTAS = index_grid(0.005, 0.02, 0.001) + (0.25, 0.03, 0.04, 0.05, 0.75, 0.1)


@dataclass(frozen=True)
class CalibrationGrid:
    r0_values: tuple[float, ...] = field(default_factory=lambda: index_grid(-0.02, 0.02, 0.001))
    gamma_values: tuple[float, ...] = field(default_factory=lambda: index_grid(5, 100, 1))
    delta_values: tuple[float, ...] = DEFAULT_DELTAS

    def __post_init__(self):
        if not (self.r0_values and self.gamma_values and self.delta_values):
            raise ParameterError("calibration grid axes must be non-empty")

    def stride(self, k: int) -> "CalibrationGrid":
        """Keep every ``k``-th gamma value, starting with the first."""
        if k < 1:
            raise ParameterError("stride must be >= 1")
        return replace(self, gamma_values=self.gamma_values[::k])

    def __len__(self) -> int:
        return len(self.r0_values) * len(self.gamma_values) * len(self.delta_values)

    def triples(self) -> np.ndarray:
        """``(P, 3)`` array of (r0, gamma, delta) in r0-major order."""
        r0, g, d = np.meshgrid(self.r0_values, self.gamma_values, self.delta_values, indexing="ij")
        return np.column_stack([r0.ravel(), g.ravel(), d.ravel()])


@dataclass(frozen=True)
class CalibrationRow:
    r0: float
    gamma: float
    delta: float
    mse: float
    lb_pvalue: float
    dw: float
    complete: bool


def run_calibration(empirical, grid: CalibrationGrid, seed: int, *, lags: int = 10,
                    r_cap: float = DEFAULT_R_CAP, batch: int = 4096) -> list[CalibrationRow]:
    """Compare one uncoupled orbit per grid point against an empirical series.

    Every grid point starts from the same uniform draw (shared seed) pushed
    through its own quantile function. An orbit is incomplete, with ``nan``
    metrics, if it leaves ``|r| <= r_cap``, becomes non-finite, or has its
    Bernoulli shift land on ``u = 0`` or ``u = 1``, where the quantile
    function is infinite and the series cannot be continued without clamping.
    """
    R = np.asarray(empirical, dtype=float)
    T = R.size
    if T < 2:
        raise ParameterError("empirical series needs at least two points")
    lags = min(lags, T - 1)
    u0 = np.random.default_rng(seed).uniform()
    P = grid.triples()
    rows = []
    for s in range(0, len(P), batch):
        r0, g, d = P[s:s + batch].T
        with np.errstate(over="ignore", invalid="ignore"):
            X, hits = orbits(g, r0, d, T, initial_returns(u0, g, r0), return_boundary_hits=True)
        ok = np.all(np.isfinite(X) & (np.abs(X) <= r_cap), axis=0) & ~hits
        for k in range(X.shape[1]):
            x = X[:, k]
            if ok[k] and np.ptp(x) > 0:
                rows.append(CalibrationRow(float(r0[k]), float(g[k]), float(d[k]), mse(x, R),
                                           ljung_box(x, lags)[1], durbin_watson(x), True))
            elif ok[k]:
                # constant orbit: autocorrelation undefined
                rows.append(CalibrationRow(float(r0[k]), float(g[k]), float(d[k]), mse(x, R),
                                           math.nan, math.nan, True))
            else:
                rows.append(CalibrationRow(float(r0[k]), float(g[k]), float(d[k]),
                                           math.nan, math.nan, math.nan, False))
    return rows


def calibration_summary(rows: Sequence[CalibrationRow], threshold: float = 0.0042) -> dict:
    complete = [r for r in rows if r.complete]
    n = len(complete)
    good = sum(r.mse <= threshold for r in complete)
    white = sum(r.lb_pvalue >= 0.05 and 1.75 < r.dw < 2.25 for r in complete)
    return {
        "n_series": len(rows),
        "n_complete": n,
        "mse_threshold": threshold,
        "frac_mse_below": good / n if n else math.nan,
        "frac_no_autocorrelation": white / n if n else math.nan,
    }


# estimator sampling distributions --------------------------------------------

@dataclass(frozen=True, eq=False)
class EstimatorSamples:
    mean: np.ndarray
    std: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray
    T: int

    def mean_spread_ratio(self, sigma: float | None = None) -> float:
        """Empirical std of the sample means over ``sigma / sqrt(T)``.

        ``sigma`` defaults to the pooled estimate of the return std.
        """
        if sigma is None:
            sigma = float(np.sqrt(np.mean(self.std**2)))
        return float(np.std(self.mean, ddof=1)) / (sigma / math.sqrt(self.T))


def estimator_sampling_study(params: LocalMapParams, n_series: int, T: int, seed: int,
                             burn_in: int = 0) -> EstimatorSamples:
    """Sample moments of ``n_series`` independent uncoupled orbits of length ``T``."""
    if n_series < 100:
        raise ParameterError("n_series must be >= 100")
    if T < 4:
        raise ParameterError("T must be >= 4")
    rng = np.random.default_rng(seed)
    r_init = initial_returns(rng.uniform(size=n_series), params.gamma, params.r0)
    X = orbits(params.gamma, params.r0, params.delta, T, r_init, burn_in)
    mom = np.array([sample_moments(X[:, k]) for k in range(n_series)])
    return EstimatorSamples(*mom.T.copy(), T=T)
