"""Command-line entry point.

Subcommands ``simulate``, ``analyze``, ``sweep``, ``calibrate`` and ``moments``
each write their results plus a ``manifest.json`` into ``--out``.

Exit codes: 0 success, 2 bad configuration or input, 3 unwritable output.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, seeding
from .errors import CMLError
from .experiments import (CalibrationGrid, DEFAULT_DELTAS, SweepConfig, SweepRecord,
                          calibration_summary, estimator_sampling_study, index_grid,
                          record_config_hash, run_calibration, run_sweep, summarize)
from .factor_analysis import (HEAVISIDE, LEADING_RUN, SpectrumReport, analyze_panel,
                              baseline_spectrum, pca_spectrum)
from .fileio import (InputError, RunManifest, fmt, jsonable, load_config, read_empirical_csv,
                     read_panel_csv, read_table, sample_returns_path, write_json,
                     write_panel_csv, write_table)
from .local_map import LocalMapParams
from .network import NetworkParams, build_coupling, export_network
from .simulator import ReturnPanel, SimConfig, simulate_panel

log = logging.getLogger("cmlfactors")

EXIT_INPUT = 2
EXIT_OUTPUT = 3

RECORD_COLUMNS = ("task_id", "m", "epsilon", "rep", "m_hat", "mean_entropy", "std_entropy",
                  "n_entropy_defined", "explained_variance", "stable", "net_seed", "sim_seed")
SUMMARY_COLUMNS = ("m", "epsilon", "mu_mhat", "sigma_mhat", "mu_H", "sigma_H",
                   "mean_sigma_f2", "n_stable", "n_entropy_reps")
CALIBRATION_COLUMNS = ("r0", "gamma", "delta", "mse", "lb_pvalue", "dw", "complete")


class OutputError(CMLError, OSError):
    pass


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise OutputError(f"output directory {out} is not writable: {e.strerror}") from e
    return out


def _config(path) -> dict:
    return load_config(path) if path else {}


def _map_params(cfg: dict) -> LocalMapParams:
    return LocalMapParams(**cfg.get("map", {}))


def sim_config_from(cfg: dict, seed: int | None) -> tuple[SimConfig, int]:
    """Build a simulation config; network and initial seeds derive from the base seed."""
    net = cfg.get("network", {})
    sim = dict(cfg.get("simulation", {}))
    base = seed if seed is not None else sim.pop("seed", 0)
    sim.pop("seed", None)
    params = NetworkParams(net.get("M", 3), net.get("N", 10),
                           seeding.derive_seed(base, seeding.NETWORK))
    sc = SimConfig(_map_params(cfg), params, sim.get("epsilon", 0.45), sim.get("T", 251),
                   sim.get("burn_in", 100), seeding.derive_seed(base, seeding.INITIAL),
                   sim.get("r_cap", 10.0))
    return sc, base


# simulate ------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args.config)
    sc, base = sim_config_from(cfg, args.seed)
    out = _prepare_out(args.out)
    net = build_coupling(sc.net)
    panel = simulate_panel(sc, net)
    write_panel_csv(out / "panel.csv", panel.returns)
    write_json(out / "panel.json", jsonable({
        "config": sc.to_dict(), "base_seed": base, "net_seed": sc.net.seed,
        "sim_seed": sc.sim_seed, "stable": panel.stable, "truncated_at": panel.truncated_at,
        "config_hash": panel.config_hash, "T": panel.T, "K": panel.K}))
    outputs = ["panel.csv", "panel.json"]
    if args.export_network:
        outputs += [p.name for p in export_network(net, out)]
    RunManifest("simulate", args.config, base, str(out), outputs=outputs,
                settings={"config": sc.to_dict()}).write(out)
    state = "stable" if panel.stable else f"unstable (truncated at {panel.truncated_at})"
    print(f"wrote {panel.T}x{panel.K} panel to {out / 'panel.csv'}: {state}")
    return 0


# analyze -------------------------------------------------------------------

def _sidecar(panel_path: Path) -> dict | None:
    side = panel_path.with_suffix(".json")
    if side.exists():
        try:
            return json.loads(side.read_text())
        except ValueError as e:
            raise InputError(f"{side}: {e}") from e
    return None


def _baseline(args, cfg: dict, X: np.ndarray, side: dict | None) -> SpectrumReport:
    T, K = X.shape
    spec = args.baseline
    if spec == "uniform":
        return SpectrumReport.uniform(K)
    if spec == "simulated":
        if side is not None:
            sc = SimConfig.from_dict(side["config"])
            sc = replace(sc, T=T)
        else:
            if K < 2:
                raise InputError("simulated baseline needs at least two assets")
            base = args.seed if args.seed is not None else 0
            sc = SimConfig(_map_params(cfg), NetworkParams(1, K), 0.0, T,
                           cfg.get("simulation", {}).get("burn_in", 100),
                           seeding.derive_seed(base, seeding.INITIAL))
        if sc.net.K != K:
            raise InputError(f"sidecar describes K={sc.net.K} but panel has K={K}")
        n = args.n_baseline or cfg.get("analysis", {}).get("n_baseline", 1)
        return baseline_spectrum(sc, build_coupling(sc.net), n)
    path = Path(spec)
    if not path.exists():
        raise InputError(f"baseline must be 'uniform', 'simulated' or a panel CSV; got {spec!r}")
    B = read_panel_csv(path)
    if B.shape[1] != K:
        raise InputError(f"baseline panel has K={B.shape[1]}, expected {K}")
    return pca_spectrum(B)


def cmd_analyze(args) -> int:
    cfg = _config(args.config)
    panel_path = Path(args.panel)
    X = read_panel_csv(panel_path)
    side = _sidecar(panel_path)
    out = _prepare_out(args.out)
    base = _baseline(args, cfg, X, side)
    mode = args.mode or cfg.get("analysis", {}).get("mode", HEAVISIDE)
    fit = analyze_panel(ReturnPanel(X), base, mode)
    report = {
        "schema_version": 1,
        "T": X.shape[0], "K": X.shape[1],
        "m_hat": fit.m_hat,
        "explained_variance": fit.explained_variance,
        "entropy": fit.entropy,
        "mean_entropy": fit.mean_entropy,
        "std_entropy": fit.std_entropy,
        "n_entropy_defined": fit.n_entropy_defined,
        "loadings": fit.loadings,
        "weights": fit.weights,
        "normalized_spectrum": fit.spectrum.normalized,
        "baseline_spectrum": base.normalized,
        "baseline": args.baseline,
        "mode": mode,
    }
    write_json(out / "factor_fit.json", jsonable(report))
    write_table(out / "factors.csv", ["t"] + [f"f_{m}" for m in range(fit.m_hat)],
                ([t, *row] for t, row in enumerate(fit.factors)))
    seed = args.seed if args.seed is not None else (side or {}).get("base_seed", 0)
    RunManifest("analyze", args.config, seed, str(out),
                outputs=["factor_fit.json", "factors.csv"],
                settings={"panel": str(panel_path), "baseline": args.baseline, "mode": mode}).write(out)
    print(f"m_hat={fit.m_hat} explained_variance={fit.explained_variance:.6f} "
          f"mean_entropy={fit.mean_entropy:.4f}")
    return 0


# sweep ---------------------------------------------------------------------

def _parse_subsets(items) -> dict[str, list[float]]:
    subsets: dict[str, list[float]] = {}
    for item in items or []:
        key, sep, vals = item.partition("=")
        key = key.strip().lower()
        if not sep or key not in ("m", "eps", "epsilon"):
            raise InputError(f"bad --subset {item!r}; use m=3 or eps=0.45[,0.5]")
        try:
            subsets.setdefault("eps" if key != "m" else "m", []).extend(
                float(v) for v in vals.split(",") if v.strip())
        except ValueError as e:
            raise InputError(f"bad --subset {item!r}") from e
    return subsets


def sweep_config_from(cfg: dict, args) -> SweepConfig:
    s = cfg.get("sweep", {})
    if "epsilon_values" in s:
        grid = tuple(s["epsilon_values"])
    else:
        grid = index_grid(s.get("epsilon_min", 0.2), s.get("epsilon_max", 0.7),
                          s.get("epsilon_step", 0.01))
    m_values = tuple(s.get("m_values", (1, 2, 3, 4, 5, 6)))
    subsets = _parse_subsets(args.subset)
    if "m" in subsets:
        want = {int(v) for v in subsets["m"]}
        m_values = tuple(m for m in m_values if m in want) or tuple(sorted(want))
    if "eps" in subsets:
        want = subsets["eps"]
        picked = tuple(e for e in grid if any(abs(e - w) < 1e-9 for w in want))
        grid = picked if len(picked) == len(want) else tuple(sorted(round(w, 12) for w in want))
    seed = args.seed if args.seed is not None else s.get("seed", 0)
    return SweepConfig(
        m_values=m_values, epsilon_grid=grid, n_per_cluster=s.get("n_per_cluster", 10),
        reps=args.reps or s.get("reps", 200), T=s.get("T", 251), base_seed=seed,
        n_baseline=s.get("n_baseline", 1), burn_in=s.get("burn_in", 100),
        map=_map_params(cfg), r_cap=s.get("r_cap", 10.0),
        fix_network=s.get("fix_network", False), mode=s.get("mode", HEAVISIDE))


def _record_row(r: SweepRecord):
    return (r.task_id, r.m, r.epsilon, r.rep, r.m_hat, r.mean_entropy, r.std_entropy,
            r.n_entropy_defined, r.explained_variance, r.stable, r.net_seed, r.sim_seed)


def _row_record(row: list[str]) -> SweepRecord:
    d = dict(zip(RECORD_COLUMNS, row))
    return SweepRecord(int(d["m"]), float(d["epsilon"]), int(d["rep"]), int(d["m_hat"]),
                       float(d["mean_entropy"]), float(d["std_entropy"]),
                       int(d["n_entropy_defined"]), float(d["explained_variance"]),
                       d["stable"] == "true", int(d["net_seed"]), int(d["sim_seed"]))


def _records_comment(digest: str) -> str:
    return f"sweep records; record_config={digest}; columns: " + ",".join(RECORD_COLUMNS)


def load_existing_records(path: Path, digest: str) -> list[SweepRecord]:
    if not path.exists():
        return []
    comments, header, rows = read_table(path)
    if tuple(header) != RECORD_COLUMNS:
        raise InputError(f"{path}: unexpected columns, refusing to resume")
    tag = f"record_config={digest}"
    if not any(tag in c for c in comments):
        raise InputError(f"{path} was produced with different settings; use --fresh or another --out")
    recs = {}
    for row in rows:
        try:
            rec = _row_record(row)
        except (ValueError, KeyError):
            continue
        recs[rec.task_id] = rec
    return list(recs.values())


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    sc = sweep_config_from(cfg, args)
    out = _prepare_out(args.out)
    rec_path = out / "sweep_records.csv"
    digest = record_config_hash(sc)
    if args.fresh and rec_path.exists():
        rec_path.unlink()
    existing = load_existing_records(rec_path, digest)
    log.info("resuming with %d stored records", len(existing))
    # rewrite the stored records cleanly, then append new ones as they finish
    write_table(rec_path, RECORD_COLUMNS, (_record_row(r) for r in existing),
                comment=_records_comment(digest))
    with open(rec_path, "a", newline="") as fh:
        def on_record(rec):
            fh.write(",".join(fmt(v) if not isinstance(v, str) else v for v in _record_row(rec)) + "\n")
            fh.flush()
        new, _ = run_sweep(sc, workers=args.workers, skip=[r.task_id for r in existing],
                           on_record=on_record)
    allrecs = {r.task_id: r for r in existing}
    allrecs.update((r.task_id, r) for r in new)
    ordered = sorted(allrecs.values(), key=lambda r: (r.m, r.epsilon, r.rep))
    write_table(rec_path, RECORD_COLUMNS, (_record_row(r) for r in ordered),
                comment=_records_comment(digest))
    summaries = summarize(sc, ordered)
    write_table(out / "sweep_summary.csv", SUMMARY_COLUMNS,
                ((s.m, s.epsilon, s.mu_mhat, s.sigma_mhat, s.mu_H, s.sigma_H, s.mean_sigma_f2,
                  s.n_stable, s.n_entropy_reps) for s in summaries),
                comment="sweep summary per (m, epsilon); population std over stable reps; "
                        "columns: " + ",".join(SUMMARY_COLUMNS))
    RunManifest("sweep", args.config, sc.base_seed, str(out),
                outputs=["sweep_records.csv", "sweep_summary.csv"],
                settings={"sweep": sc, "workers": args.workers, "resumed": len(existing),
                          "record_config": digest}).write(out)
    print(f"{len(new)} new records, {len(existing)} reused; {len(summaries)} summary rows")
    return 0


# calibrate -----------------------------------------------------------------

def calibration_grid_from(cfg: dict) -> CalibrationGrid:
    c = cfg.get("calibration", {})
    return CalibrationGrid(
        index_grid(c.get("r0_min", -0.02), c.get("r0_max", 0.02), c.get("r0_step", 0.001)),
        index_grid(c.get("gamma_min", 5), c.get("gamma_max", 100), c.get("gamma_step", 1)),
        tuple(c.get("delta_values", DEFAULT_DELTAS)))


def cmd_calibrate(args) -> int:
    cfg = _config(args.config)
    c = cfg.get("calibration", {})
    path = Path(args.empirical) if args.empirical else sample_returns_path()
    _, R = read_empirical_csv(path)
    grid = calibration_grid_from(cfg).stride(args.grid_stride)
    seed = args.seed if args.seed is not None else c.get("seed", 0)
    out = _prepare_out(args.out)
    rows = run_calibration(R, grid, seed, lags=c.get("lags", 10), r_cap=c.get("r_cap", 10.0))
    write_table(out / "calibration.csv", CALIBRATION_COLUMNS,
                ((r.r0, r.gamma, r.delta, r.mse, r.lb_pvalue, r.dw, r.complete) for r in rows))
    summary = calibration_summary(rows, c.get("mse_threshold", 0.0042))
    RunManifest("calibrate", args.config, seed, str(out), outputs=["calibration.csv"],
                settings={"empirical": str(path), "grid_stride": args.grid_stride,
                          "grid_size": len(grid), "summary": summary}).write(out)
    print(f"{summary['n_complete']}/{summary['n_series']} complete series; "
          f"fraction with mse <= {summary['mse_threshold']}: {summary['frac_mse_below']:.4f}; "
          f"fraction without autocorrelation: {summary['frac_no_autocorrelation']:.4f}")
    return 0


# moments -------------------------------------------------------------------

def cmd_moments(args) -> int:
    cfg = _config(args.config)
    c = cfg.get("moments", {})
    params = _map_params(cfg)
    seed = args.seed if args.seed is not None else c.get("seed", 0)
    n = args.n_series or c.get("n_series", 1000)
    T = args.length or c.get("T", 251)
    out = _prepare_out(args.out)
    est = estimator_sampling_study(params, n, T, seed, c.get("burn_in", 0))
    write_table(out / "moments.csv", ("series", "mean", "std", "skewness", "excess_kurtosis"),
                ((k, est.mean[k], est.std[k], est.skewness[k], est.excess_kurtosis[k])
                 for k in range(n)))
    summary = {
        "median_mean": float(np.median(est.mean)),
        "median_std": float(np.median(est.std)),
        "median_skewness": float(np.nanmedian(est.skewness)),
        "median_excess_kurtosis": float(np.nanmedian(est.excess_kurtosis)),
        "theoretical_std": params.std,
        "mean_spread_ratio": est.mean_spread_ratio(),
    }
    RunManifest("moments", args.config, seed, str(out), outputs=["moments.csv"],
                settings={"map": params, "n_series": n, "T": T, "summary": summary}).write(out)
    print(" ".join(f"{k}={v:.6g}" for k, v in summary.items()))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--workers", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cmlfactors", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate one return panel")
    s.add_argument("config", nargs="?")
    s.add_argument("--export-network", action="store_true", help="also write L, Q, C as CSV")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", parents=[common], help="factor analysis of a panel CSV")
    a.add_argument("panel")
    a.add_argument("--config")
    a.add_argument("--baseline", default="simulated",
                   help="'uniform', 'simulated' (default) or a baseline panel CSV")
    a.add_argument("--n-baseline", type=int)
    a.add_argument("--mode", choices=(HEAVISIDE, LEADING_RUN))
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", parents=[common], help="ensemble sweep over (M, epsilon)")
    w.add_argument("config", nargs="?")
    w.add_argument("--subset", action="append", help="restrict grid, e.g. m=3 or eps=0.45,0.5")
    w.add_argument("--reps", type=int)
    w.add_argument("--fresh", action="store_true", help="discard stored records")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", parents=[common], help="grid calibration against returns")
    c.add_argument("empirical", nargs="?", help="date,return CSV (default: bundled sample)")
    c.add_argument("--config")
    c.add_argument("--grid-stride", type=int, default=1, help="keep every k-th gamma")
    c.set_defaults(func=cmd_calibrate)

    m = sub.add_parser("moments", parents=[common], help="sampling distributions of moments")
    m.add_argument("--config")
    m.add_argument("--n-series", type=int)
    m.add_argument("--length", type=int, help="series length T")
    m.set_defaults(func=cmd_moments)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OutputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OUTPUT
    except (CMLError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
