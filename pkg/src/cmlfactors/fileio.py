"""File formats: run configuration, panel/metadata, result tables, manifest."""
from __future__ import annotations

import configparser
import csv
import datetime as _dt
import json
import math
import os
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .errors import CMLError

MANIFEST_SCHEMA = 1
COMMANDS = ("simulate", "analyze", "sweep", "calibrate", "moments")


class InputError(CMLError, ValueError):
    """Malformed configuration or input file."""


def fmt(x) -> str:
    """Shortest round-trip text for CSV cells."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


# section -> key -> converter
CONFIG_SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "map": {"gamma": float, "r0": float, "delta": float},
    "network": {"M": int, "N": int},
    "simulation": {"epsilon": float, "T": int, "burn_in": int, "seed": int, "r_cap": float},
    "analysis": {"n_baseline": int, "mode": str},
    "sweep": {"m_values": _ints, "epsilon_values": _floats, "epsilon_min": float,
              "epsilon_max": float, "epsilon_step": float, "n_per_cluster": int, "reps": int,
              "T": int, "burn_in": int, "seed": int, "n_baseline": int, "fix_network": parse_bool,
              "mode": str, "r_cap": float},
    "calibration": {"r0_min": float, "r0_max": float, "r0_step": float, "gamma_min": float,
                    "gamma_max": float, "gamma_step": float, "delta_values": _floats,
                    "seed": int, "lags": int, "r_cap": float, "mse_threshold": float},
    "moments": {"n_series": int, "T": int, "seed": int, "burn_in": int},
}


def load_config(path) -> dict[str, dict[str, Any]]:
    """Read an INI-style config; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep M, N, T as written
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e.strerror}") from e
    except configparser.Error as e:
        raise InputError(f"malformed config {path}: {e}") from e
    out: dict[str, dict[str, Any]] = {}
    for section in cp.sections():
        schema = CONFIG_SCHEMA.get(section)
        if schema is None:
            raise InputError(f"unknown config section [{section}]")
        vals = {}
        for key, raw in cp.items(section):
            if key not in schema:
                raise InputError(f"unknown key {key!r} in section [{section}]")
            try:
                vals[key] = schema[key](raw)
            except ValueError as e:
                raise InputError(f"bad value for {section}.{key}: {raw!r}") from e
        out[section] = vals
    return out


# panels --------------------------------------------------------------------

def write_panel_csv(path, returns: np.ndarray) -> None:
    returns = np.asarray(returns, dtype=float)
    K = returns.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"asset_{k}" for k in range(K)])
        for t, row in enumerate(returns):
            w.writerow([t] + [repr(float(x)) for x in row])


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from e


def read_panel_csv(path) -> np.ndarray:
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2 or header[0] != "t":
        raise InputError(f"{path}:1: header must be t,asset_0,...")
    width = len(header)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise InputError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
        try:
            data.append([float(x) for x in row[1:]])
        except ValueError as e:
            raise InputError(f"{path}:{lineno}: {e}") from e
    if not data:
        raise InputError(f"{path}: no data rows")
    return np.array(data)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def read_empirical_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a ``date,return`` file; dates are passed through uninterpreted."""
    rows = _read_rows(path)
    if not rows or [c.strip().lower() for c in rows[0]] != ["date", "return"]:
        raise InputError(f"{path}:1: header must be 'date,return'")
    dates, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 fields, found {len(row)}")
        try:
            vals.append(float(row[1]))
        except ValueError as e:
            raise InputError(f"{path}:{lineno}: {e}") from e
        dates.append(row[0])
    if len(vals) < 2:
        raise InputError(f"{path}: need at least two returns")
    return dates, np.array(vals)


def sample_returns_path() -> Path:
    """Location of the bundled sample empirical series."""
    return Path(str(resources.files("cmlfactors") / "data" / "sample_returns.csv"))


# result tables -------------------------------------------------------------

def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(path) -> tuple[list[str], list[str], list[list[str]]]:
    """Return (comment lines, header, rows); a truncated final line is dropped."""
    comments, body = [], []
    with open(path, newline="") as fh:
        text = fh.read()
    complete = text.endswith("\n")
    lines = text.splitlines()
    if lines and not complete:
        lines = lines[:-1]
    for line in lines:
        (comments if line.startswith("#") else body).append(line)
    parsed = list(csv.reader(body))
    if not parsed:
        return comments, [], []
    header = parsed[0]
    return comments, header, [r for r in parsed[1:] if len(r) == len(header)]


# manifest ------------------------------------------------------------------

def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
           else _dt.datetime.now(_dt.timezone.utc))
    return now.replace(microsecond=0).isoformat()


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    base_seed: int
    output_dir: str
    tool_version: str = __version__
    timestamp: str = field(default_factory=_timestamp)
    schema_version: int = MANIFEST_SCHEMA
    outputs: list[str] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")

    def write(self, outdir) -> Path:
        path = Path(outdir) / "manifest.json"
        write_json(path, jsonable(asdict(self)))
        return path


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


