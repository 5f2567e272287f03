"""Run configuration: a flat TOML file of key = value pairs.

Paths are resolved relative to the config file. Unknown keys are
rejected so typos fail loudly. The config hash identifies the effective
configuration (file plus command-line overrides) and is stamped into
every output artifact.
"""

from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from stfield.errors import ConfigError


@dataclass
class RunConfig:
    # input/output paths
    stations_path: str = "stations.csv"
    observations_path: str = "observations.csv"
    climate_grid_path: str | None = None
    output_dir: str = "out"
    # projection (reference point defaults to the station centroid)
    ref_lon: float | None = None
    ref_lat: float | None = None
    std_parallel_1: float = 45.0
    std_parallel_2: float = 49.0
    earth_radius_km: float = 6371.0
    # observation window (ISO dates; None = observed span)
    start_date: dt.date | None = None
    end_date: dt.date | None = None
    # trend and completion
    trend_mode: str = "interaction"
    max_missing_frac: float = 0.2
    # train/validation split
    n_train: int = 64
    split_seed: int = 2000
    # deformation
    lambda_candidates: tuple[float, ...] = (0.0, 1.0, 2.0, 5.0, 10.0, 50.0)
    # hierarchy assembly
    delta_grid: tuple[float, ...] | None = None
    c_grid: tuple[float, ...] = (0.0, 0.1, 1.0, 10.0)
    d_formula: str = "corrected"
    prefilter_ar1: bool = False
    # variogram diagnostics
    n_bins: int = 12
    n_permutations: int = 99
    variogram_seed: int = 7
    # evaluation
    coverage_level: float = 0.95
    predictions_paths: tuple[str, ...] = ()
    method_labels: tuple[str, ...] = ()
    # synthetic data generation
    sim_p: int = 30
    sim_g: int = 20
    sim_n_days: int = 60
    sim_seed: int = 1
    sim_delta: float = 40.0
    sim_c: float = 0.0
    sim_phi_km: float = 120.0
    sim_nugget_frac: float = 0.05
    sim_warp_strength: float = 0.0
    sim_warp_scale_km: float = 120.0
    sim_box_km: float = 400.0
    sim_sd_min: float = 0.9
    sim_sd_max: float = 1.6
    sim_start_date: dt.date = dt.date(2000, 1, 1)

    config_hash: str = field(default="", compare=False)


_DATE_KEYS = {"start_date", "end_date", "sim_start_date"}
_TUPLE_KEYS = {
    "lambda_candidates",
    "delta_grid",
    "c_grid",
    "predictions_paths",
    "method_labels",
}
_PATH_KEYS = {
    "stations_path",
    "observations_path",
    "climate_grid_path",
    "output_dir",
}


def _coerce(key: str, value):
    if key in _DATE_KEYS:
        if isinstance(value, dt.date):
            return value
        try:
            return dt.date.fromisoformat(str(value))
        except ValueError:
            raise ConfigError(f"{key}: bad ISO date {value!r}") from None
    if key in _TUPLE_KEYS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        if key in ("predictions_paths", "method_labels"):
            return tuple(str(v) for v in value)
        return tuple(float(v) for v in value)
    return value


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file, applying CLI overrides."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    known = {f.name for f in fields(RunConfig)} - {"config_hash"}
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown config key(s): {', '.join(unknown)}")

    kwargs = {}
    for key, value in merged.items():
        kwargs[key] = _coerce(key, value)
    try:
        cfg = RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    _validate(cfg)

    base = path.parent
    for key in _PATH_KEYS:
        value = getattr(cfg, key)
        if value is not None and not Path(value).is_absolute():
            setattr(cfg, key, str((base / value)))
    for key in ("predictions_paths",):
        vals = tuple(
            str(base / v) if not Path(v).is_absolute() else v
            for v in getattr(cfg, key)
        )
        setattr(cfg, key, vals)

    cfg.config_hash = _hash_config(merged)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.trend_mode not in ("interaction", "anomaly"):
        raise ConfigError(f"trend_mode must be interaction or anomaly: {cfg.trend_mode}")
    if cfg.d_formula not in ("corrected", "literal"):
        raise ConfigError(f"d_formula must be corrected or literal: {cfg.d_formula}")
    if not 0.0 <= cfg.max_missing_frac < 1.0:
        raise ConfigError(f"max_missing_frac must be in [0, 1): {cfg.max_missing_frac}")
    if not 0.0 < cfg.coverage_level < 1.0:
        raise ConfigError(f"coverage_level must be in (0, 1): {cfg.coverage_level}")
    if cfg.n_train < 1:
        raise ConfigError(f"n_train must be positive: {cfg.n_train}")
    if cfg.trend_mode == "anomaly" and cfg.climate_grid_path is None:
        raise ConfigError("anomaly mode requires climate_grid_path")
    if len(cfg.method_labels) not in (0, len(cfg.predictions_paths)):
        raise ConfigError("method_labels must match predictions_paths in length")


def _canonical(value) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    return str(value)


def _hash_config(merged: dict) -> str:
    lines = [f"{k}={_canonical(v)}" for k, v in sorted(merged.items())]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]
