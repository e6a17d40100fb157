#!/usr/bin/env python3
"""
Experiment configuration: YAML loading, type conversion, validation and
command-line overrides.
"""

import argparse
import hashlib
import json
import math
import os
from dataclasses import dataclass, fields, replace
from functools import cached_property
from typing import Any, Dict, Optional, Tuple

import numpy as np
import yaml

from triad_da.model.enums import ModelKind
from triad_da.model.helical_algebra import TriadGeometry, build_triad
from triad_da.utils.errors import ConfigError, GeometryError

DEFAULTS_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "config", "defaults.yaml")
OUTPUT_ENV_VAR = "TRIAD_DA_OUT"
DEFAULT_OUTPUT_DIR = "results"
DEFAULT_SPREAD_STD = 1.0 / math.sqrt(600.0)

Vec3 = Tuple[float, float, float]
CVec3 = Tuple[complex, complex, complex]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment configuration. Field names mirror the dotted YAML keys."""
    seed: int
    workers: int
    output_dir: Optional[str]
    model: ModelKind
    k: Tuple[int, int, int]
    p: Tuple[int, int, int]
    q: Tuple[int, int, int]
    parities: Tuple[int, int, int]
    gamma: Vec3
    b: CVec3
    a0: CVec3
    dt: float
    final_time: float
    record_stride: int
    n_realisations: int
    ensemble_spread_std: float
    max_saved: int
    n_particles: int
    da_interval: float
    spread_std: float
    cov_diag: Vec3
    record_tracks: bool
    truth_relative: bool
    n_runs: int
    cal_b_k: Tuple[float, ...]
    cal_b_p: Tuple[float, ...]
    cal_b_q: Tuple[float, ...]
    cal_models: Tuple[ModelKind, ...]
    cal_n_particles: int
    cal_final_time: float
    cal_repeats: int
    fair_crps: bool

    @cached_property
    def _geometry(self) -> TriadGeometry:
        return build_triad(self.k, self.p, self.q, *self.parities, gamma=self.gamma)

    def geometry(self) -> TriadGeometry:
        return self._geometry

    @property
    def b_array(self) -> np.ndarray:
        return np.asarray(self.b, dtype=np.complex128)

    @property
    def a0_array(self) -> np.ndarray:
        return np.asarray(self.a0, dtype=np.complex128)

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    def as_dict(self) -> Dict[str, Any]:
        """JSON-safe dict keyed by dotted YAML keys."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[_FIELD_TO_KEY[f.name]] = _jsonable(value)
        return out

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def resolve_output_dir(self) -> str:
        return self.output_dir or os.environ.get(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT_DIR


def _jsonable(value):
    if isinstance(value, ModelKind):
        return value.value
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


# Dotted YAML key -> ExperimentConfig field
_KEY_TO_FIELD = {
    "seed": "seed",
    "workers": "workers",
    "output_dir": "output_dir",
    "model": "model",
    "triad.k": "k",
    "triad.p": "p",
    "triad.q": "q",
    "triad.parities": "parities",
    "triad.gamma": "gamma",
    "noise.b": "b",
    "initial.a0": "a0",
    "time.dt": "dt",
    "time.final_time": "final_time",
    "time.record_stride": "record_stride",
    "ensemble.n_realisations": "n_realisations",
    "ensemble.spread_std": "ensemble_spread_std",
    "ensemble.max_saved": "max_saved",
    "filter.n_particles": "n_particles",
    "filter.da_interval": "da_interval",
    "filter.spread_std": "spread_std",
    "filter.cov_diag": "cov_diag",
    "filter.record_tracks": "record_tracks",
    "filter.truth_relative": "truth_relative",
    "repeat.n_runs": "n_runs",
    "calibration.b_k": "cal_b_k",
    "calibration.b_p": "cal_b_p",
    "calibration.b_q": "cal_b_q",
    "calibration.models": "cal_models",
    "calibration.n_particles": "cal_n_particles",
    "calibration.final_time": "cal_final_time",
    "calibration.repeats": "cal_repeats",
    "calibration.fair_crps": "fair_crps",
}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


def flatten_config(config: Optional[dict], prefix: str = "") -> Dict[str, Any]:
    """Flatten nested mappings into dotted keys ({'time': {'dt': x}} -> {'time.dt': x})."""
    flat = {}
    for key, value in (config or {}).items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_config(value, prefix=f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def _read_yaml(path: str) -> dict:
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise FileNotFoundError(f"Config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(path, f"invalid YAML syntax: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(path, f"top level must be a mapping, got {type(data).__name__}")
    return data


def load_defaults() -> Dict[str, Any]:
    """Flattened packaged defaults."""
    return flatten_config(_read_yaml(DEFAULTS_PATH))


def load_config(config_path: Optional[str]) -> ExperimentConfig:
    """Load a YAML experiment file and apply defaults.

    Args:
        config_path: Path to the YAML file, or None for the defaults alone.

    Returns:
        Validated ExperimentConfig.

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigError: For bad YAML, unknown keys or invalid values.
    """
    raw = _read_yaml(config_path) if config_path else {}
    return validate_and_convert_config(raw)


# --------------------------------------------------------------------------
# Converters
# --------------------------------------------------------------------------

def _split(key: str, value, length: Optional[int] = 3) -> list:
    if isinstance(value, str):
        items = [part.strip() for part in value.strip().strip("[]()").split(",") if part.strip()]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [value]
    if length is not None and len(items) != length:
        raise ConfigError(key, f"expected {length} values, got {len(items)} ({value!r})")
    return items


def _to_int(key: str, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    try:
        if isinstance(value, str):
            return int(value, 0)
        as_float = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {value!r} as an integer")
    if not as_float.is_integer():
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return int(as_float)


def _to_float(key: str, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        result = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {value!r} as a number")
    if not math.isfinite(result):
        raise ConfigError(key, f"must be finite, got {value!r}")
    return result


def _to_complex(key: str, value) -> complex:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        result = complex(value.replace(" ", "")) if isinstance(value, str) else complex(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot parse {value!r} as a complex number")
    if not (math.isfinite(result.real) and math.isfinite(result.imag)):
        raise ConfigError(key, f"must be finite, got {value!r}")
    return result


def _to_bool(key: str, value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "yes", "1", "on", "false", "no", "0", "off"):
        return value.strip().lower() in ("true", "yes", "1", "on")
    raise ConfigError(key, f"expected true or false, got {value!r}")


def _to_model(key: str, value) -> ModelKind:
    try:
        return ModelKind.parse(value)
    except ValueError as e:
        raise ConfigError(key, str(e))


def _positive(key: str, value, strict: bool = True):
    if value < 0 or (strict and value == 0):
        raise ConfigError(key, f"must be {'positive' if strict else 'non-negative'}, got {value}")
    return value


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


def validate_and_convert_config(config: Optional[dict]) -> ExperimentConfig:
    """Merge a raw config mapping over the defaults, convert types and validate.

    Accepts nested or dotted keys. Vectors may be YAML lists or comma
    separated strings ("1,0,0"); complex entries may be literals such as
    "0.1+0.02j".

    Raises:
        ConfigError: Naming the dotted key of the first invalid value.
    """
    values = load_defaults()
    for key, value in flatten_config(config).items():
        if key not in _KEY_TO_FIELD:
            raise ConfigError(key, "unknown configuration key")
        values[key] = value

    def vec(key, conv, length=3):
        return tuple(conv(key, v) for v in _split(key, values[key], length))

    seed = _positive("seed", _to_int("seed", values["seed"]), strict=False)
    workers = _positive("workers", _to_int("workers", values["workers"]))
    output_dir = values["output_dir"]
    if output_dir is not None:
        output_dir = str(output_dir)

    k, p, q = (vec(key, _to_int) for key in ("triad.k", "triad.p", "triad.q"))
    parities = vec("triad.parities", _to_int)
    for s in parities:
        if s not in (1, -1):
            raise ConfigError("triad.parities", f"entries must be +1 or -1, got {list(parities)}")
    gamma = vec("triad.gamma", _to_float)

    b = vec("noise.b", _to_complex)
    if values["initial.a0"] is None:
        a0 = tuple(complex(1.0 / math.sqrt(3.0)) for _ in range(3))
    else:
        a0 = vec("initial.a0", _to_complex)

    dt = _positive("time.dt", _to_float("time.dt", values["time.dt"]))
    final_time = _positive("time.final_time", _to_float("time.final_time", values["time.final_time"]))
    if not _is_multiple(final_time, dt):
        raise ConfigError("time.final_time", f"{final_time} is not a multiple of time.dt {dt}")
    record_stride = _positive("time.record_stride", _to_int("time.record_stride", values["time.record_stride"]))

    n_realisations = _positive("ensemble.n_realisations",
                               _to_int("ensemble.n_realisations", values["ensemble.n_realisations"]))
    ensemble_spread = _positive("ensemble.spread_std",
                                _to_float("ensemble.spread_std", values["ensemble.spread_std"]), strict=False)
    max_saved = _positive("ensemble.max_saved", _to_int("ensemble.max_saved", values["ensemble.max_saved"]),
                          strict=False)

    n_particles = _positive("filter.n_particles", _to_int("filter.n_particles", values["filter.n_particles"]))
    da_interval = _positive("filter.da_interval", _to_float("filter.da_interval", values["filter.da_interval"]))
    if not _is_multiple(da_interval, dt):
        raise ConfigError("filter.da_interval", f"{da_interval} is not a multiple of time.dt {dt}")
    if values["filter.spread_std"] is None:
        spread_std = DEFAULT_SPREAD_STD
    else:
        spread_std = _positive("filter.spread_std", _to_float("filter.spread_std", values["filter.spread_std"]),
                               strict=False)
    cov_diag = vec("filter.cov_diag", _to_float)
    if not all(c > 0 for c in cov_diag):
        raise ConfigError("filter.cov_diag", f"variances must be positive, got {list(cov_diag)}")

    n_runs = _positive("repeat.n_runs", _to_int("repeat.n_runs", values["repeat.n_runs"]))

    grid = []
    for key in ("calibration.b_k", "calibration.b_p", "calibration.b_q"):
        axis = tuple(_positive(key, _to_float(key, v), strict=False) for v in _split(key, values[key], None))
        if not axis:
            raise ConfigError(key, "needs at least one value")
        grid.append(axis)
    cal_models = tuple(_to_model("calibration.models", m) for m in _split("calibration.models",
                                                                           values["calibration.models"], None))
    if not cal_models:
        raise ConfigError("calibration.models", "needs at least one model")
    cal_final_time = _positive("calibration.final_time",
                               _to_float("calibration.final_time", values["calibration.final_time"]))
    if not _is_multiple(cal_final_time, dt):
        raise ConfigError("calibration.final_time", f"{cal_final_time} is not a multiple of time.dt {dt}")

    cfg = ExperimentConfig(
        seed=seed, workers=workers, output_dir=output_dir, model=_to_model("model", values["model"]),
        k=k, p=p, q=q, parities=parities, gamma=gamma, b=b, a0=a0,
        dt=dt, final_time=final_time, record_stride=record_stride,
        n_realisations=n_realisations, ensemble_spread_std=ensemble_spread, max_saved=max_saved,
        n_particles=n_particles, da_interval=da_interval, spread_std=spread_std, cov_diag=cov_diag,
        record_tracks=_to_bool("filter.record_tracks", values["filter.record_tracks"]),
        truth_relative=_to_bool("filter.truth_relative", values["filter.truth_relative"]),
        n_runs=n_runs, cal_b_k=grid[0], cal_b_p=grid[1], cal_b_q=grid[2], cal_models=cal_models,
        cal_n_particles=_positive("calibration.n_particles",
                                  _to_int("calibration.n_particles", values["calibration.n_particles"])),
        cal_final_time=cal_final_time,
        cal_repeats=_positive("calibration.repeats", _to_int("calibration.repeats", values["calibration.repeats"])),
        fair_crps=_to_bool("calibration.fair_crps", values["calibration.fair_crps"]),
    )
    try:
        cfg.geometry()
    except GeometryError as e:
        raise ConfigError("triad", str(e))
    return cfg


def merge_config_with_args(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Apply command-line overrides. Flags left at None keep the file value.

    Recognised flags: seed, out, workers, model, runs.
    """
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = _positive("seed", int(args.seed), strict=False)
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = str(args.out)
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = _positive("workers", int(args.workers))
    if getattr(args, "model", None) is not None:
        overrides["model"] = _to_model("model", args.model)
    if getattr(args, "runs", None) is not None:
        overrides["n_runs"] = _positive("repeat.n_runs", int(args.runs))
    return replace(cfg, **overrides) if overrides else cfg


def config_summary(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Nested JSON-safe view of the configuration, as written to MANIFEST.json."""
    nested: Dict[str, Any] = {}
    for dotted, value in cfg.as_dict().items():
        node = nested
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested

