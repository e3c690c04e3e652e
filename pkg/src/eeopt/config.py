"""Scenario configuration files.

A scenario is a YAML mapping with ``schema_version: 1`` and a ``solver``
key selecting one of :data:`SOLVER_KINDS`. :func:`load_config` validates
it against a JSON schema plus a few cross-field rules and returns a plain
``dict`` with CNRs converted to linear scale and the sweep expanded.

See ``configs/`` for one example of every solver kind and the README for
the field reference.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .exceptions import DomainError
from .mmse import Constellation
from .powermodel import CuiLinkModel, GenericBsModel, MacroBsModel

__all__ = [
    "SOLVER_KINDS",
    "SCHEMA",
    "ConfigError",
    "load_config",
    "validate_config",
    "parse_cnr",
    "build_power_model",
]

SCHEMA_VERSION = 1

SOLVER_KINDS = (
    "static",
    "flat-closed-form",
    "ergodic-rayleigh",
    "ergodic-parallel",
    "mimo",
    "mmse",
    "nested",
)


class ConfigError(ValueError):
    """Schema or consistency violation; ``where`` points at the offending key."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


_CNR_DB = r"^\s*[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?\s*dB\s*$"

_number = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_cnr = {"oneOf": [{"type": "number", "minimum": 0}, {"type": "string", "pattern": _CNR_DB}]}

_range = {
    "type": "object",
    "properties": {"start": _number, "stop": _number, "num": {"type": "integer", "minimum": 1}},
    "required": ["start", "stop", "num"],
    "additionalProperties": False,
}

_sweep = {
    "type": "object",
    "properties": {
        "variable": {"enum": ["mu", "p_c", "n"]},
        "values": {"type": "array", "items": _number, "minItems": 1},
        "logspace": _range,
        "linspace": _range,
    },
    "required": ["variable"],
    "oneOf": [
        {"required": ["values"]},
        {"required": ["logspace"]},
        {"required": ["linspace"]},
    ],
    "additionalProperties": False,
}

_channel = {
    "type": "object",
    "properties": {
        "cnrs": {"type": "array", "items": _cnr, "minItems": 1},
        "p_max": _pos,
        "gap": {"type": "number", "minimum": 1},
        "rayleigh_draw": {
            "type": "object",
            "properties": {"n_sub": {"type": "integer", "minimum": 1}, "mean_cnr": _cnr},
            "required": ["n_sub", "mean_cnr"],
            "additionalProperties": False,
        },
    },
    "oneOf": [{"required": ["cnrs"]}, {"required": ["rayleigh_draw"]}],
    "additionalProperties": False,
}

_power_model = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["cui", "generic", "macro"]},
        # cui
        "xi": _number, "eta": _number, "p_mix": _number, "p_syn": _number,
        "p_filt": _number, "p_dac": _number, "w_c": _number, "t_c": _number,
        # generic
        "n_a": {"type": "integer"}, "p_c": _number, "p_sta": _number,
        "eta_pa": _number, "eta_ps": _number, "eta_c": _number,
        # macro
        "n_sector": {"type": "integer"}, "n_pa_per_sector": {"type": "integer"},
        "p_sp": _number, "mu_pa": _number, "c_c": _number, "c_psbb": _number,
        "bandwidth": _pos,
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_constraints = {
    "type": "object",
    "properties": {
        "sum_power": _pos,
        "min_rate": _nonneg,
        "avg_power_max": _pos,
        "avg_rate_min": _nonneg,
    },
    "additionalProperties": False,
}

_table = {
    "type": "object",
    "properties": {
        "rho_max": _pos,
        "n_points": {"type": "integer", "minimum": 64},
        "cache_dir": {"type": "string"},
    },
    "additionalProperties": False,
}

_antennas = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "properties": {"n_t": {"type": "integer", "minimum": 1}, "n_r": {"type": "integer", "minimum": 1}},
        "required": ["n_t", "n_r"],
        "additionalProperties": False,
    },
}

SCHEMA = {
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "solver": {"enum": list(SOLVER_KINDS)},
        "description": {"type": "string"},
        "mu": _pos,
        "power_model": _power_model,
        "channel": _channel,
        "fading": {
            "type": "object",
            "properties": {
                "mean_cnr": _cnr,
                "mean_cnrs": {"type": "array", "items": _cnr, "minItems": 1},
            },
            "additionalProperties": False,
        },
        "antennas": _antennas,
        "path_loss_db": _number,
        "noise_psd_dbm_per_hz": _number,
        "constellation": {"type": "string"},
        "constellations": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "table": _table,
        "constraints": _constraints,
        "sweep": _sweep,
        "n_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "tolerance": _pos,
        "max_iter": {"type": "integer", "minimum": 1},
        "tradeoff_points": {"type": "integer", "minimum": 2},
    },
    "required": ["schema_version", "solver"],
    "additionalProperties": False,
}

# keys each solver kind needs, beyond schema_version/solver
_REQUIRED = {
    "static": ["channel"],
    "flat-closed-form": ["channel"],
    "ergodic-rayleigh": ["fading"],
    "ergodic-parallel": ["fading"],
    "mimo": ["power_model"],
    "mmse": ["channel"],
    "nested": ["channel"],
}

_CONSTRAINTS_ALLOWED = {
    "static": {"sum_power", "min_rate"},
    "ergodic-rayleigh": {"avg_power_max", "avg_rate_min"},
    "ergodic-parallel": {"avg_power_max", "avg_rate_min"},
    "mimo": {"avg_power_max", "avg_rate_min"},
}


def parse_cnr(value) -> float:
    """A CNR given as a number (linear) or a string like ``"3 dB"``."""
    if isinstance(value, str):
        if not re.match(_CNR_DB, value):
            raise ConfigError(f"cannot parse CNR {value!r}; use a number or '<x> dB'")
        return 10.0 ** (float(value.strip()[:-2]) / 10.0)
    value = float(value)
    if not value >= 0:
        raise ConfigError(f"CNR must be nonnegative, got {value!r}")
    return value


_MODELS = {"cui": CuiLinkModel, "generic": GenericBsModel, "macro": MacroBsModel}


def build_power_model(spec: dict, **overrides):
    """Instantiate the power model described by a ``power_model`` block.

    Keys that belong to a different model kind are rejected.
    """
    params = {k: v for k, v in spec.items() if k != "kind"}
    params.update(overrides)
    cls = _MODELS[spec["kind"]]
    try:
        return cls(**params)
    except TypeError as exc:
        raise DomainError(f"{spec['kind']} model: {exc}") from exc


def _expand_sweep(sweep: dict) -> np.ndarray:
    if "values" in sweep:
        grid = np.asarray(sweep["values"], dtype=float)
    elif "logspace" in sweep:
        r = sweep["logspace"]
        if not (r["start"] > 0 and r["stop"] > 0):
            raise ConfigError("logspace bounds must be positive", "sweep.logspace")
        grid = np.logspace(math.log10(r["start"]), math.log10(r["stop"]), r["num"])
    else:
        r = sweep["linspace"]
        grid = np.linspace(r["start"], r["stop"], r["num"])
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ConfigError("sweep grid must be strictly increasing", "sweep")
    return grid


def _location(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate_config(raw: dict) -> dict:
    """Validate a parsed mapping and return the normalized scenario.

    Raises
    ------
    ConfigError
        On the first violation found, with its location.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    errors = sorted(
        jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw),
        key=lambda e: (len(list(e.absolute_path)), list(map(str, e.absolute_path))),
    )
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _location(err))

    cfg = dict(raw)
    kind = cfg["solver"]
    for key in _REQUIRED[kind]:
        if key not in cfg:
            raise ConfigError(f"'{key}' is required for solver '{kind}'", key)
    swept = cfg.get("sweep", {}).get("variable")
    if "mu" not in cfg and "power_model" not in cfg and kind != "mimo" and swept != "mu":
        raise ConfigError("either 'mu' or 'power_model' is required", "mu")
    if "mu" in cfg and "power_model" in cfg:
        raise ConfigError("give 'mu' or 'power_model', not both", "mu")

    cons = cfg.get("constraints", {})
    allowed = _CONSTRAINTS_ALLOWED.get(kind, set())
    for key in cons:
        if key not in allowed:
            raise ConfigError(f"constraint '{key}' is not supported by solver '{kind}'", f"constraints.{key}")

    if "channel" in cfg:
        ch = dict(cfg["channel"])
        if "cnrs" in ch:
            ch["cnrs"] = [parse_cnr(v) for v in ch["cnrs"]]
        else:
            d = dict(ch["rayleigh_draw"])
            d["mean_cnr"] = parse_cnr(d["mean_cnr"])
            ch["rayleigh_draw"] = d
        cfg["channel"] = ch
        if kind == "flat-closed-form" and len(ch.get("cnrs", [])) != 1:
            raise ConfigError("flat-closed-form needs exactly one CNR", "channel.cnrs")
    if "fading" in cfg:
        fd = dict(cfg["fading"])
        if kind == "ergodic-rayleigh" and "mean_cnr" not in fd:
            raise ConfigError("'mean_cnr' is required", "fading.mean_cnr")
        if kind == "ergodic-parallel" and "mean_cnrs" not in fd:
            raise ConfigError("'mean_cnrs' is required", "fading.mean_cnrs")
        if "mean_cnr" in fd:
            fd["mean_cnr"] = parse_cnr(fd["mean_cnr"])
            if fd["mean_cnr"] <= 0:
                raise ConfigError("mean CNR must be positive", "fading.mean_cnr")
        if "mean_cnrs" in fd:
            fd["mean_cnrs"] = [parse_cnr(v) for v in fd["mean_cnrs"]]
            if min(fd["mean_cnrs"]) <= 0:
                raise ConfigError("mean CNRs must be positive", "fading.mean_cnrs")
        cfg["fading"] = fd

    if kind == "mmse" and "constellation" not in cfg and "constellations" not in cfg:
        raise ConfigError("'constellation' or 'constellations' is required", "constellation")
    if "constellation" in cfg and "constellations" in cfg:
        raise ConfigError("give 'constellation' or 'constellations', not both", "constellation")
    for label in cfg.get("constellations", [cfg.get("constellation", "gaussian")]):
        try:
            Constellation.from_label(label)
        except (DomainError, ValueError) as exc:
            raise ConfigError(str(exc), "constellation") from exc
    if kind == "mimo":
        if cfg["power_model"]["kind"] != "generic":
            raise ConfigError("mimo scenarios use the generic base-station model", "power_model.kind")
        if "antennas" not in cfg and cfg.get("sweep", {}).get("variable") != "n":
            raise ConfigError("'antennas' is required unless sweeping n", "antennas")
    if "power_model" in cfg:
        try:
            build_power_model(cfg["power_model"])
        except DomainError as exc:
            raise ConfigError(str(exc), "power_model") from exc

    sweep = cfg.get("sweep")
    if sweep is not None:
        var = sweep["variable"]
        if var == "p_c" and cfg.get("power_model", {}).get("kind") != "generic":
            raise ConfigError("sweeping p_c needs a generic power model", "sweep.variable")
        if var == "n" and kind != "mimo":
            raise ConfigError("sweeping n is only defined for mimo scenarios", "sweep.variable")
        if var == "mu" and "power_model" in cfg:
            raise ConfigError("sweeping mu conflicts with a power model; sweep p_c", "sweep.variable")
        grid = _expand_sweep(sweep)
        if var in ("mu",) and np.any(grid <= 0):
            raise ConfigError("mu values must be positive", "sweep")
        if var == "p_c" and np.any(grid < 0):
            raise ConfigError("p_c values must be nonnegative", "sweep")
        if var == "n" and (np.any(grid < 1) or np.any(grid != np.round(grid))):
            raise ConfigError("n values must be positive integers", "sweep")
        cfg["sweep_grid"] = grid
    return cfg


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e6`` and ``2.5e-3`` as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def load_config(path) -> dict:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        raw = yaml.load(path.read_text(), Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}", str(path)) from exc
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from exc
    return validate_config(raw)
