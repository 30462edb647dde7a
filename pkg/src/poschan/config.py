"""Run configuration: JSON documents, validation, presets and hashing.

A run configuration is a JSON object with optional ``geometry``,
``channel``, ``design`` and ``sim`` sections plus a ``seed``. Missing
fields take the defaults below. ``resolve`` turns a document into typed
objects after schema and physical-consistency checks.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

import jsonschema

from .channel_model import ChannelModelConfig, delay_span
from .geometry import GeometryConfig, kmh_to_ms, max_doppler
from .pilot_design import DesignParams
from .sim import SimConfig

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "PRESETS",
    "ResolvedConfig",
    "schema",
    "merge",
    "load_document",
    "preset",
    "resolve",
    "config_hash",
]


class ConfigError(ValueError):
    """Invalid or physically inconsistent configuration."""


DEFAULTS = {
    "seed": 0,
    "geometry": {"D_max": 1200.0, "D_0": 50.0, "D_s": 1000.0, "f_c": 2.35e9, "c": 3e8},
    "channel": {"W": 5e6, "tau_max": 5e-6, "T_d": 0.675e-3, "K": 512, "cp_len": 32, "S": 6, "gamma": None},
    "design": {"P": 64, "iters": 192, "power_levels": [0.5, 1.0, 2.0], "delta": 0.1},
    "sim": {
        "speed_kmh": 500.0,
        "positions_m": [0.0],
        "snr_db": [15.0],
        "estimators": ["bp"],
        "pilot_sources": ["algorithm1"],
        "ici_iterations": [2],
        "trials": 100,
        "genie_feedback": True,
        "zero_data": False,
        "n_symbols": None,
        "random_search_iters": 200,
    },
}

_SNR_GRID = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
_D_C = math.sqrt(1200.0**2 - 50.0**2)
_SWEEP = [f * _D_C for f in (0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0, 1.05, 1.1, 1.25, 1.5, 1.75, 2.0)]

# desk-scale trial counts; pass --trials for full-scale runs
PRESETS = {
    "fig4": {"sim": {"positions_m": [i / 50 * _D_C for i in range(101)]}},
    "fig6": {"sim": {"trials": 100}},
    "fig7": {"sim": {
        "snr_db": _SNR_GRID, "estimators": ["ls", "lmmse", "omp", "bp", "perfect"],
        "pilot_sources": ["equidistant", "random_search", "algorithm1"], "ici_iterations": [2], "trials": 20,
    }},
    "fig8": {"sim": {
        "speed_kmh": 325.0, "snr_db": _SNR_GRID, "estimators": ["ls", "lmmse", "omp", "bp", "perfect"],
        "pilot_sources": ["equidistant", "random_search", "algorithm1"], "ici_iterations": [2], "trials": 20,
    }},
    "fig9": {"sim": {
        "snr_db": _SNR_GRID, "estimators": ["omp", "bp", "perfect"],
        "pilot_sources": ["equidistant", "random_search", "algorithm1"], "ici_iterations": [0, 2, 5, 7],
        "trials": 20,
    }},
    "fig10": {"sim": {
        "positions_m": _SWEEP, "snr_db": [15.0, 25.0], "estimators": ["omp", "bp"],
        "pilot_sources": ["algorithm1"], "ici_iterations": [2], "trials": 20,
    }},
    "fig11": {},
}


def schema() -> dict:
    """The published JSON schema for run configurations."""
    return json.loads(resources.files(__package__).joinpath("runconfig.schema.json").read_text())


def merge(base: dict, override: dict) -> dict:
    """Recursive dictionary merge; ``override`` wins, lists are replaced."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_document(path) -> dict:
    """Read a JSON run configuration, reporting the parse location on failure."""
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


@dataclass(frozen=True)
class ResolvedConfig:
    document: dict
    geometry: GeometryConfig
    channel: ChannelModelConfig
    design: DesignParams
    sim: SimConfig
    seed: int

    @property
    def hash(self) -> str:
        return config_hash(self.document)


def config_hash(document: dict) -> str:
    """SHA-256 of the canonical JSON form, seed excluded."""
    body = {k: v for k, v in document.items() if k != "seed"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def _path(error) -> str:
    return "/".join(str(p) for p in error.absolute_path) or "<root>"


def resolve(document: dict | None = None) -> ResolvedConfig:
    """Validate a (partial) document and build the typed configuration."""
    document = document or {}
    try:
        jsonschema.validate(document, schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{_path(exc)}: {exc.message}") from exc
    doc = merge(DEFAULTS, document)
    g, c, d, s = doc["geometry"], doc["channel"], doc["design"], doc["sim"]
    try:
        geometry = GeometryConfig(**g)
        f_dmax = max_doppler(kmh_to_ms(s["speed_kmh"]), geometry)
        need_cp = delay_span(c["W"], c["tau_max"])
        if c["cp_len"] < need_cp:
            raise ConfigError(f"channel/cp_len={c['cp_len']} is shorter than W*tau_max={need_cp} samples")
        if not d["P"] < c["K"]:
            raise ConfigError(f"design/P={d['P']} must be smaller than channel/K={c['K']}")
        if d["iters"] % d["P"]:
            raise ConfigError(f"design/iters={d['iters']} must be a multiple of design/P={d['P']}")
        channel = ChannelModelConfig(f_dmax=f_dmax, **c)
        if d["P"] < channel.L:
            raise ConfigError(f"design/P={d['P']} is below the number of resolvable paths L={channel.L}")
        design = DesignParams(P=d["P"], iters=d["iters"], power_levels=tuple(d["power_levels"]), delta=d["delta"])
        sim = SimConfig(
            channel=channel, geometry=geometry, speed_kmh=float(s["speed_kmh"]),
            positions=tuple(float(a) for a in s["positions_m"]), snr_db=tuple(float(v) for v in s["snr_db"]),
            estimators=tuple(s["estimators"]), pilot_sources=tuple(s["pilot_sources"]),
            ici_iterations=tuple(s["ici_iterations"]), trials=s["trials"], seed=doc["seed"], P=d["P"],
            design=design, genie_feedback=s["genie_feedback"], zero_data=s["zero_data"],
            n_symbols=s["n_symbols"], random_search_iters=s["random_search_iters"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ResolvedConfig(doc, geometry, channel, design, sim, int(doc["seed"]))
