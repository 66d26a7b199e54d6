"""Run settings: model parameters, numerical knobs and named parameter sweeps.

Config files are INI style with a ``[model]`` section, a ``[numerics]``
section and any number of ``[sweep.<name>]`` sections. Command-line flags
override file values, which override the defaults below.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .model import PARAM_KEYS, ModelParams, ParamError, make_params, read_model_section


@dataclass(frozen=True)
class Numerics:
    n_samples: int = 200_000
    m: int = 101
    tol: float | None = None
    max_iter: int = 100
    workers: int = 1
    dt: float = 1e-2
    horizon: float | None = None
    n_paths: int = 20_000
    n_x: int = 1001
    n_pi: int = 101
    left_width: float = 4.0
    right_width: float = 1.0
    voi_points: int = 41
    voi_pis: tuple = (0.1, 0.25, 0.5, 0.75, 0.9)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["voi_pis"] = list(self.voi_pis)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Numerics":
        d = dict(d)
        if "voi_pis" in d:
            d["voi_pis"] = tuple(float(p) for p in d["voi_pis"])
        return cls(**d)


_NUMERIC_TYPES = {f.name: f.type for f in fields(Numerics)}


def _coerce(key: str, raw: str):
    kind = _NUMERIC_TYPES[key]
    if key == "voi_pis":
        return tuple(float(p) for p in raw.replace(",", " ").split())
    if raw.strip().lower() in ("", "none"):
        return None
    return int(raw) if kind.startswith("int") else float(raw)


def read_numerics(cp: configparser.ConfigParser) -> dict:
    if not cp.has_section("numerics"):
        return {}
    out = {}
    for key, raw in cp.items("numerics"):
        if key not in _NUMERIC_TYPES:
            raise ParamError(f"unknown key {key!r} in [numerics]")
        out[key] = _coerce(key, raw)
    return out


@dataclass(frozen=True)
class SweepSpec:
    """Named parameter sets sharing one set of numerical settings."""

    sets: dict = field(default_factory=dict)
    numerics: Numerics = Numerics()

    def names(self) -> list[str]:
        return list(self.sets)


# Four representative constellations with r, mu1 and I held at their
# reference values. They span signal-to-noise ratios (mu1 - mu0)/sigma from
# 0.067 to 0.5; they are not read off any published figure.
DEFAULT_SWEEP = {
    "low_snr": dict(mu0=0.01, sigma=0.3),
    "reference": dict(mu0=0.01, sigma=0.2),
    "wide_drift": dict(mu0=-0.02, sigma=0.2),
    "high_snr": dict(mu0=-0.02, sigma=0.1),
}


def default_sweep(numerics: Numerics = Numerics()) -> SweepSpec:
    return SweepSpec({k: make_params(**v) for k, v in DEFAULT_SWEEP.items()}, numerics)


def read_config(path: str | Path | None) -> tuple[dict, dict, dict]:
    """(model overrides, numerics overrides, sweep sets) from an INI file."""
    if path is None:
        return {}, {}, {}
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"cannot read config file {path}")
    model = read_model_section(path)
    numerics = read_numerics(cp)
    sweeps = {}
    for sec in cp.sections():
        if sec.startswith("sweep."):
            name = sec.split(".", 1)[1]
            vals = read_model_section(path, sec)
            sweeps[name] = make_params(**{**model, **vals})
    return model, numerics, sweeps


def merge_numerics(base: Numerics, *overrides: dict) -> Numerics:
    out = base
    for o in overrides:
        out = replace(out, **{k: v for k, v in o.items() if v is not None})
    return out


def params_from_sources(file_vals: dict, flag_vals: dict) -> ModelParams:
    vals = {**file_vals, **{k: v for k, v in flag_vals.items() if k in PARAM_KEYS and v is not None}}
    return make_params(**vals)
