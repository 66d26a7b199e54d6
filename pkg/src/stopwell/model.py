"""Model primitives: the economic parameters, states and the payoff g."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


class ParamError(ValueError):
    """Base class for invalid model parameters."""


class VolatilityError(ParamError):
    pass


class DriftOrderingError(ParamError):
    pass


class DiscountError(ParamError):
    pass


class CostError(ParamError):
    pass


@dataclass(frozen=True)
class ModelParams:
    mu0: float
    mu1: float
    sigma: float
    r: float
    invest_cost: float

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def signal_to_noise(self) -> float:
        return (self.mu1 - self.mu0) / self.sigma


@dataclass(frozen=True)
class State:
    x: float
    pi: float

    def __post_init__(self):
        if not self.x > 0:
            raise ValueError(f"profit level must be positive, got {self.x}")
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"belief must lie in [0, 1], got {self.pi}")


REFERENCE = dict(mu0=0.01, mu1=0.03, sigma=0.2, r=0.05, invest_cost=100.0)
PARAM_KEYS = tuple(REFERENCE)


def validate(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged if every model constraint holds."""
    if not params.sigma > 0:
        raise VolatilityError(f"sigma must be positive, got {params.sigma}")
    if not params.invest_cost > 0:
        raise CostError(f"invest_cost must be positive, got {params.invest_cost}")
    if not params.mu0 < params.mu1:
        raise DriftOrderingError(
            f"drifts must satisfy mu0 < mu1, got mu0={params.mu0}, mu1={params.mu1}"
        )
    if not (params.r > 0 and params.r > params.mu1):
        raise DiscountError(
            f"discount rate must be positive and exceed mu1={params.mu1}, got r={params.r}"
        )
    return params


def make_params(**kwargs) -> ModelParams:
    """Build and validate parameters, falling back to the reference set."""
    values = {**REFERENCE, **{k: v for k, v in kwargs.items() if v is not None}}
    unknown = set(values) - set(PARAM_KEYS)
    if unknown:
        raise TypeError(f"unknown model keys: {sorted(unknown)}")
    return validate(ModelParams(**{k: float(values[k]) for k in PARAM_KEYS}))


def reference_params() -> ModelParams:
    return make_params()


def payoff_slope(params: ModelParams, pi):
    """dg/dx = (1 - pi)/(r - mu0) + pi/(r - mu1)."""
    pi = np.asarray(pi, dtype=float)
    return (1.0 - pi) / (params.r - params.mu0) + pi / (params.r - params.mu1)


def payoff_g(params: ModelParams, x, pi):
    """Expected discounted profits from investing now, net of the sunk cost.

    Vectorised over ``x`` and ``pi``; scalars in, float out.
    """
    out = np.asarray(x, dtype=float) * payoff_slope(params, pi) - params.invest_cost
    return out if out.ndim else float(out)


def payoff_g_state(params: ModelParams, s: State) -> float:
    return payoff_g(params, s.x, s.pi)


def read_model_section(path: str | Path, section: str = "model") -> dict:
    """Read the flat key/value ``[model]`` section of an INI style config."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    if not cp.has_section(section):
        return {}
    out = {}
    for key, raw in cp.items(section):
        if key not in PARAM_KEYS:
            raise ParamError(f"unknown key {key!r} in [{section}]")
        out[key] = float(raw)
    return out
