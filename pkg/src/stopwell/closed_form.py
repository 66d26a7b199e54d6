"""Analytic quantities for the known-drift problems and the lower bound curve."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, payoff_g, validate


def _drift(params: ModelParams, which: int) -> float:
    if which not in (0, 1):
        raise ValueError(f"drift index must be 0 or 1, got {which!r}")
    return params.mu1 if which else params.mu0


def beta_residual(params: ModelParams, which: int, beta: float) -> float:
    mu = _drift(params, which)
    return 0.5 * params.sigma**2 * beta * (beta - 1.0) + mu * beta - params.r


def solve_beta(params: ModelParams, which: int) -> float:
    """Root above one of 1/2 s^2 b(b-1) + mu b - r = 0.

    The branch is picked so that no subtraction of nearly equal numbers
    happens, whatever the sign of ``mu - s^2/2``.
    """
    mu = _drift(params, which)
    a = 0.5 * params.sigma**2
    b = mu - a
    disc = math.sqrt(b * b + 4.0 * a * params.r)
    if b < 0:
        return (disc - b) / (2.0 * a)
    return 2.0 * params.r / (b + disc)


@dataclass(frozen=True)
class ClosedFormPack:
    beta0: float
    beta1: float
    xstar0: float
    xstar1: float
    params: ModelParams

    @classmethod
    def build(cls, params: ModelParams) -> "ClosedFormPack":
        validate(params)
        b0 = solve_beta(params, 0)
        b1 = solve_beta(params, 1)
        x0 = b0 / (b0 - 1.0) * (params.r - params.mu0) * params.invest_cost
        x1 = b1 / (b1 - 1.0) * (params.r - params.mu1) * params.invest_cost
        return cls(beta0=b0, beta1=b1, xstar0=x0, xstar1=x1, params=params)

    def beta(self, which: int) -> float:
        return self.beta1 if which else self.beta0

    def xstar(self, which: int) -> float:
        return self.xstar1 if which else self.xstar0


def threshold(pack: ClosedFormPack, which: int) -> float:
    """Investment threshold x*_i for the problem where mu_i is known."""
    return pack.xstar(which)


def threshold_alt(pack: ClosedFormPack, which: int) -> float:
    """Same threshold through (r + s^2 b_i / 2) I, which the quadratic implies."""
    p = pack.params
    return (p.r + 0.5 * p.sigma**2 * pack.beta(which)) * p.invest_cost


def known_drift_value(pack: ClosedFormPack, which: int, x):
    """Value function of the full-information problem with drift mu_i."""
    p = pack.params
    mu = _drift(p, which)
    xs = pack.xstar(which)
    beta = pack.beta(which)
    x = np.asarray(x, dtype=float)
    stop = x / (p.r - mu) - p.invest_cost
    wait = np.power(np.clip(x, 0.0, xs) / xs, beta) * (xs / (p.r - mu) - p.invest_cost)
    out = np.where(x >= xs, stop, wait)
    return out if out.ndim else float(out)


def lower_bound_b(pack: ClosedFormPack, pi):
    """Analytic lower bound for the investment boundary, decreasing in ``pi``."""
    p = pack.params
    pi = np.asarray(pi, dtype=float)
    b0, b1 = pack.beta0, pack.beta1
    num = b0 * (1.0 - pi) + b1 * pi
    den = (b0 - 1.0) * (1.0 - pi) / (p.r - p.mu0) + (b1 - 1.0) * pi / (p.r - p.mu1)
    out = num / den * p.invest_cost
    return out if out.ndim else float(out)


def delta_strategy_payoff_h(pack: ClosedFormPack, x, pi, delta):
    """Expected payoff of investing when profits first reach ``delta * x``.

    Uses E[exp(-r T)] = delta**(-beta_i) for the first passage time T of a
    GBM with drift mu_i to the level ``delta * x``. ``delta = 1`` gives g.
    """
    p = pack.params
    delta = np.asarray(delta, dtype=float)
    if np.any(delta < 1.0):
        raise ValueError("delta must be >= 1")
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=float)
    d0 = np.power(delta, -pack.beta0)
    d1 = np.power(delta, -pack.beta1)
    out = x * delta * (d0 * (1.0 - pi) / (p.r - p.mu0) + d1 * pi / (p.r - p.mu1)) - (
        d0 * (1.0 - pi) + d1 * pi
    ) * p.invest_cost
    return out if out.ndim else float(out)


def h_derivative_at_one(pack: ClosedFormPack, x, pi):
    """d h / d delta at delta = 1; non-positive exactly when x >= lower bound."""
    p = pack.params
    b0, b1 = pack.beta0, pack.beta1
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=float)
    out = x * ((1.0 - b0) * (1.0 - pi) / (p.r - p.mu0) + (1.0 - b1) * pi / (p.r - p.mu1)) + (
        b0 * (1.0 - pi) + b1 * pi
    ) * p.invest_cost
    return out if out.ndim else float(out)


def best_delta_payoff(pack: ClosedFormPack, x, pi, grid_max: float = 50.0, n: int = 4001):
    """sup over delta >= 1 of h(x, pi, delta), located on a log-spaced grid.

    Returns ``(payoff, delta)``. A cheap analytic lower bound on the value.
    """
    deltas = np.exp(np.linspace(0.0, math.log(grid_max), n))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pi = np.broadcast_to(np.asarray(pi, dtype=float), x.shape)
    vals = delta_strategy_payoff_h(pack, x[:, None], pi[:, None], deltas[None, :])
    k = np.argmax(vals, axis=1)
    best = vals[np.arange(x.size), k]
    g = payoff_g(pack.params, x, pi)
    best = np.maximum(best, g)
    return best, deltas[k]


def thresholds_table(pack: ClosedFormPack, n_pi: int = 11) -> list[tuple[float, float]]:
    grid = np.linspace(0.0, 1.0, n_pi)
    return list(zip(grid.tolist(), np.atleast_1d(lower_bound_b(pack, grid)).tolist()))
