"""Posterior probability of the high drift given the observed profit level.

Because the observation is a GBM whose two candidate drifts share the same
volatility, the filter has a closed form: the belief at time t depends on the
path only through the current profit level. Everything here works in log-odds
to stay finite for extreme profit ratios.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .model import ModelParams

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class FilterInput:
    t: float
    x0: float
    pi0: float
    y: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("elapsed time must be non-negative")
        if not (self.x0 > 0 and self.y > 0):
            raise ValueError("profit levels must be positive")
        if not 0.0 <= self.pi0 <= 1.0:
            raise ValueError("prior must lie in [0, 1]")


def learning_rate(params: ModelParams) -> float:
    """(mu1 - mu0) / sigma^2, the exponent of the likelihood ratio."""
    return (params.mu1 - params.mu0) / params.sigma**2


def log_likelihood_ratio(params: ModelParams, t, log_ratio):
    """log L for an observed log profit ratio ``log(y / x0)`` after time ``t``."""
    half = 0.5 * (params.sigma**2 - params.mu1 - params.mu0)
    return learning_rate(params) * (np.asarray(log_ratio) + half * np.asarray(t))


def posterior_from_log_ratio(params: ModelParams, t, pi0, log_ratio):
    """Vectorised belief update from log(y/x0); priors 0 and 1 are absorbing."""
    pi0 = np.asarray(pi0, dtype=float)
    llr = log_likelihood_ratio(params, t, log_ratio)
    with np.errstate(divide="ignore"):
        z = logit(pi0) + llr
    out = np.where(pi0 <= 0.0, 0.0, np.where(pi0 >= 1.0, 1.0, expit(z)))
    return out if out.ndim else float(out)


def posterior_f(params: ModelParams, t, x0, pi0, y):
    """Belief that the drift is mu1 at time ``t`` given profit ``y`` and start ``x0``."""
    log_ratio = np.log(np.asarray(y, dtype=float)) - np.log(np.asarray(x0, dtype=float))
    return posterior_from_log_ratio(params, t, pi0, log_ratio)


def posterior(params: ModelParams, inp: FilterInput) -> float:
    return float(posterior_f(params, inp.t, inp.x0, inp.pi0, inp.y))


def _log_lognormal_density(params: ModelParams, mu: float, t, x0, y):
    ld = np.longdouble
    s2t = ld(params.sigma) ** 2 * t
    z = np.log(y) - np.log(x0) - (ld(mu) - ld(params.sigma) ** 2 / 2) * t
    return -z * z / (2 * s2t) - np.log(y) - (ld(LOG_2PI) + np.log(s2t)) / 2


def bayes_oracle(params: ModelParams, t, x0, pi0, y):
    """Posterior from the two lognormal transition densities and Bayes' rule.

    Independent of the closed-form filter; only defined for ``t > 0``.
    Short horizons make both log densities large and nearly equal, so the
    arithmetic runs in extended precision.
    """
    ld = np.longdouble
    t = np.asarray(t, dtype=ld)
    if np.any(t <= 0):
        raise ValueError("transition densities are degenerate at t = 0")
    pi0 = np.asarray(pi0, dtype=ld)
    x0 = np.asarray(x0, dtype=ld)
    y = np.asarray(y, dtype=ld)
    l0 = _log_lognormal_density(params, params.mu0, t, x0, y)
    l1 = _log_lognormal_density(params, params.mu1, t, x0, y)
    with np.errstate(divide="ignore"):
        a = np.log1p(-pi0) + l0
        b = np.log(pi0) + l1
    out = np.exp(b - np.logaddexp(a, b)).astype(float)
    out = np.where(pi0 <= 0.0, 0.0, np.where(pi0 >= 1.0, 1.0, out))
    return out if out.ndim else float(out)


def innovation_increment(params: ModelParams, pi, dlogx, dt):
    """Increment of the observation Brownian motion implied by a log profit step."""
    drift = params.mu0 + np.asarray(pi) * (params.mu1 - params.mu0) - 0.5 * params.sigma**2
    return (np.asarray(dlogx) - drift * dt) / params.sigma


def sde_belief_step(params: ModelParams, pi, x, dW, dt):
    """One Euler step of the driftless belief SDE, clipped to [0, 1].

    ``x`` and ``dt`` are unused by the belief dynamics itself; they are kept
    so the call mirrors a joint (profit, belief) step. Only for cross-checks.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pi = np.asarray(pi, dtype=float)
    kappa = (params.mu1 - params.mu0) / params.sigma
    out = np.clip(pi + kappa * pi * (1.0 - pi) * np.asarray(dW), 0.0, 1.0)
    return out if out.ndim else float(out)


def euler_belief_path(params: ModelParams, pi0: float, log_x: np.ndarray, dt: float) -> np.ndarray:
    """Euler-integrate the belief along observed log profits ``log_x[..., n]``."""
    steps = log_x.shape[-1] - 1
    out = np.empty_like(log_x)
    out[..., 0] = pi0
    pi = np.full(log_x.shape[:-1], pi0, dtype=float)
    for n in range(steps):
        dw = innovation_increment(params, pi, log_x[..., n + 1] - log_x[..., n], dt)
        pi = sde_belief_step(params, pi, None, dw, dt)
        out[..., n + 1] = pi
    return out
