"""Value estimates from a boundary, strategy payoffs and the value of information."""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from .belief import learning_rate, posterior_from_log_ratio
from .boundary import BoundaryCurve
from .closed_form import ClosedFormPack, known_drift_value
from .model import ModelParams, State, payoff_g, validate
from .sampling import ExponentialSampler, McEstimate, RngStream, first_entry, truncation_bound


def _complement(params: ModelParams, curve: BoundaryCurve, sampler: ExponentialSampler, x: float, pi: float):
    """Samples of (1/r)(X_xi - rI) 1{X_xi < curve(Pi_xi)} started at (x, pi)."""
    _, x_xi, belief = sampler.at(x, pi)
    return np.where(x_xi < curve(belief), x_xi - params.r * params.invest_cost, 0.0) / params.r


class _LogThreshold:
    """Inverse of l -> ln b(expit l) - l / a, a strictly decreasing map.

    Given xi, both X_xi and the log-odds at xi increase with the Gaussian
    log increment s, so {X_xi < b(Pi_xi)} is {s < s_star} for one s_star
    that this map yields in closed form up to interpolation.
    """

    def __init__(self, params: ModelParams, curve: BoundaryCurve, half_width: float = 50.0, n: int = 20001):
        self.a = learning_rate(params)
        self.lo, self.hi = -half_width, half_width
        ell = np.linspace(self.lo, self.hi, n)
        f = np.log(curve(expit(ell))) - ell / self.a
        self.ell, self.f = ell, f
        self.log_b0, self.log_b1 = float(np.log(curve(0.0))), float(np.log(curve(1.0)))

    def ell_star(self, rhs: np.ndarray) -> np.ndarray:
        # beyond the table the boundary is flat at b(0) or b(1)
        out = np.interp(rhs, self.f[::-1], self.ell[::-1])
        out = np.where(rhs > self.f[0], (self.log_b0 - rhs) * self.a, out)
        return np.where(rhs < self.f[-1], (self.log_b1 - rhs) * self.a, out)


def _partial(params: ModelParams, mu: float, xi, x: float, s_star):
    """E[(x e^s - rI) 1{s < s_star} | xi] for s ~ N((mu - sigma^2/2) xi, sigma^2 xi)."""
    sd = params.sigma * np.sqrt(xi)
    z = (s_star - (mu - 0.5 * params.sigma**2) * xi) / sd
    return x * np.exp(mu * xi) * norm.cdf(z - sd) - params.r * params.invest_cost * norm.cdf(z)


class ConditionalSampler:
    """Exponential times shared across start states, Gaussian part integrated out.

    Conditioning on xi (and averaging over theta with weights 1 - pi, pi)
    turns each complement sample into a smooth function of the start state,
    so estimates at neighbouring x differ by far less than their SE.
    """

    def __init__(self, params: ModelParams, curve: BoundaryCurve, rng: RngStream, n: int):
        self.params, self.curve = params, curve
        self.pack = ClosedFormPack.build(params)
        self.xi = rng.draws(n)[1] / params.r
        self.table = _LogThreshold(params, curve)
        self.half = 0.5 * (params.sigma**2 - params.mu1 - params.mu0)

    def with_curve(self, curve: BoundaryCurve) -> "ConditionalSampler":
        """Same exponential times, different boundary."""
        other = copy.copy(self)
        other.curve, other.table = curve, _LogThreshold(self.params, curve)
        return other

    def s_star(self, x: float, pi: float) -> np.ndarray:
        if pi <= 0.0 or pi >= 1.0:
            return np.full(self.xi.shape, math.log(float(self.curve(pi)) / x))
        l0 = float(logit(pi))
        rhs = math.log(x) - l0 / self.table.a - self.half * self.xi
        return (self.table.ell_star(rhs) - l0) / self.table.a - self.half * self.xi

    def _mix(self, x: float, pi: float, s0, s1) -> np.ndarray:
        p = self.params
        out = np.zeros(self.xi.shape)
        if pi < 1.0:
            out += (1.0 - pi) * _partial(p, p.mu0, self.xi, x, s0)
        if pi > 0.0:
            out += pi * _partial(p, p.mu1, self.xi, x, s1)
        return out / p.r

    def complement(self, x: float, pi: float) -> np.ndarray:
        """Samples with mean (1/r) E[(X_xi - rI) 1{X_xi < b(Pi_xi)}]."""
        s = self.s_star(x, pi)
        return self._mix(x, pi, s, s)

    def delta(self, x: float, pi: float) -> np.ndarray:
        """Samples with mean V_bar - V: the same complement taken against x*_theta."""
        s = self.s_star(x, pi)
        own = self._mix(x, pi, s, s)
        full = self._mix(x, pi, math.log(self.pack.xstar0 / x), math.log(self.pack.xstar1 / x))
        return own - full


def value_from_boundary(
    params: ModelParams,
    curve: BoundaryCurve,
    s: State,
    n_samples: int,
    rng: RngStream,
    sampler: ExponentialSampler | None = None,
) -> McEstimate:
    """V(x, pi) for the rule 'invest once X reaches curve(Pi)'.

    With xi ~ Exp(r) independent, V = (1/r) E[(X_xi - rI) 1{X_xi >= b(Pi_xi)}].
    X_xi has a power tail with index beta_i, so that integrand has infinite
    variance for typical parameters. Since (1/r) E[X_xi - rI] = g(x, pi)
    exactly, the estimator below uses the bounded complement
    V = g - (1/r) E[(X_xi - rI) 1{X_xi < b(Pi_xi)}] instead.
    """
    sampler = sampler or ExponentialSampler(params, rng, n_samples)
    est = McEstimate.from_samples(_complement(params, curve, sampler, s.x, s.pi))
    return est.shift(float(payoff_g(params, s.x, s.pi)), -1.0)


def full_info_value(params: ModelParams, s: State) -> float:
    """(1 - pi) V(x, 0) + pi V(x, 1), the value if theta were revealed now."""
    pack = ClosedFormPack.build(params)
    v0 = known_drift_value(pack, 0, s.x)
    v1 = known_drift_value(pack, 1, s.x)
    if s.pi <= 0.0:
        return float(v0)
    if s.pi >= 1.0:
        return float(v1)
    return float((1.0 - s.pi) * v0 + s.pi * v1)


@dataclass
class VoiSurface:
    """Value of information on an x grid (columns) and belief list (rows)."""

    x_grid: np.ndarray
    pi_grid: np.ndarray
    v_bar: np.ndarray
    v: np.ndarray
    v_se: np.ndarray
    delta: np.ndarray
    delta_se: np.ndarray
    boundary_se: np.ndarray | None = None

    def argmax_x(self) -> np.ndarray:
        """x location of the largest difference for each belief."""
        return self.x_grid[np.argmax(self.delta, axis=1)]

    def max_delta(self) -> float:
        return float(self.delta.max())


def value_of_information(
    params: ModelParams,
    curve: BoundaryCurve,
    x_grid,
    pi_list,
    n_samples: int,
    rng: RngStream,
) -> VoiSurface:
    """Delta = V_bar - V over a grid; one set of draws shared by every grid point.

    Each known-drift value has the same complement form with stopping set
    {x >= x*_theta}, so Delta is the mean gap between two complements. Both
    are computed by ConditionalSampler; V is reported as V_bar - Delta.

    The estimator is much more precise than a Monte-Carlo boundary, so when
    the curve carries node standard errors their effect is propagated: Delta
    is recomputed on the same draws with the interior nodes moved up and down
    by one SE, and half the spread is added in quadrature to the sampling SE.
    """
    validate(params)
    x_grid = np.asarray(x_grid, dtype=float)
    pi_grid = np.asarray(pi_list, dtype=float)
    if np.any(x_grid <= 0) or np.any(x_grid > curve(0.0) * (1 + 1e-12)):
        raise ValueError("x_grid must lie in (0, b(0)]")
    sampler = ConditionalSampler(params, curve, rng, n_samples)
    shifted = [sampler.with_curve(c) for c in _se_band(curve)]
    shape = (pi_grid.size, x_grid.size)
    v, se, vbar, bse = np.empty(shape), np.empty(shape), np.empty(shape), np.zeros(shape)
    for j, pi in enumerate(pi_grid):
        for i, x in enumerate(x_grid):
            s = State(float(x), float(pi))
            e = McEstimate.from_samples(sampler.delta(s.x, s.pi))
            vbar[j, i] = full_info_value(params, s)
            v[j, i], se[j, i] = vbar[j, i] - e.mean, e.std_error
            if shifted:
                hi, lo = (float(np.mean(c.delta(s.x, s.pi))) for c in shifted)
                bse[j, i] = 0.5 * abs(hi - lo)
    total = np.hypot(se, bse)
    return VoiSurface(x_grid, pi_grid, vbar, v, total, vbar - v, total.copy(), bse if shifted else None)


def _se_band(curve: BoundaryCurve) -> list[BoundaryCurve]:
    """The curve with interior nodes moved up and down by their SE; empty without SEs."""
    if curve.se is None:
        return []
    step = np.array(curve.se, dtype=float)
    step[0] = step[-1] = 0.0
    if not np.any(step > 0):
        return []
    return [BoundaryCurve(curve.pi_grid, curve.values + step), BoundaryCurve(curve.pi_grid, curve.values - step)]


def default_horizon(params: ModelParams) -> float:
    return 10.0 / (params.r - params.mu1)


def strategy_payoff(
    params: ModelParams,
    s: State,
    curve: BoundaryCurve,
    dt: float = 1e-2,
    horizon: float | None = None,
    n_samples: int = 20_000,
    rng: RngStream | None = None,
    strides: tuple[int, ...] = (1,),
):
    """Path-simulated E[exp(-r tau) g(X_tau, Pi_tau)] for tau the first entry into {x >= curve(pi)}.

    An estimator of the payoff of one feasible rule that does not go through
    the exponential-time representation. Paths still running at ``horizon``
    contribute zero; while running, X stays below curve(0), so the bias is
    at most exp(-r T) g(curve(0), 1). Returns a dict keyed by stride when
    several monitoring strides are given.
    """
    validate(params)
    horizon = default_horizon(params) if horizon is None else horizon
    rng = rng or RngStream(0)
    bias = truncation_bound(params, horizon, max(float(payoff_g(params, curve(0.0), 1.0)), 0.0))
    if bias > 1e-3:
        warnings.warn(f"horizon truncation may bias the payoff by up to {bias:.2e}", stacklevel=2)
    log_curve = lambda pi: np.log(curve(pi))  # noqa: E731
    res = first_entry(
        params, s, lambda t, lx, pi: lx >= log_curve(pi), dt, horizon, rng, n_samples, strides
    )
    out = {}
    for k in strides:
        hit = res.hit[k]
        t = np.where(hit, res.time[k], 0.0)
        lx = np.where(hit, res.log_x[k], math.log(s.x))
        pi_tau = posterior_from_log_ratio(params, t, s.pi, lx - math.log(s.x))
        pay = np.where(hit, np.exp(-params.r * t) * payoff_g(params, np.exp(lx), pi_tau), 0.0)
        out[k] = McEstimate.from_samples(pay)
    return out[strides[0]] if len(strides) == 1 else out


def monitoring_allowance(params: ModelParams, value: float, dt: float) -> float:
    """One-sided slack for checking the boundary only every ``dt``.

    Discrete monitoring overshoots a level by about 0.58 sigma sqrt(dt) in
    log terms; the allowance charges the full sigma sqrt(dt) at the smaller
    exponent beta_1, which shrinks like sqrt(dt).
    """
    pack = ClosedFormPack.build(params)
    return abs(value) * (1.0 - math.exp(-pack.beta1 * params.sigma * math.sqrt(dt)))
