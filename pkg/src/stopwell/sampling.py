"""Random streams, exact sampling at an exponential time, and path simulation.

Draws are organised in fixed-size blocks. Block ``k`` of stream
``(seed, stream_id)`` is generated by a Philox generator keyed on
``(seed, stream_id, k)``, so a sample's value depends only on its index and
never on how the work is split.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .belief import log_likelihood_ratio, posterior_from_log_ratio
from .model import ModelParams, State

SEED_ENV = "STOPWELL_SEED"
DEFAULT_SEED = 20240607
BLOCK = 1 << 16

# stream ids reserved per purpose, so that solver and checker never share draws
STREAM_SOLVE = 1
STREAM_RESIDUAL = 2
STREAM_VALUE = 3
STREAM_PATHS = 4


def resolve_seed(flag: int | None = None) -> int:
    """Explicit flag, else the environment override, else the default seed."""
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env:
        return int(env)
    return DEFAULT_SEED


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self, block: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, block))
        return np.random.Generator(np.random.Philox(ss))

    def sub(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def draws(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Uniforms, unit exponentials and standard normals for samples 0..n-1."""
        us, es, zs = [], [], []
        for k in range(math.ceil(n / BLOCK)):
            m = min(BLOCK, n - k * BLOCK)
            gen = self.generator(k)
            block = gen.random(BLOCK), gen.standard_exponential(BLOCK), gen.standard_normal(BLOCK)
            us.append(block[0][:m])
            es.append(block[1][:m])
            zs.append(block[2][:m])
        return np.concatenate(us), np.concatenate(es), np.concatenate(zs)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int

    @classmethod
    def from_samples(cls, values: np.ndarray) -> "McEstimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(values.mean()), se, n)

    def shift(self, offset: float, scale: float = 1.0) -> "McEstimate":
        return McEstimate(offset + scale * self.mean, abs(scale) * self.std_error, self.n)

    def within(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - target) <= k * self.std_error + slack


@dataclass(frozen=True)
class SampleOne:
    """A batch of exact draws of (theta, xi, X_xi, Pi_xi)."""

    theta: np.ndarray
    xi: np.ndarray
    x_xi: np.ndarray
    pi_xi: np.ndarray


class ExponentialSampler:
    """Shared draws of (theta, xi, log X_xi / x) reusable from any start state.

    The log profit ratio and the log likelihood ratio at the exponential time
    do not depend on the starting level, so they are computed once per hidden
    state. Starting from (x, pi) only rescales X and shifts the log-odds.
    """

    def __init__(self, params: ModelParams, rng: RngStream, n: int):
        self.params = params
        self.n = n
        u, e, z = rng.draws(n)
        xi = e / params.r
        s0 = (params.mu0 - 0.5 * params.sigma**2) * xi + params.sigma * np.sqrt(xi) * z
        s1 = s0 + (params.mu1 - params.mu0) * xi
        self.u = u
        self.xi = xi
        self.growth = (np.exp(s0), np.exp(s1))
        self.llr = (log_likelihood_ratio(params, xi, s0), log_likelihood_ratio(params, xi, s1))

    def theta(self, pi: float) -> np.ndarray:
        return self.u < pi

    def at(self, x: float, pi: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (theta, X_xi, Pi_xi) for the start state (x, pi)."""
        th = self.theta(pi)
        growth = np.where(th, self.growth[1], self.growth[0])
        if pi <= 0.0:
            belief = np.zeros(self.n)
        elif pi >= 1.0:
            belief = np.ones(self.n)
        else:
            belief = expit(logit(pi) + np.where(th, self.llr[1], self.llr[0]))
        return th, x * growth, belief


def sample_at_exponential_time(params: ModelParams, s0: State, rng: RngStream, n: int = 1) -> SampleOne:
    """Exact draws of the state at an independent Exp(r) time."""
    sampler = ExponentialSampler(params, rng, n)
    th, x_xi, pi_xi = sampler.at(s0.x, s0.pi)
    return SampleOne(theta=th.astype(np.int8), xi=sampler.xi, x_xi=x_xi, pi_xi=pi_xi)


@dataclass(frozen=True)
class PathSample:
    theta: np.ndarray
    times: np.ndarray
    x_path: np.ndarray
    w_path: np.ndarray

    def beliefs(self, params: ModelParams, pi0: float) -> np.ndarray:
        log_ratio = np.log(self.x_path / self.x_path[:, :1])
        return posterior_from_log_ratio(params, self.times[None, :], pi0, log_ratio)


def simulate_path(
    params: ModelParams, s0: State, horizon: float, dt: float, rng: RngStream, n_paths: int = 1
) -> PathSample:
    """Paths on a uniform grid using exact lognormal steps."""
    if dt <= 0 or horizon < dt:
        raise ValueError("need dt > 0 and horizon >= dt")
    steps = int(round(horizon / dt))
    gen = rng.generator()
    theta = gen.random(n_paths) < s0.pi
    dw = gen.standard_normal((n_paths, steps)) * math.sqrt(dt)
    w = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(dw, axis=1)], axis=1)
    times = np.arange(steps + 1) * dt
    mu = np.where(theta, params.mu1, params.mu0)
    logx = math.log(s0.x) + (mu[:, None] - 0.5 * params.sigma**2) * times[None, :] + params.sigma * w
    return PathSample(theta=theta.astype(np.int8), times=times, x_path=np.exp(logx), w_path=w)


@dataclass
class FirstEntry:
    """Per-path outcome of a first-entry rule, one record per monitoring stride."""

    theta: np.ndarray
    hit: dict
    time: dict
    log_x: dict


def first_entry(
    params: ModelParams,
    s0: State,
    stop_rule,
    dt: float,
    horizon: float,
    rng: RngStream,
    n_paths: int,
    strides: tuple[int, ...] = (1,),
    chunk: int = 256,
) -> FirstEntry:
    """Simulate until ``stop_rule(t, log_x, pi)`` first holds on a monitoring grid.

    ``strides`` lists monitoring intervals in units of ``dt``; all of them are
    applied to the same paths, so coarser monitoring can only stop later.
    Paths that never stop before ``horizon`` are reported with ``hit=False``.
    ``stop_rule`` must be elementwise; it is called on (paths, steps) blocks
    of ``chunk`` steps at a time.
    """
    steps = int(round(horizon / dt))
    gen = rng.generator()
    theta = gen.random(n_paths) < s0.pi
    drift = (np.where(theta, params.mu1, params.mu0) - 0.5 * params.sigma**2) * dt
    vol = params.sigma * math.sqrt(dt)
    x0 = math.log(s0.x)
    logx = np.full(n_paths, x0)
    hit = {s: np.zeros(n_paths, dtype=bool) for s in strides}
    t_hit = {s: np.full(n_paths, np.inf) for s in strides}
    x_hit = {s: np.full(n_paths, np.nan) for s in strides}

    def check(stride, idx, t, lx):
        """t: (k,) times, lx: (len(idx), k) log profits at those times."""
        todo = ~hit[stride][idx]
        if not todo.any():
            return
        rows = idx[todo]
        lx = lx[todo]
        pi = posterior_from_log_ratio(params, t[None, :], s0.pi, lx - x0)
        ok = np.asarray(stop_rule(t[None, :], lx, pi), dtype=bool)
        any_ok = ok.any(axis=1)
        first = ok.argmax(axis=1)
        sel = rows[any_ok]
        col = first[any_ok]
        hit[stride][sel] = True
        t_hit[stride][sel] = t[col]
        x_hit[stride][sel] = lx[any_ok, col]

    alive = np.arange(n_paths)
    for s in strides:
        check(s, alive, np.zeros(1), logx[alive, None])
    done = np.logical_and.reduce([hit[s] for s in strides])
    alive = alive[~done]
    n0 = 0
    while n0 < steps and alive.size:
        k = min(chunk, steps - n0)
        incr = drift[alive, None] + vol * gen.standard_normal((alive.size, k))
        block = logx[alive, None] + np.cumsum(incr, axis=1)
        n = n0 + 1 + np.arange(k)
        for s in strides:
            cols = n % s == 0
            if cols.any():
                check(s, alive, n[cols] * dt, block[:, cols])
        logx[alive] = block[:, -1]
        n0 += k
        done = np.logical_and.reduce([hit[s][alive] for s in strides])
        alive = alive[~done]
    return FirstEntry(theta=theta, hit=hit, time=t_hit, log_x=x_hit)


def truncation_bound(params: ModelParams, horizon: float, scale: float = 1.0) -> float:
    return math.exp(-params.r * horizon) * scale


def first_passage_discounted(
    params: ModelParams,
    s0: State,
    delta: float,
    dt: float,
    horizon: float,
    rng: RngStream,
    n_paths: int = 20000,
    strides: tuple[int, ...] = (1,),
):
    """Monte-Carlo E[exp(-r T)] for T the first time X reaches ``delta * x0``.

    Returns one McEstimate, or a dict keyed by stride when several strides
    are requested. Unstopped paths count as zero.
    """
    if delta < 1.0:
        raise ValueError("delta must be >= 1")
    bound = truncation_bound(params, horizon)
    if bound > 1e-3:
        warnings.warn(f"horizon truncation may bias the estimate by up to {bound:.2e}", stacklevel=2)
    level = math.log(s0.x * delta)
    res = first_entry(
        params, s0, lambda t, lx, pi: lx >= level - 1e-14, dt, horizon, rng, n_paths, strides
    )
    out = {}
    for s in strides:
        disc = np.where(res.hit[s], np.exp(-params.r * np.where(res.hit[s], res.time[s], 0.0)), 0.0)
        out[s] = McEstimate.from_samples(disc)
    return out[strides[0]] if len(strides) == 1 else out


def discretization_allowance(beta: float, sigma: float, dt: float, exact: float) -> float:
    """One-sided slack for discretely monitored first passage.

    Discrete monitoring behaves like continuous monitoring of a level raised
    by roughly exp(0.5826 sigma sqrt(dt)); the allowance uses the factor 1.0
    in place of 0.5826 to stay conservative.
    """
    return exact * (1.0 - math.exp(-beta * sigma * math.sqrt(dt)))
