"""Investment boundary: curve representation, projection and the Monte-Carlo fixed point."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import isotonic_regression

from .closed_form import ClosedFormPack, lower_bound_b
from .model import ModelParams, payoff_slope
from .sampling import ExponentialSampler, McEstimate, RngStream

log = logging.getLogger(__name__)

MIN_SAMPLES = 10_000


class EstimateDegenerateError(RuntimeError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, report: "IterationReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class BoundaryCurve:
    """Piecewise-linear boundary on a belief grid from 0 to 1."""

    pi_grid: np.ndarray
    values: np.ndarray
    se: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.pi_grid, dtype=float)
        if g.ndim != 1 or g.size < 2 or g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
            raise ValueError("pi_grid must increase strictly from 0 to 1")
        if np.shape(self.values) != g.shape:
            raise ValueError("values must match pi_grid")

    def __call__(self, pi):
        return np.interp(pi, self.pi_grid, self.values)

    @property
    def size(self) -> int:
        return self.pi_grid.size

    @classmethod
    def from_function(cls, fn, m: int = 101) -> "BoundaryCurve":
        grid = np.linspace(0.0, 1.0, m)
        return cls(grid, np.asarray(fn(grid), dtype=float))

    @classmethod
    def lower_bound(cls, pack: ClosedFormPack, m: int = 101) -> "BoundaryCurve":
        return cls.from_function(lambda p: lower_bound_b(pack, p), m)

    @classmethod
    def constant(cls, level: float, m: int = 101) -> "BoundaryCurve":
        return cls.from_function(lambda p: np.full_like(p, level), m)


def class_m_violations(curve: BoundaryCurve, pack: ClosedFormPack, tol: float = 1e-9) -> list[str]:
    """Reasons why ``curve`` is outside the admissible class (empty if inside)."""
    v = curve.values
    out = []
    if np.any(np.diff(v) > tol):
        out.append("not non-increasing")
    if v.min() < pack.xstar1 - tol or v.max() > pack.xstar0 + tol:
        out.append("leaves [x1*, x0*]")
    if abs(v[-1] - pack.xstar1) > tol:
        out.append("value at pi=1 differs from x1*")
    if np.any(v < lower_bound_b(pack, curve.pi_grid) - tol):
        out.append("below the analytic lower bound")
    return out


def project(curve: BoundaryCurve, pack: ClosedFormPack) -> BoundaryCurve:
    """Map a noisy curve back into the admissible class.

    Clamp to [x1*, x0*], pin both endpoints, take the closest non-increasing
    sequence (pool adjacent violators) and finally lift onto the lower bound.
    """
    v = np.clip(np.asarray(curve.values, dtype=float), pack.xstar1, pack.xstar0)
    v[0] = pack.xstar0
    v[-1] = pack.xstar1
    if np.any(np.diff(v) > 0):
        v = isotonic_regression(v, increasing=False).x
    v = np.maximum(v, lower_bound_b(pack, curve.pi_grid))
    # pooling can move the pinned ends by rounding
    v[0] = pack.xstar0
    v[-1] = pack.xstar1
    return replace(curve, values=v)


@dataclass
class IterationReport:
    iterations: int = 0
    sup_change_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    samples_per_node: int = 0
    tolerance: float = float("nan")
    contraction: float = float("nan")
    error_bound: float = float("nan")
    converged: bool = False
    seconds: float = 0.0


def _node_residuals(params: ModelParams, curve: BoundaryCurve, sampler: ExponentialSampler, workers: int = 1):
    """(1/r) E[(X_xi - rI) 1{X_xi <= a(Pi_xi)}] started at (a(pi), pi) for every node."""
    ri = params.r * params.invest_cost

    def one(j):
        pi = float(curve.pi_grid[j])
        _, x, belief = sampler.at(float(curve.values[j]), pi)
        inside = x <= curve(belief)
        vals = np.where(inside, x - ri, 0.0) / params.r
        return McEstimate.from_samples(vals)

    idx = range(curve.size)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, idx))
    return [one(j) for j in idx]


def integral_residual(
    params: ModelParams, curve: BoundaryCurve, pi: float, n_samples: int, rng: RngStream
) -> McEstimate:
    """Estimate the integral equation's left side started at (a(pi), pi)."""
    sampler = ExponentialSampler(params, rng, n_samples)
    ri = params.r * params.invest_cost
    _, x, belief = sampler.at(float(curve(pi)), pi)
    vals = np.where(x <= curve(belief), x - ri, 0.0) / params.r
    return McEstimate.from_samples(vals)


def residual_profile(
    params: ModelParams, curve: BoundaryCurve, n_samples: int, rng: RngStream, workers: int = 1
) -> list[McEstimate]:
    """integral_residual at every grid node, sharing one set of draws."""
    return _node_residuals(params, curve, ExponentialSampler(params, rng, n_samples), workers)


def _psi_step(params, pack, curve, sampler, workers):
    res = _node_residuals(params, curve, sampler, workers)
    slope = payoff_slope(params, curve.pi_grid)
    mean = np.array([e.mean for e in res])
    se = np.array([e.std_error for e in res])
    update = mean / slope
    update_se = se / slope
    limit = 0.1 * (pack.xstar0 - pack.xstar1)
    if np.any(update_se > limit):
        j = int(np.argmax(update_se))
        raise EstimateDegenerateError(
            f"update standard error {update_se[j]:.3g} at pi={curve.pi_grid[j]:.3g} "
            f"exceeds {limit:.3g}; increase n_samples"
        )
    raw = BoundaryCurve(curve.pi_grid, curve.values - update, update_se)
    return project(raw, pack), res


def psi_apply(
    params: ModelParams,
    curve: BoundaryCurve,
    n_samples: int,
    rng: RngStream,
    workers: int = 1,
    sampler: ExponentialSampler | None = None,
) -> BoundaryCurve:
    """One application of the fixed-point map, followed by projection.

    Each node moves by minus its integral-equation residual divided by the
    payoff slope dg/dx at that belief.
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_SAMPLES}")
    pack = ClosedFormPack.build(params)
    sampler = sampler or ExponentialSampler(params, rng, n_samples)
    new, _ = _psi_step(params, pack, curve, sampler, workers)
    return new


def default_tolerance(pack: ClosedFormPack, update_se) -> float:
    return max(1e-3 * pack.xstar0, 2.0 * float(np.max(update_se)))


def _contraction_estimate(changes: list, window: int = 3) -> float:
    """Largest recent ratio of successive plain-step sizes, as a contraction factor."""
    c = np.asarray(changes[-(window + 1):], dtype=float)
    if c.size < 2:
        return float("nan")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = c[1:] / c[:-1]
    ratios = ratios[np.isfinite(ratios)]
    return float(ratios.max()) if ratios.size else 0.0


def _anderson_step(xs: list, fs: list) -> np.ndarray:
    """Type-II Anderson mixing from iterates ``xs`` and their plain steps ``fs``."""
    f = fs[-1]
    if len(xs) < 2:
        return xs[-1] + f
    dx = np.diff(np.array(xs), axis=0).T
    df = np.diff(np.array(fs), axis=0).T
    gamma = np.linalg.lstsq(df, f, rcond=None)[0]
    return xs[-1] + f - (dx + df) @ gamma


def fixed_point_solve(
    params: ModelParams,
    init: BoundaryCurve | None = None,
    tol: float | None = None,
    max_iter: int = 100,
    n_samples: int = 1_000_000,
    rng: RngStream | None = None,
    workers: int = 1,
    m: int = 101,
    warmup: int = 3,
    depth: int = 5,
) -> tuple[BoundaryCurve, IterationReport]:
    """Iterate the fixed-point map from ``init`` (default: the lower bound).

    The same draws are reused at every iteration and every node, so the map
    is deterministic and the stopping rule sees its contraction rather than
    resampling noise. The first ``warmup`` steps are plain iterations and
    give an estimate q of the contraction factor; later steps use Anderson
    mixing over the last ``depth`` iterates (``depth=0`` keeps plain steps).
    A small step alone does not mean a small error when q is close to 1, so
    the solve stops once step * q / (1 - q), a bound on the distance to the
    fixed point, falls below ``tol``. ``sup_change_history`` records the
    plain step from each iterate.
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be at least {MIN_SAMPLES}")
    pack = ClosedFormPack.build(params)
    curve = project(init if init is not None else BoundaryCurve.lower_bound(pack, m), pack)
    rng = rng or RngStream(0)
    sampler = ExponentialSampler(params, rng, n_samples)
    report = IterationReport(samples_per_node=n_samples)
    start = time.perf_counter()
    xs, fs = [], []
    q = float("nan")
    for it in range(1, max_iter + 1):
        new, res = _psi_step(params, pack, curve, sampler, workers)
        step = new.values - curve.values
        change = float(np.max(np.abs(step)))
        report.iterations = it
        report.sup_change_history.append(change)
        report.residual_history.append(float(max(abs(e.mean) for e in res)))
        report.tolerance = tol if tol is not None else default_tolerance(pack, new.se)
        if it <= warmup + 1:
            q = _contraction_estimate(report.sup_change_history)
        report.contraction = q
        if change == 0.0:
            bound = 0.0
        elif np.isfinite(q) and q < 1.0:
            bound = change * q / (1.0 - q)
        else:
            bound = float("inf")
        report.error_bound = bound
        log.debug("iteration %d: step %.3g, q %.3g, bound %.3g (tol %.3g)", it, change, q, bound, report.tolerance)
        if bound < report.tolerance:
            curve = new
            report.converged = True
            break
        xs.append(curve.values.copy())
        fs.append(step)
        xs, fs = xs[-(depth + 1):], fs[-(depth + 1):]
        if depth > 0 and it > warmup:
            nxt = BoundaryCurve(curve.pi_grid, _anderson_step(xs, fs), new.se)
            curve = project(nxt, pack)
        else:
            curve = new
    report.seconds = time.perf_counter() - start
    if not report.converged:
        raise NonConvergenceError(
            f"no convergence after {max_iter} iterations (last change {report.sup_change_history[-1]:.3g})",
            report,
        )
    return curve, report


def lipschitz_excess(curve: BoundaryCurve) -> np.ndarray:
    """Drop between adjacent interior nodes minus the admissible drop.

    For interior beliefs pi < q a boundary satisfies
    0 <= b(pi) - b(q) <= b(pi) (q - pi) / (q (1 - pi)) (1 - b(q)/b(0)).
    Positive entries mark pairs that violate the bound.
    """
    p, v = curve.pi_grid, curve.values
    lo, hi = p[1:-2], p[2:-1]
    bound = v[1:-2] * (hi - lo) / (hi * (1 - lo)) * (1 - v[2:-1] / v[0])
    return (v[1:-2] - v[2:-1]) - bound
