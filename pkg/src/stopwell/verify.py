"""Quick invariant suite behind the ``verify`` subcommand.

Each check returns (ok, detail). Sample sizes are modest so the whole suite
runs in well under a minute; the test suite covers the same ground at full
size.
"""

from __future__ import annotations

import numpy as np

from .belief import bayes_oracle, posterior_f
from .boundary import BoundaryCurve, class_m_violations, fixed_point_solve
from .closed_form import (
    ClosedFormPack,
    beta_residual,
    delta_strategy_payoff_h,
    known_drift_value,
    lower_bound_b,
    threshold_alt,
)
from .model import ModelParams, State
from .pde import OracleGrid, extract_boundary, solve_obstacle
from .sampling import STREAM_RESIDUAL, STREAM_SOLVE, STREAM_VALUE, ExponentialSampler, RngStream
from .valuation import full_info_value, value_from_boundary


def check_closed_form(params: ModelParams, rng: RngStream):
    pack = ClosedFormPack.build(params)
    res = max(abs(beta_residual(params, i, pack.beta(i))) for i in (0, 1))
    agree = max(abs(threshold_alt(pack, i) - pack.xstar(i)) for i in (0, 1))
    lb = lower_bound_b(pack, np.linspace(0, 1, 101))
    ok = (
        res < 1e-12
        and pack.beta0 > pack.beta1 > 1
        and pack.xstar0 > pack.xstar1 >= params.r * params.invest_cost
        and agree < 1e-10
        and np.all(np.diff(lb) < 0)
    )
    return ok, f"beta residual {res:.1e}, threshold agreement {agree:.1e}"


def check_filter(params: ModelParams, rng: RngStream):
    gen = rng.generator()
    n = 1000
    t = gen.uniform(0.01, 20, n)
    x0 = gen.uniform(1, 20, n)
    pi0 = gen.uniform(0.01, 0.99, n)
    y = x0 * np.exp(gen.normal(0, 1, n))
    a = posterior_f(params, t, x0, pi0, y)
    b = bayes_oracle(params, t, x0, pi0, y)
    err = float(np.max(np.abs(a - b) / np.maximum(b, 1e-300)))
    return err < 1e-12, f"max relative gap {err:.1e}"


def check_martingale(params: ModelParams, rng: RngStream):
    s = ExponentialSampler(params, rng, 200_000)
    _, _, belief = s.at(8.0, 0.4)
    mean = belief.mean()
    se = belief.std(ddof=1) / np.sqrt(belief.size)
    return abs(mean - 0.4) < 3 * se, f"E[Pi_xi]={mean:.5f} (se {se:.1e})"


def check_known_drift(params: ModelParams, rng: RngStream):
    pack = ClosedFormPack.build(params)
    worst = 0.0
    for which in (0, 1):
        curve = BoundaryCurve.constant(pack.xstar(which))
        for x in (2.0, 5.0, 7.0):
            e = value_from_boundary(params, curve, State(x, float(which)), 200_000, rng)
            worst = max(worst, abs(e.mean - known_drift_value(pack, which, x)) / e.std_error)
    return worst < 3.5, f"worst deviation {worst:.2f} SE"


def check_boundary(params: ModelParams, rng: RngStream):
    pack = ClosedFormPack.build(params)
    curve, rep = fixed_point_solve(params, n_samples=100_000, rng=rng.sub(STREAM_SOLVE), m=51)
    bad = class_m_violations(curve, pack, tol=1e-9)
    sol = solve_obstacle(params, OracleGrid(501, 51))
    pde = extract_boundary(sol)
    gap = float(np.max(np.abs(pde.values - curve.values))) / pack.xstar0
    ok = not bad and gap < 0.03
    return ok, f"{rep.iterations} iterations, oracle gap {100 * gap:.2f}% of x0*" + (
        f", violations: {bad}" if bad else ""
    )


def check_sandwich(params: ModelParams, rng: RngStream):
    pack = ClosedFormPack.build(params)
    curve, _ = fixed_point_solve(params, n_samples=100_000, rng=rng.sub(STREAM_SOLVE), m=51)
    sampler = ExponentialSampler(params, rng.sub(STREAM_VALUE), 200_000)
    ok = True
    worst = -np.inf
    for x in (4.0, 6.0, 8.0):
        for pi in (0.2, 0.5, 0.8):
            s = State(x, pi)
            v = value_from_boundary(params, curve, s, 0, rng, sampler)
            h = float(np.max(delta_strategy_payoff_h(pack, x, pi, np.linspace(1, 5, 401))))
            vbar = full_info_value(params, s)
            ok &= h <= v.mean + 3 * v.std_error and v.mean <= vbar + 3 * v.std_error
            worst = max(worst, (h - v.mean) / v.std_error, (v.mean - vbar) / v.std_error)
    return bool(ok), f"largest excess {worst:.2f} SE"


CHECKS = {
    "closed_form": check_closed_form,
    "filter": check_filter,
    "martingale": check_martingale,
    "known_drift": check_known_drift,
    "boundary": check_boundary,
    "sandwich": check_sandwich,
}


def run_checks(params: ModelParams, seed: int, report=print) -> bool:
    rng = RngStream(seed, STREAM_RESIDUAL)
    all_ok = True
    for name, fn in CHECKS.items():
        ok, detail = fn(params, rng)
        report(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        all_ok &= bool(ok)
    return all_ok
