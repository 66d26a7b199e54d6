import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopwell.boundary import (
    BoundaryCurve,
    EstimateDegenerateError,
    NonConvergenceError,
    class_m_violations,
    default_tolerance,
    fixed_point_solve,
    integral_residual,
    lipschitz_excess,
    project,
    psi_apply,
    residual_profile,
)
from stopwell.closed_form import ClosedFormPack, lower_bound_b
from stopwell.model import make_params
from stopwell.pde import OracleGrid, extract_boundary, solve_obstacle
from stopwell.sampling import RngStream

# drifts far apart relative to the noise: the boundary sits visibly above the lower bound
GAP = dict(mu0=-0.2, mu1=0.04, sigma=0.25)


def test_curve_validation():
    with pytest.raises(ValueError):
        BoundaryCurve(np.array([0.0, 0.5]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        BoundaryCurve(np.array([0.0, 1.0]), np.array([1.0]))


def test_lower_bound_curve_is_admissible(pack):
    assert class_m_violations(BoundaryCurve.lower_bound(pack), pack) == []
    assert "below the analytic lower bound" in class_m_violations(
        BoundaryCurve.constant(pack.xstar1), pack
    )


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 20.0), min_size=11, max_size=11))
def test_projection_lands_in_class_and_is_idempotent(vals):
    pack = ClosedFormPack.build(make_params())
    curve = BoundaryCurve(np.linspace(0, 1, 11), np.array(vals))
    once = project(curve, pack)
    assert class_m_violations(once, pack) == []
    np.testing.assert_array_equal(project(once, pack).values, once.values)


def test_projection_keeps_admissible_curves(pack):
    grid = np.linspace(0, 1, 51)
    mid = 0.5 * (lower_bound_b(pack, grid) + pack.xstar0)
    mid[0], mid[-1] = pack.xstar0, pack.xstar1
    curve = BoundaryCurve(grid, np.minimum.accumulate(mid))
    np.testing.assert_array_equal(project(curve, pack).values, curve.values)


def test_endpoint_nodes_reproduce_thresholds(ref, pack, seed):
    curve = BoundaryCurve.lower_bound(pack, 11)
    res = residual_profile(ref, curve, 400_000, RngStream(seed, 50))
    assert abs(res[0].mean) < 3 * res[0].std_error
    assert abs(res[-1].mean) < 3 * res[-1].std_error


def test_psi_from_top_moves_every_interior_node_down(ref, pack, seed):
    top = BoundaryCurve.constant(pack.xstar0, 21)
    res = residual_profile(ref, top, 200_000, RngStream(seed, 51))
    assert all(e.mean > 3 * e.std_error for e in res[1:])
    raw = BoundaryCurve(top.pi_grid, top.values.copy())
    new = psi_apply(ref, raw, 200_000, RngStream(seed, 51))
    assert np.all(new.values[1:] < pack.xstar0)


def test_residual_positive_at_top_for_known_high_drift(ref, pack, seed):
    est = integral_residual(ref, BoundaryCurve.constant(pack.xstar0, 11), 1.0, 200_000, RngStream(seed, 52))
    assert est.mean > 3 * est.std_error


def test_residual_negative_on_lower_bound_in_gap_set(seed):
    p = make_params(**GAP)
    pk = ClosedFormPack.build(p)
    oracle = extract_boundary(solve_obstacle(p, OracleGrid(n_x=501, n_pi=51)))
    assert oracle(0.5) - lower_bound_b(pk, 0.5) > 0.5
    est = integral_residual(p, BoundaryCurve.lower_bound(pk, 101), 0.5, 400_000, RngStream(seed, 53))
    assert est.mean < -3 * est.std_error


def test_gap_set_solve_matches_oracle(seed):
    p = make_params(**GAP)
    pk = ClosedFormPack.build(p)
    curve, rep = fixed_point_solve(p, n_samples=200_000, rng=RngStream(seed, 54), m=51)
    oracle = extract_boundary(solve_obstacle(p, OracleGrid(n_x=501, n_pi=51)))
    assert rep.converged and rep.sup_change_history[-1] < rep.tolerance
    grid = np.linspace(0, 1, 51)
    assert np.max(np.abs(curve(grid) - oracle(grid))) < 0.03 * pk.xstar0
    assert class_m_violations(curve, pk) == []
    assert np.all(lipschitz_excess(curve) <= 1e-9 * pk.xstar0 + 2 * np.max(curve.se))


def test_grid_refinement_stability(ref, seed):
    coarse, _ = fixed_point_solve(ref, n_samples=200_000, rng=RngStream(seed, 55), m=51)
    fine, _ = fixed_point_solve(ref, n_samples=200_000, rng=RngStream(seed, 55), m=101)
    grid = np.linspace(0, 1, 101)
    assert np.max(np.abs(coarse(grid) - fine(grid)) / fine(grid)) < 0.01


def test_degenerate_estimate_raises(seed):
    p = make_params(mu0=0.0299, mu1=0.03)
    with pytest.raises(EstimateDegenerateError):
        fixed_point_solve(p, n_samples=10_000, rng=RngStream(seed, 56), m=11)


def test_too_few_samples_rejected(ref, pack):
    with pytest.raises(ValueError):
        psi_apply(ref, BoundaryCurve.lower_bound(pack, 11), 100, RngStream(0))


def test_nonconvergence_carries_report(seed):
    p = make_params(**GAP)
    with pytest.raises(NonConvergenceError) as info:
        fixed_point_solve(p, tol=1e-12, max_iter=2, n_samples=20_000, rng=RngStream(seed, 57), m=11)
    assert info.value.report.iterations == 2 and len(info.value.report.sup_change_history) == 2


def test_default_tolerance_floor(pack):
    assert default_tolerance(pack, np.zeros(3)) == pytest.approx(1e-3 * pack.xstar0)
    assert default_tolerance(pack, np.array([0.5])) == 1.0


def test_lipschitz_excess_flags_a_cliff(pack):
    grid = np.linspace(0, 1, 11)
    v = lower_bound_b(pack, grid)
    v[3:] = np.minimum(v[3:], pack.xstar1 + 1e-3)
    v[-1] = pack.xstar1
    assert np.max(lipschitz_excess(BoundaryCurve(grid, v))) > 0
