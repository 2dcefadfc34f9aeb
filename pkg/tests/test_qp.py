import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings, strategies as st

from ineqgp.basis import KnotGrid
from ineqgp.constraints import LinearConstraintSystem, bounds, check_feasible, compose, monotone
from ineqgp.errors import InfeasibleProblemError, MaxIterationsError
from ineqgp.posterior import ConditionedGaussian
from ineqgp.qp import (box_mode, dual_projected_gradient, kkt_residual, min_norm_point,
                       solve_map)


def random_problem(r, m=None, q=None):
    m = m or int(r.integers(2, 9))
    q = q or int(r.integers(1, 2 * m + 1))
    B = r.normal(size=(m, m))
    cov = B @ B.T + 0.1 * np.eye(m)
    mean = r.normal(scale=2.0, size=m)
    lam = r.normal(size=(q, m))
    z0 = r.normal(size=m)
    c = lam @ z0
    width = r.uniform(0.1, 1.0, size=q)
    lower = np.where(r.uniform(size=q) < 0.8, c - width, -np.inf)
    upper = np.where(r.uniform(size=q) < 0.8, c + width, np.inf)
    lower[np.isinf(lower) & np.isinf(upper)] = c[np.isinf(lower) & np.isinf(upper)] - 1.0
    system = LinearConstraintSystem(lam, lower, upper)
    return ConditionedGaussian.from_moments(mean, cov), system, z0


def objective(cg, x):
    d = x - cg.mean
    return d @ np.linalg.solve(cg.cov, d)


def feasible_points(r, system, centre, count, scale=1.0):
    pts = []
    while len(pts) < count:
        cand = centre + scale * r.normal(size=(4 * count, centre.size)) * r.uniform(size=(4 * count, 1))
        vals = cand @ system.lam.T
        ok = np.all((vals >= system.lower) & (vals <= system.upper), axis=1)
        pts.extend(cand[ok])
    return np.array(pts[:count])


def dual_oracle(cg, lower, upper):
    """Box-constrained mode from the xi-space dual, solved with L-BFGS-B."""
    m = cg.dim
    S = cg.cov
    lo = np.where(np.isfinite(lower), lower, 0.0)
    hi = np.where(np.isfinite(upper), upper, 0.0)

    def negdual(v):
        nu = v[:m] - v[m:]
        val = 0.5 * nu @ S @ nu + nu @ cg.mean - v[:m] @ lo + v[m:] @ hi
        g = S @ nu + cg.mean
        return val, np.concatenate([g - lo, -g + hi])

    bnds = [(0, None) if np.isfinite(lower[i]) else (0, 0) for i in range(m)]
    bnds += [(0, None) if np.isfinite(upper[i]) else (0, 0) for i in range(m)]
    res = scipy.optimize.minimize(negdual, np.zeros(2 * m), jac=True, method="L-BFGS-B",
                                  bounds=bnds, options={"maxiter": 100000, "ftol": 1e-15,
                                                        "gtol": 1e-12, "maxcor": 50})
    nu = res.x[:m] - res.x[m:]
    return np.clip(cg.mean + S @ nu, lower, upper)


def test_feasible_mean_is_returned(rng):
    cg = ConditionedGaussian.from_moments(rng.normal(size=5), np.eye(5) + 0.3)
    res = solve_map(cg, bounds(KnotGrid(5), -10, 10))
    np.testing.assert_allclose(res.mode, cg.mean, atol=1e-8)
    assert res.active_rows == []


def test_scalar_projection():
    cg = ConditionedGaussian.from_moments([2.0], [[1.0]])
    res = solve_map(cg, LinearConstraintSystem(np.eye(1), -np.inf, 1.0))
    assert res.mode[0] == pytest.approx(1.0, abs=1e-12)
    assert res.active_rows == [0]


def test_toy_mode_matches_oracle(toy_model_05):
    model = toy_model_05
    cg = model.conditioned
    res = solve_map(cg, model.constraints)
    assert not check_feasible(model.constraints, res.mode, tol=1e-6)
    assert res.kkt_residual <= 1e-6
    ref = dual_oracle(cg, model.constraints.lower, model.constraints.upper)
    np.testing.assert_allclose(res.mode, ref, atol=1e-5)
    np.testing.assert_allclose(model.mode, res.mode, atol=1e-10)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**31))
def test_random_instances_kkt_and_projection(seed):
    r = np.random.default_rng(seed)
    cg, system, z0 = random_problem(r)
    res = solve_map(cg, system)
    assert system.contains(res.mode, tol=1e-6)
    assert res.kkt_residual <= 1e-6
    grad = np.linalg.solve(cg.cov, cg.mean - res.mode)
    for z in feasible_points(r, system, z0, 200):
        assert grad @ (z - res.mode) <= 1e-8 * max(1.0, np.abs(grad).max() * np.abs(z - res.mode).max())


def test_beats_feasible_points(rng):
    cg, system, z0 = random_problem(rng, m=6, q=10)
    res = solve_map(cg, system)
    best = objective(cg, res.mode)
    pts = feasible_points(rng, system, z0, 1000)
    assert all(objective(cg, z) >= best - 1e-9 for z in pts)


@given(seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
def test_covariance_scale_invariance(seed, scale):
    r = np.random.default_rng(seed)
    cg, system, _ = random_problem(r)
    a = solve_map(cg, system).mode
    b = solve_map(ConditionedGaussian.from_moments(cg.mean, scale * cg.cov), system).mode
    np.testing.assert_allclose(a, b, atol=1e-8 * max(1.0, np.abs(a).max()))


def test_tightening_inactive_bound(rng):
    for _ in range(20):
        cg, system, _ = random_problem(rng)
        res = solve_map(cg, system)
        vals = system.values(res.mode)
        inactive = [i for i in range(system.n_rows)
                    if i not in res.active_rows and np.isfinite(system.upper[i])
                    and system.upper[i] - vals[i] > 1e-3]
        if not inactive:
            continue
        i = inactive[0]
        upper = system.upper.copy()
        upper[i] = 0.5 * (upper[i] + vals[i])
        tighter = LinearConstraintSystem(system.lam, system.lower, upper)
        np.testing.assert_allclose(solve_map(cg, tighter).mode, res.mode, atol=1e-8)


def test_infeasible_system():
    cg = ConditionedGaussian.from_moments(np.zeros(2), np.eye(2))
    lam = np.array([[1.0, 0.0], [-1.0, 0.0]])
    system = LinearConstraintSystem(lam, [1.0, 1.0], [np.inf, np.inf])
    with pytest.raises(InfeasibleProblemError):
        solve_map(cg, system)


def test_iteration_cap_returns_best():
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MaxIterationsError) as info:
        min_norm_point(A, np.array([1.0, 1.0]), max_iter=1)
    assert info.value.best is not None


def test_min_norm_point_matches_dual_gradient(rng):
    for _ in range(20):
        A = rng.normal(size=(8, 5))
        b = A @ rng.normal(size=5) - rng.uniform(0, 1, size=8)
        a = min_norm_point(A, b)
        d = dual_projected_gradient(A, b, tol=1e-12)
        np.testing.assert_allclose(a.w, d.w, atol=1e-6)
        assert kkt_residual(A, b, a.w, a.active, a.multipliers) < 1e-9


def test_warm_start_gives_same_answer(rng):
    cg, system, _ = random_problem(rng, m=6, q=12)
    cold = solve_map(cg, system)
    warm = solve_map(cg, system, warm_start=cold.active_set)
    np.testing.assert_allclose(warm.mode, cold.mode, atol=1e-10)
    assert warm.iterations <= cold.iterations


def test_deterministic(rng):
    cg, system, _ = random_problem(rng, m=5, q=9)
    a, b = solve_map(cg, system), solve_map(cg, system)
    np.testing.assert_array_equal(a.mode, b.mode)
    assert a.active_rows == b.active_rows


def test_monotone_mode(rng):
    g = KnotGrid(10)
    mean = np.sin(6 * g.knots())
    cg = ConditionedGaussian.from_moments(mean, 0.1 * np.eye(10))
    res = solve_map(cg, compose([monotone(g)]))
    assert np.all(np.diff(res.mode) >= -1e-9)
    # identity covariance: the mode is the isotonic regression of the mean
    from sklearn.isotonic import IsotonicRegression
    iso = IsotonicRegression().fit_transform(np.arange(10), mean)
    np.testing.assert_allclose(res.mode, iso, atol=1e-9)


def test_box_mode(rng):
    F = np.linalg.cholesky(np.eye(3) + 0.5)
    mean = np.array([2.0, 0.0, -2.0])
    w = box_mode(mean, F, -np.ones(3), np.ones(3))
    z = mean + F @ w
    assert np.all(np.abs(z) <= 1 + 1e-9)
    assert box_mode(mean, F, np.full(3, -np.inf), np.full(3, np.inf)).tolist() == [0.0] * 3


def test_dimension_mismatch():
    cg = ConditionedGaussian.from_moments(np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        solve_map(cg, bounds(KnotGrid(4), 0, 1))
