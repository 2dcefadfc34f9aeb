import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.interpolate import RegularGridInterpolator

from ineqgp.basis import InputScaler, KnotGrid, design_matrix, evaluate_emulator, hat


def test_hat_at_own_knot():
    grid = KnotGrid(7)
    for j in range(7):
        assert hat(grid, 0, j, grid.knots()[j]) == 1.0


def test_hat_at_neighbour_knot():
    grid = KnotGrid(7)
    t = grid.knots()
    assert hat(grid, 0, 3, t[4]) == 0.0
    assert hat(grid, 0, 3, t[2]) == 0.0


def test_hat_value_inside_support():
    # five knots, spacing 0.25; the knot at 0.25 evaluated at 0.30
    assert hat(KnotGrid(5), 0, 1, 0.30) == pytest.approx(1 - 0.05 / 0.25, abs=1e-15)


def test_hat_outside_unit_interval():
    with pytest.raises(ValueError):
        hat(KnotGrid(5), 0, 1, 1.2)
    with pytest.raises(IndexError):
        hat(KnotGrid(5), 0, 5, 0.5)


def test_design_row_at_knot_is_unit_vector():
    grid = KnotGrid(6)
    Phi = design_matrix(grid, grid.knots()).toarray()
    np.testing.assert_array_equal(Phi, np.eye(6))


def test_design_row_between_knots():
    row = design_matrix(KnotGrid(3), [0.25]).toarray()[0]
    np.testing.assert_allclose(row, [0.5, 0.5, 0.0], atol=1e-15)


def test_design_rejects_out_of_range():
    with pytest.raises(ValueError):
        design_matrix(KnotGrid(4), [[-0.01]])
    with pytest.raises(ValueError):
        design_matrix(KnotGrid((4, 4)), [[0.5, 1.5]])
    with pytest.raises(ValueError):
        design_matrix(KnotGrid((4, 4)), [[0.5, 0.5, 0.5]])


def test_partition_of_unity(rng):
    grid = KnotGrid((4, 3, 6))
    Phi = design_matrix(grid, rng.uniform(size=(1000, 3)))
    np.testing.assert_allclose(np.asarray(Phi.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    assert Phi.min() >= 0


def test_local_support(rng):
    grid = KnotGrid((5, 4))
    X = rng.uniform(size=(300, 2))
    Phi = design_matrix(grid, X).toarray()
    P = grid.points()
    for k, m in enumerate(grid.dims):
        far = np.abs(X[:, [k]] - P[:, k][None, :]) >= 1.0 / (m - 1)
        assert np.all(Phi[far] == 0.0)


def test_interpolation_at_knots(rng):
    grid = KnotGrid((3, 5))
    xi = rng.standard_normal(grid.size)
    np.testing.assert_allclose(evaluate_emulator(grid, xi, grid.points()), xi, atol=1e-14)


def test_linear_midpoint():
    assert evaluate_emulator(KnotGrid(2), [0.0, 1.0], [0.5])[0] == pytest.approx(0.5)


def test_constant_field_in_2d(rng):
    grid = KnotGrid((4, 7))
    vals = evaluate_emulator(grid, np.full(grid.size, -2.5), rng.uniform(size=(50, 2)))
    np.testing.assert_allclose(vals, -2.5, atol=1e-14)


def test_multilinear_matches_grid_interpolator(rng):
    grid = KnotGrid((4, 5, 3))
    xi = rng.standard_normal(grid.size)
    X = rng.uniform(size=(400, 3))
    oracle = RegularGridInterpolator(grid.axes(), xi.reshape(grid.dims), method="linear")
    np.testing.assert_allclose(evaluate_emulator(grid, xi, X), oracle(X), atol=1e-12)


def test_stack_of_knot_vectors(rng):
    grid = KnotGrid(5)
    xi = rng.standard_normal((3, 5))
    X = rng.uniform(size=8)
    out = evaluate_emulator(grid, xi, X)
    assert out.shape == (3, 8)
    np.testing.assert_allclose(out[1], evaluate_emulator(grid, xi[1], X))


@given(seed=st.integers(0, 2**31), x=st.floats(0.0, 1.0))
def test_emulator_equals_design_row_product(seed, x):
    grid = KnotGrid((6, 3))
    r = np.random.default_rng(seed)
    xi = r.standard_normal(grid.size)
    p = np.array([[x, r.uniform()]])
    row = design_matrix(grid, p).toarray()[0]
    assert evaluate_emulator(grid, xi, p)[0] == pytest.approx(row @ xi, abs=1e-12)


@given(seed=st.integers(0, 2**31), cell=st.integers(0, 8), a=st.floats(0, 1), b=st.floats(0, 1))
def test_piecewise_linear_between_knots(seed, cell, a, b):
    grid = KnotGrid(10)
    xi = np.random.default_rng(seed).standard_normal(10)
    lo, hi = grid.knots()[cell], grid.knots()[cell + 1]
    u, v = sorted((a, b))
    pts = lo + (hi - lo) * np.array([u, 0.5 * (u + v), v])
    f = evaluate_emulator(grid, xi, pts)
    assert f[0] - 2 * f[1] + f[2] == pytest.approx(0.0, abs=1e-10)


def test_grid_validation_and_indexing():
    with pytest.raises(ValueError):
        KnotGrid((1, 4))
    grid = KnotGrid((3, 4))
    assert grid.size == 12
    assert grid.flat_index((1, 2)) == 6
    assert grid.multi_index(6) == (1, 2)
    np.testing.assert_array_equal(grid.points()[6], [0.5, 2 / 3])


def test_scaler_round_trip(rng):
    X = rng.uniform(-3, 7, size=(20, 2))
    sc = InputScaler.fit(X)
    U = sc.transform(X)
    assert U.min() == 0.0 and U.max() == 1.0
    np.testing.assert_allclose(sc.inverse(U), X, rtol=1e-14)
    assert InputScaler.from_dict(sc.to_dict()) == sc
    with pytest.raises(ValueError):
        InputScaler((1.0,), (1.0,))
