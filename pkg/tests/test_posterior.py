import numpy as np
import pytest
import scipy.sparse as sp
import scipy.stats
from hypothesis import given, settings, strategies as st

from ineqgp.basis import KnotGrid, design_matrix
from ineqgp.constraints import LinearConstraintSystem, bounds, monotone
from ineqgp.errors import FactorizationError
from ineqgp.kernel import KernelSpec, gram, grad_hyper
from ineqgp.posterior import (ConditionedGaussian, TruncatedGaussianSpec, condition,
                              condition_auto, condition_woodbury, jitter_cholesky,
                              log_marginal_likelihood, psd_factor, push_forward)


def random_instance(rng, m, n, tau2=None):
    grid = KnotGrid(m)
    spec = KernelSpec("matern52", rng.uniform(0.5, 3.0), [rng.uniform(0.1, 0.6)])
    G = gram(spec, grid.points())
    phi = design_matrix(grid, rng.uniform(size=(n, 1)))
    y = rng.normal(size=n)
    return G, phi, y, (rng.uniform(0.01, 0.5) if tau2 is None else tau2)


def brute_force(G, phi, y, tau2):
    P = phi.toarray() if sp.issparse(phi) else phi
    Kinv = np.linalg.inv(P @ G @ P.T + tau2 * np.eye(len(y)))
    return G @ P.T @ Kinv @ y, G - G @ P.T @ Kinv @ P @ G


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_matches_dense_oracle(rng):
    G, phi, y, tau2 = random_instance(rng, 6, 4)
    cg = condition(G, phi, y, tau2)
    mu, S = brute_force(G, phi, y, tau2)
    np.testing.assert_allclose(cg.mean, mu, rtol=0, atol=1e-10 * np.abs(mu).max())
    np.testing.assert_allclose(cg.cov, S, rtol=0, atol=1e-10 * np.abs(S).max())


def test_invariants(rng):
    G, phi, y, tau2 = random_instance(rng, 10, 7)
    cg = condition(G, phi, y, tau2)
    np.testing.assert_array_equal(cg.cov, cg.cov.T)
    recon = cg.chol @ cg.chol.T
    assert rel(recon, cg.cov + cg.jitter_used * np.eye(10)) < 1e-8
    assert np.allclose(np.tril(cg.chol), cg.chol)
    assert np.linalg.eigvalsh(G - cg.cov).min() >= -1e-8


def test_huge_noise_ignores_data(rng):
    G, phi, y, _ = random_instance(rng, 8, 5)
    sigma2 = np.diag(G).max()
    cg = condition(G, phi, y, 1e12 * sigma2)
    assert np.abs(cg.mean).max() <= 1e-6 * np.abs(y).max()
    assert rel(cg.cov, G) <= 1e-6


def test_no_observations_gives_prior(rng):
    G, _, _, _ = random_instance(rng, 5, 1)
    for f in (condition, condition_woodbury):
        cg = f(G, None, np.zeros(0), 0.1)
        np.testing.assert_array_equal(cg.mean, 0.0)
        np.testing.assert_allclose(cg.cov, G)


def test_woodbury_agrees_n200_m10(rng):
    G, phi, y, tau2 = random_instance(rng, 10, 200)
    a, b = condition(G, phi, y, tau2), condition_woodbury(G, phi, y, tau2)
    assert rel(b.mean, a.mean) < 1e-8
    assert rel(b.cov, a.cov) < 1e-8


def test_scalar_case():
    g, tau2, phi, y = 2.0, 0.5, 0.7, 1.3
    cg = condition_woodbury(np.array([[g]]), np.array([[phi]]), np.array([y]), tau2)
    denom = phi * g * phi + tau2
    assert cg.mean[0] == pytest.approx(g * phi * y / denom, rel=1e-12)
    assert cg.cov[0, 0] == pytest.approx(g - g * phi * phi * g / denom, rel=1e-12)


def test_identity_design_closed_form(rng):
    G, _, _, _ = random_instance(rng, 6, 1)
    tau2 = float(G[0, 0])
    y = rng.normal(size=6)
    expected = G @ np.linalg.inv(G + tau2 * np.eye(6)) * tau2
    for f in (condition, condition_woodbury):
        cg = f(G, np.eye(6), y, tau2)
        assert rel(cg.cov, expected) < 1e-10
    assert rel(condition(G, np.eye(6), y, tau2).mean,
               condition_woodbury(G, np.eye(6), y, tau2).mean) < 1e-10


@settings(max_examples=50)
@given(seed=st.integers(0, 2**31), m=st.integers(2, 12), n=st.integers(1, 300))
def test_paths_agree(seed, m, n):
    r = np.random.default_rng(seed)
    G, phi, y, tau2 = random_instance(r, m, n)
    a, b = condition(G, phi, y, tau2), condition_woodbury(G, phi, y, tau2)
    assert rel(b.mean, a.mean) < 1e-8
    assert rel(b.cov, a.cov) < 1e-8


def test_auto_switches_path(rng):
    G, phi, y, tau2 = random_instance(rng, 5, 40)
    assert rel(condition_auto(G, phi, y, tau2).cov, condition(G, phi, y, tau2).cov) < 1e-8
    G, phi, y, _ = random_instance(rng, 5, 3)
    assert np.isfinite(condition_auto(G, phi, y, 0.0).mean).all()


@settings(max_examples=30)
@given(seed=st.integers(0, 2**31))
def test_extra_observation_never_inflates_variance(seed):
    r = np.random.default_rng(seed)
    G, phi, y, tau2 = random_instance(r, 8, 6)
    small = condition(G, phi[:5], y[:5], tau2)
    full = condition(G, phi, y, tau2)
    assert np.all(np.diag(full.cov) <= np.diag(small.cov) + 1e-10)


def test_noise_free_interpolation(rng):
    G, phi, y, _ = random_instance(rng, 12, 5, tau2=0.0)
    cg = condition(G, phi, y, 0.0)
    np.testing.assert_allclose(phi @ cg.mean, y, atol=1e-6)


def test_singular_noise_free_system_raises():
    grid = KnotGrid(5)
    G = gram(KernelSpec("se", 1.0, [0.3]), grid.points())
    phi = design_matrix(grid, np.array([[0.3], [0.3]]))
    with pytest.raises(FactorizationError, match="noise"):
        condition(G, phi, np.array([0.1, 0.2]), 0.0)
    with pytest.raises(ValueError):
        condition_woodbury(G, phi, np.array([0.1, 0.2]), 0.0)


def test_input_validation(rng):
    G, phi, y, tau2 = random_instance(rng, 4, 3)
    with pytest.raises(ValueError):
        condition(G, phi, y[:2], tau2)
    with pytest.raises(ValueError):
        condition(G, phi, y, -1.0)


def test_jitter_ladder():
    A = np.ones((3, 3))
    L, jitter = jitter_cholesky(A)
    assert jitter > 0
    assert np.allclose(L @ L.T, A + jitter * np.eye(3))
    with pytest.raises(FactorizationError):
        jitter_cholesky(-np.eye(3))


def test_psd_factor_of_rank_deficient_matrix(rng):
    B = rng.normal(size=(5, 2))
    F = psd_factor(B @ B.T)
    np.testing.assert_allclose(F @ F.T, B @ B.T, atol=1e-12)


def test_push_forward_identity(rng):
    G, phi, y, tau2 = random_instance(rng, 5, 3)
    cg = condition(G, phi, y, tau2)
    spec = push_forward(cg, bounds(KnotGrid(5), -1, 1))
    np.testing.assert_allclose(spec.mean, cg.mean)
    np.testing.assert_allclose(spec.cov, cg.cov)
    np.testing.assert_array_equal(spec.lower, -1.0)


def test_push_forward_sum_functional(rng):
    G, phi, y, tau2 = random_instance(rng, 5, 3)
    cg = condition(G, phi, y, tau2)
    spec = push_forward(cg, LinearConstraintSystem(np.ones((1, 5)), 0.0, np.inf))
    assert spec.dim == 1
    assert spec.mean[0] == pytest.approx(cg.mean.sum(), rel=1e-12)
    assert spec.cov[0, 0] == pytest.approx(cg.cov.sum(), rel=1e-12)
    with pytest.raises(ValueError):
        push_forward(cg, bounds(KnotGrid(4), 0, 1))


def test_push_forward_monotone_toy_is_psd(toy_model_075):
    model = toy_model_075
    grid = model.grid
    spec = push_forward(model.conditioned, monotone(grid))
    w = np.linalg.eigvalsh(spec.cov)
    assert w.min() >= -1e-8 * max(1.0, w.max())
    np.testing.assert_allclose(spec.factor @ spec.factor.T, spec.cov, atol=1e-8)


def test_truncated_spec_validation():
    with pytest.raises(ValueError):
        TruncatedGaussianSpec(np.zeros(2), np.eye(2), [1, 0], [0, 1])
    with pytest.raises(ValueError):
        TruncatedGaussianSpec(np.zeros(2), np.eye(2), 0, 1, factor=np.eye(3))


def test_lml_scalar_oracle():
    s2, t2, y = 1.7, 0.3, 0.8
    val = log_marginal_likelihood(np.array([[s2]]), np.array([[1.0]]), np.array([y]), t2)
    assert val == pytest.approx(scipy.stats.norm.logpdf(y, scale=np.sqrt(s2 + t2)), rel=1e-12)


def test_lml_zero_data_decreases_with_noise():
    # with y = 0 the density at the origin is (2 pi (s2 + t2))^(-1/2), which
    # falls as t2 grows
    G, phi, y = np.array([[1.0]]), np.array([[1.0]]), np.array([0.0])
    vals = [log_marginal_likelihood(G, phi, y, 0.01 * 2 ** k) for k in range(12)]
    assert np.all(np.diff(vals) < 0)


@pytest.mark.parametrize("method", ["direct", "lowrank"])
def test_lml_gradient(method, rng):
    grid = KnotGrid(5)
    spec = KernelSpec("matern52", 1.3, [0.4])
    phi = design_matrix(grid, rng.uniform(size=(8, 1)))
    y = rng.normal(size=8)
    tau2 = 0.2
    G = gram(spec, grid.points())
    dG = grad_hyper(spec, grid.points())
    val, grad = log_marginal_likelihood(G, phi, y, tau2, dgram=list(dG), method=method)
    assert val == pytest.approx(log_marginal_likelihood(G, phi, y, tau2, method="direct"), rel=1e-10)
    theta = np.array([1.3, 0.4, tau2])
    for k in range(3):
        h = 1e-6 * theta[k]
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h

        def f(t):
            s = KernelSpec("matern52", t[0], [t[1]])
            return log_marginal_likelihood(gram(s, grid.points()), phi, y, t[2], method=method)

        fd = (f(up) - f(dn)) / (2 * h)
        assert grad[k] == pytest.approx(fd, rel=1e-4, abs=1e-8)


@given(seed=st.integers(0, 2**31))
def test_lml_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    G, phi, y, tau2 = random_instance(r, 6, 9)
    p = r.permutation(9)
    a = log_marginal_likelihood(G, phi, y, tau2)
    b = log_marginal_likelihood(G, phi[p], y[p], tau2)
    assert a == pytest.approx(b, rel=1e-10)


def test_lml_errors(rng):
    G, phi, y, _ = random_instance(rng, 4, 3)
    with pytest.raises(ValueError):
        log_marginal_likelihood(G, phi, y, 0.0, method="lowrank")
    with pytest.raises(ValueError):
        log_marginal_likelihood(G, phi, y, 0.1, method="cheap")
    dup = design_matrix(KnotGrid(4), np.array([[0.5], [0.5]]))
    with pytest.raises(FactorizationError):
        log_marginal_likelihood(G, dup, np.array([1.0, 2.0]), 0.0)


def test_from_moments():
    cg = ConditionedGaussian.from_moments([0.0, 1.0], [[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_allclose(cg.chol @ cg.chol.T, cg.cov)
    assert cg.dim == 2
