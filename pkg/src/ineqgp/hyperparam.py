"""Maximum-likelihood estimation of kernel hyperparameters and noise variance.

The likelihood is that of the knot model, ``y ~ N(0, Phi Gamma Phi^T + tau2 I)``
with ``Gamma`` the kernel Gram matrix over the knots. Parameters are
optimized in log space with L-BFGS-B from a Latin-hypercube set of starts.
"""

from __future__ import annotations

import re
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.stats import qmc

from . import kernel as kern
from .basis import KnotGrid, design_matrix
from .errors import FactorizationError
from .posterior import log_marginal_likelihood

N_STARTS = 10
START_RANGE = (1e-2, 1e1)
# noise starts relative to the second moment of y
TAU2_START_RANGE = (1e-4, 1e-1)
TAU2_FLOOR = 1e-8
LOG_BOUNDS = {"sigma2": (1e-6, 1e4), "lengthscale": (1e-3, 1e2), "tau2": (None, 1e2)}
_PENALTY = 1e25


class MLFit(NamedTuple):
    kernel: kern.KernelSpec
    tau2: float
    loglik: float


class StartRecord(NamedTuple):
    start: np.ndarray
    start_loglik: float
    end: np.ndarray
    end_loglik: float
    message: str


def parse_fixed(fixed, dim: int) -> dict:
    """Normalize fixed-parameter specifications.

    Accepted keys: ``sigma2``, ``tau2``, ``tau2rel`` (noise as a fraction of
    ``sigma2``), ``lengthscale`` (all dimensions) and ``lengthscale<k>`` with
    one-based ``k``. Also accepts ``"key=value"`` strings.
    """
    if fixed is None:
        return {}
    if isinstance(fixed, (list, tuple)):
        items = {}
        for text in fixed:
            key, sep, value = str(text).partition("=")
            if not sep:
                raise ValueError(f"expected key=value, got {text!r}")
            items[key.strip()] = float(value)
        fixed = items
    out = {}
    for key, value in dict(fixed).items():
        key = key.strip().lower().replace("ell", "lengthscale").replace("²", "2")
        value = float(value)
        if key in ("sigma2", "variance"):
            if value <= 0:
                raise ValueError("fixed sigma2 must be positive")
            out["sigma2"] = value
        elif key in ("tau2", "tau2rel"):
            if value < 0:
                raise ValueError(f"fixed {key} must be non-negative")
            out[key] = value
        elif key == "lengthscale":
            if value <= 0:
                raise ValueError("fixed lengthscale must be positive")
            for k in range(dim):
                out[f"lengthscale{k + 1}"] = value
        elif (mt := re.fullmatch(r"lengthscale(\d+)", key)):
            k = int(mt.group(1))
            if not 1 <= k <= dim:
                raise ValueError(f"{key}: dimension must be in 1..{dim}")
            if value <= 0:
                raise ValueError("fixed lengthscale must be positive")
            out[key] = value
        else:
            raise ValueError(f"unknown hyperparameter {key!r}")
    if "tau2" in out and "tau2rel" in out:
        raise ValueError("fix either tau2 or tau2rel, not both")
    return out


def observation_covariance(spec: kern.KernelSpec, grid: KnotGrid, inputs, with_grad=False):
    """``Phi Gamma Phi^T`` without forming ``Gamma``.

    Each row of ``Phi`` is a Kronecker product of 1D hat rows, so
    ``Phi Gamma Phi^T = sigma2 * prod_k (P_k R_k P_k^T)`` (elementwise product)
    with ``P_k`` the 1D design along dimension ``k``. The gradient list
    follows :func:`ineqgp.kernel.grad_hyper` ordering.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    blocks, dblocks = [], []
    for k in range(grid.ndim):
        g1 = KnotGrid((grid.dims[k],))
        P = design_matrix(g1, inputs[:, k:k + 1]).toarray()
        sub = kern.KernelSpec(spec.family, 1.0, (spec.lengthscales[k],))
        if with_grad:
            R, dR = kern.kron_gram(sub, [g1.knots()], with_grad=True)
            dblocks.append(P @ dR[1] @ P.T)
        else:
            R = kern.kron_gram(sub, [g1.knots()])
        blocks.append(P @ R @ P.T)
    prod = np.prod(blocks, axis=0)
    K = spec.variance * prod
    if not with_grad:
        return K
    grads = [prod]
    for k in range(grid.ndim):
        others = [blocks[j] for j in range(grid.ndim) if j != k]
        rest = np.prod(others, axis=0) if others else 1.0
        grads.append(spec.variance * dblocks[k] * rest)
    return K, grads


def _lml_observation(K, dK, y, tau2):
    # log N(y; 0, K + tau2 I) and gradient over dK followed by tau2
    n = y.size
    A = K + tau2 * np.eye(n)
    try:
        L = np.linalg.cholesky(0.5 * (A + A.T))
    except np.linalg.LinAlgError:
        raise FactorizationError("observation covariance is not positive definite") from None
    alpha = scipy.linalg.cho_solve((L, True), y)
    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi)
    if dK is None:
        return float(value)
    W = np.outer(alpha, alpha) - scipy.linalg.cho_solve((L, True), np.eye(n))
    grad = [0.5 * np.sum(W * D) for D in dK]
    grad.append(0.5 * np.trace(W))
    return float(value), np.array(grad)


class _Objective:
    """Negative log-likelihood over the free log-parameters."""

    def __init__(self, family, grid, phi, y, fixed, inputs=None):
        self.family = family
        self.grid = grid
        self.phi = phi
        self.y = y
        self.inputs = inputs
        self.dim = grid.ndim
        self.axes = grid.axes()
        self.fixed = fixed
        # full log-vector: [log sigma2, log l_1..l_d, log tau2]
        names = ["sigma2"] + [f"lengthscale{k + 1}" for k in range(self.dim)] + ["tau2"]
        self.names = names
        self.free = np.array([n not in fixed and not (n == "tau2" and "tau2rel" in fixed)
                              for n in names])
        self.zero_noise = fixed.get("tau2", None) == 0.0 or fixed.get("tau2rel", None) == 0.0
        self.best = (-np.inf, None)
        self.n_evals = 0

    def full(self, free_theta):
        theta = np.empty(len(self.names))
        theta[self.free] = free_theta
        for i, name in enumerate(self.names):
            if not self.free[i] and name in self.fixed and self.fixed[name] > 0:
                theta[i] = np.log(self.fixed[name])
        if "tau2rel" in self.fixed and self.fixed["tau2rel"] > 0:
            theta[-1] = theta[0] + np.log(self.fixed["tau2rel"])
        return theta

    def natural(self, theta):
        spec = kern.KernelSpec(self.family, float(np.exp(theta[0])),
                               tuple(np.exp(theta[1:-1])))
        tau2 = 0.0 if self.zero_noise else float(np.exp(theta[-1]))
        return spec, tau2

    def loglik(self, free_theta, with_grad=True):
        theta = self.full(free_theta)
        spec, tau2 = self.natural(theta)
        n, m = self.phi.shape
        if self.inputs is not None and (tau2 == 0 or n <= m):
            # observation space: cheap when there are fewer data than knots
            if with_grad:
                K, dK = observation_covariance(spec, self.grid, self.inputs, True)
            else:
                K, dK = observation_covariance(spec, self.grid, self.inputs), None
            out = _lml_observation(K, dK, self.y, tau2)
        else:
            if with_grad:
                G, dG = kern.kron_gram(spec, self.axes, with_grad=True)
            else:
                G, dG = kern.kron_gram(spec, self.axes), None
            out = log_marginal_likelihood(G, self.phi, self.y, tau2, dgram=dG,
                                          method="direct" if tau2 == 0 else "auto")
        self.n_evals += 1
        value = out[0] if with_grad else out
        if value > self.best[0]:
            self.best = (value, theta.copy())
        if not with_grad:
            return value
        g_nat = out[1]
        # chain rule to log parameters; tau2rel ties tau2 to sigma2
        g_log = np.empty(len(self.names))
        g_log[0] = g_nat[0] * spec.variance
        g_log[1:-1] = g_nat[1:-1] * np.asarray(spec.lengthscales)
        g_log[-1] = g_nat[-1] * tau2
        if "tau2rel" in self.fixed:
            g_log[0] += g_log[-1]
        return value, g_log[self.free]

    def __call__(self, free_theta):
        try:
            value, grad = self.loglik(free_theta)
        except (FactorizationError, np.linalg.LinAlgError, FloatingPointError):
            return _PENALTY, np.zeros(int(self.free.sum()))
        if not np.isfinite(value):
            return _PENALTY, np.zeros(int(self.free.sum()))
        return -value, -grad


def _bounds_and_starts(obj: _Objective, y, n_starts, rng):
    scale = float(np.mean(y ** 2))
    if scale <= 0:
        scale = 1.0
    var_y = float(np.var(y)) if y.size > 1 else 0.0
    floor = TAU2_FLOOR * (var_y if var_y > 0 else scale)
    lows, highs, bounds = [], [], []
    for name in obj.names:
        if name == "sigma2":
            lo, hi = np.log(np.multiply(START_RANGE, scale))
            b = tuple(np.log(np.multiply(LOG_BOUNDS["sigma2"], scale)))
        elif name == "tau2":
            lo, hi = np.log(np.multiply(TAU2_START_RANGE, scale))
            b = (np.log(floor), np.log(LOG_BOUNDS["tau2"][1] * scale))
        else:
            lo, hi = np.log(START_RANGE)
            b = tuple(np.log(LOG_BOUNDS["lengthscale"]))
        lows.append(lo)
        highs.append(hi)
        bounds.append(b)
    free = obj.free
    k = int(free.sum())
    if k == 0:
        return [], np.zeros((1, 0))
    design = qmc.LatinHypercube(d=k, seed=rng).random(n_starts)
    lows = np.array(lows)[free]
    highs = np.array(highs)[free]
    starts = lows + design * (highs - lows)
    bounds = [b for b, f in zip(bounds, free) if f]
    return bounds, starts


def fit_ml(family: str, grid: KnotGrid, inputs, y, fixed=None, n_starts: int = N_STARTS,
           seed=0, full_output: bool = False, phi=None):
    """Maximum-likelihood ``(sigma2, lengthscales, tau2)`` for the knot model.

    Parameters
    ----------
    family : str
        Kernel family name (``"se"``, ``"matern52"``, ``"matern32"``).
    grid : KnotGrid
    inputs : (n, d) array
        Inputs already scaled to the unit cube.
    y : (n,) array
    fixed : dict or list of "key=value", optional
        Parameters held fixed; see :func:`parse_fixed`. ``tau2=0`` requests
        the noise-free model (no noise floor).
    n_starts : int
        Number of Latin-hypercube starting points.
    full_output : bool
        Also return the per-start :class:`StartRecord` list.

    Returns
    -------
    MLFit
        ``(kernel, tau2, loglik)`` of the best point evaluated.
    """
    family = kern.canonical_family(family)
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("need at least two observations to estimate hyperparameters")
    if phi is None:
        phi = design_matrix(grid, inputs)
    fixed = parse_fixed(fixed, grid.ndim)
    obj = _Objective(family, grid, phi, y, fixed, inputs=np.atleast_2d(inputs))
    rng = np.random.default_rng(seed)
    bounds, starts = _bounds_and_starts(obj, y, n_starts, rng)
    records = []
    if starts.shape[1] == 0:
        value = obj.loglik(np.zeros(0), with_grad=False)
        spec, tau2 = obj.natural(obj.full(np.zeros(0)))
        fit = MLFit(spec, tau2, float(value))
        return (fit, records) if full_output else fit

    for s in starts:
        try:
            ll0 = obj.loglik(s, with_grad=False)
        except (FactorizationError, np.linalg.LinAlgError):
            ll0 = -np.inf
        with np.errstate(over="ignore", under="ignore"):
            res = scipy.optimize.minimize(obj, s, jac=True, method="L-BFGS-B", bounds=bounds,
                                          options={"maxiter": 500})
        records.append(StartRecord(s, float(ll0), res.x, float(-res.fun), str(res.message)))
    best_ll, best_theta = obj.best
    if best_theta is None:
        raise FactorizationError("the likelihood could not be evaluated at any starting point")
    spec, tau2 = obj.natural(best_theta)
    fit = MLFit(spec, tau2, float(best_ll))
    return (fit, records) if full_output else fit


def loglik_gradient(family: str, grid: KnotGrid, inputs, y, spec: kern.KernelSpec, tau2: float):
    """Log-likelihood and its gradient w.r.t. ``[log sigma2, log l_k, log tau2]``."""
    obj = _Objective(kern.canonical_family(family), grid, design_matrix(grid, inputs),
                     np.asarray(y, float).ravel(), {})
    theta = np.concatenate([[np.log(spec.variance)], np.log(spec.lengthscales), [np.log(tau2)]])
    return obj.loglik(theta)
