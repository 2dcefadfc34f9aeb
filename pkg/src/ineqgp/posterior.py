"""Gaussian conditioning of knot values on noisy observations.

Prior ``xi ~ N(0, Gamma)``, observations ``y = Phi xi + eps`` with
``eps ~ N(0, tau2 I)``. Two numerically distinct routes give the same
posterior ``N(mu, Sigma)``:

* :func:`condition` factorizes the ``n x n`` matrix ``Phi Gamma Phi^T + tau2 I``;
* :func:`condition_woodbury` only factorizes ``m x m`` matrices and is the
  cheap route when there are many more observations than knots.

:func:`push_forward` maps the posterior onto constraint coordinates
``Lambda xi``, giving the truncated Gaussian that the samplers target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .constraints import LinearConstraintSystem
from .errors import FactorizationError

JITTER_START = 1e-10
JITTER_STOP = 1e-6
EIG_CLIP = 1e-10

LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def jitter_cholesky(A, start=JITTER_START, stop=JITTER_STOP, what="matrix"):
    """Lower Cholesky factor of ``A + jitter I`` with the smallest jitter that works.

    Tries no jitter first, then ``start * trace/m``, escalating tenfold up to
    ``stop * trace/m``. Returns ``(L, jitter)``.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    if m == 0:
        return np.zeros((0, 0)), 0.0
    scale = max(np.trace(A) / m, np.finfo(float).tiny)
    levels = [0.0]
    eps = start
    while eps <= stop * (1 + 1e-9):
        levels.append(eps * scale)
        eps *= 10.0
    for jitter in levels:
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(m)) if jitter else np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    raise FactorizationError(
        f"Cholesky of the {m}x{m} {what} failed even with jitter {stop:g} * trace/m"
    )


def psd_factor(A, clip=EIG_CLIP) -> np.ndarray:
    """A factor ``F`` with ``F @ F.T == A`` for a positive semidefinite ``A``.

    Cholesky when ``A`` is numerically positive definite; otherwise a
    symmetric eigendecomposition keeping eigenvalues above ``clip`` times the
    largest one. The eigen route drops null directions, so ``F`` can have
    fewer columns than rows.
    """
    A = symmetrize(np.asarray(A, dtype=float))
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(A)
    top = max(vals[-1], 0.0)
    if vals[0] < -1e-8 * max(top, 1.0):
        raise FactorizationError(
            f"matrix is not positive semidefinite (eigenvalue {vals[0]:.3e})"
        )
    keep = vals > clip * top
    return vecs[:, keep] * np.sqrt(vals[keep])


@dataclass(frozen=True, eq=False)
class ConditionedGaussian:
    """Posterior ``N(mean, cov)`` of the knot values, plus a Cholesky factor.

    ``chol @ chol.T == cov + jitter_used * I``.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    jitter_used: float = 0.0

    @classmethod
    def from_moments(cls, mean, cov) -> "ConditionedGaussian":
        cov = symmetrize(np.asarray(cov, dtype=float))
        L, jitter = jitter_cholesky(cov, what="posterior covariance")
        return cls(np.asarray(mean, dtype=float), cov, L, jitter)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class TruncatedGaussianSpec:
    """``TN(mean, cov, lower, upper)`` in constraint coordinates ``z = Lambda xi``.

    ``factor`` (optional) is any ``F`` with ``F @ F.T == cov``. When the spec
    comes from :func:`push_forward` it is ``Lambda @ chol`` and has one column
    per knot, which keeps the samplers well defined even when ``q > m`` makes
    ``cov`` singular.
    """

    mean: np.ndarray
    cov: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lam: np.ndarray | None = None
    factor: np.ndarray | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        q = mean.shape[0]
        cov = np.asarray(self.cov, dtype=float).reshape(q, q)
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (q,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (q,)).copy()
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", symmetrize(cov))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if self.factor is None:
            object.__setattr__(self, "factor", psd_factor(self.cov))
        else:
            F = np.asarray(self.factor, dtype=float)
            if F.shape[0] != q:
                raise ValueError("factor must have one row per coordinate")
            object.__setattr__(self, "factor", F)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    def contains(self, z, tol=1e-8) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.all((z >= self.lower - tol) & (z <= self.upper + tol), axis=-1)


def _dense(phi):
    return phi.toarray() if sp.issparse(phi) else np.asarray(phi, dtype=float)


def _check_inputs(gram, phi, y, tau2):
    G = symmetrize(np.asarray(gram, dtype=float))
    m = G.shape[0]
    if G.shape != (m, m):
        raise ValueError("gram must be square")
    y = np.asarray(y, dtype=float).ravel()
    if phi is None:
        phi = np.zeros((0, m))
    if phi.shape != (y.size, m):
        raise ValueError(f"phi has shape {phi.shape}, expected ({y.size}, {m})")
    tau2 = float(tau2)
    if not tau2 >= 0:
        raise ValueError(f"noise variance must be nonnegative, got {tau2}")
    return G, phi, y, tau2


def condition(gram, phi, y, tau2) -> ConditionedGaussian:
    """Posterior of ``xi`` via the ``n x n`` observation covariance.

    ``tau2 = 0`` gives noise-free interpolation and requires
    ``Phi Gamma Phi^T`` to be invertible.
    """
    G, phi, y, tau2 = _check_inputs(gram, phi, y, tau2)
    n, m = phi.shape
    if n == 0:
        return ConditionedGaussian.from_moments(np.zeros(m), G)
    GPt = (phi @ G).T if sp.issparse(phi) else G @ phi.T
    K = symmetrize(np.asarray(phi @ GPt)) + tau2 * np.eye(n)
    try:
        LK = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        if tau2 == 0:
            raise FactorizationError(
                "noise-free observation covariance is singular; "
                "use a positive noise variance or fewer/unique observations"
            ) from None
        LK, _ = jitter_cholesky(K, what="observation covariance")
    W = scipy.linalg.solve_triangular(LK, GPt.T, lower=True)
    a = scipy.linalg.solve_triangular(LK, y, lower=True)
    mean = W.T @ a
    cov = G - W.T @ W
    return ConditionedGaussian.from_moments(mean, cov)


def condition_woodbury(gram, phi, y, tau2) -> ConditionedGaussian:
    """Same posterior as :func:`condition` using only ``m x m`` factorizations.

    With ``Gamma = L L^T`` and ``A = Phi L``::

        Sigma = L (I + A^T A / tau2)^{-1} L^T,   mu = Sigma Phi^T y / tau2
    """
    G, phi, y, tau2 = _check_inputs(gram, phi, y, tau2)
    if tau2 <= 0:
        raise ValueError("the matrix-inversion-lemma path needs tau2 > 0")
    n, m = phi.shape
    if n == 0:
        return ConditionedGaussian.from_moments(np.zeros(m), G)
    L = psd_factor(G)
    A = np.asarray(phi @ L)
    B = np.eye(L.shape[1]) + (A.T @ A) / tau2
    R = np.linalg.cholesky(symmetrize(B))
    V = scipy.linalg.solve_triangular(R, L.T, lower=True)
    c = scipy.linalg.solve_triangular(R, A.T @ y, lower=True)
    mean = V.T @ c / tau2
    cov = V.T @ V
    return ConditionedGaussian.from_moments(mean, cov)


def condition_auto(gram, phi, y, tau2) -> ConditionedGaussian:
    """Woodbury route when ``m < n / 2`` and ``tau2 > 0``, direct otherwise."""
    m = np.shape(gram)[0]
    n = 0 if phi is None else phi.shape[0]
    if tau2 > 0 and m < n / 2:
        return condition_woodbury(gram, phi, y, tau2)
    return condition(gram, phi, y, tau2)


def push_forward(cg: ConditionedGaussian, system: LinearConstraintSystem) -> TruncatedGaussianSpec:
    """Truncated Gaussian of ``Lambda xi``: ``TN(Lambda mu, Lambda Sigma Lambda^T, l, u)``."""
    lam = system.lam
    if lam.shape[1] != cg.dim:
        raise ValueError(f"constraint matrix has {lam.shape[1]} columns, posterior has {cg.dim}")
    return TruncatedGaussianSpec(
        mean=lam @ cg.mean,
        cov=symmetrize(lam @ cg.cov @ lam.T),
        lower=system.lower,
        upper=system.upper,
        lam=lam,
        factor=lam @ cg.chol,
    )


def log_marginal_likelihood(gram, phi, y, tau2, dgram=None, method="auto"):
    """Log density of ``y ~ N(0, Phi Gamma Phi^T + tau2 I)``.

    Parameters
    ----------
    gram, phi, y, tau2
        As in :func:`condition`.
    dgram : list of arrays, optional
        Derivatives of ``gram`` w.r.t. kernel hyperparameters. When given,
        the gradient is returned as well, with one entry per matrix followed
        by the derivative w.r.t. ``tau2``.
    method : {"auto", "direct", "lowrank"}
        ``"lowrank"`` works in ``m x m`` space; ``"auto"`` picks it when
        ``m < n`` and ``tau2 > 0``.

    Returns
    -------
    float, or (float, ndarray) when ``dgram`` is given.
    """
    G, phi, y, tau2 = _check_inputs(gram, phi, y, tau2)
    n, m = phi.shape
    if method == "auto":
        method = "lowrank" if (tau2 > 0 and m < n) else "direct"
    if method == "lowrank":
        if tau2 <= 0:
            raise ValueError("the low-rank likelihood needs tau2 > 0")
        return _lml_lowrank(G, phi, y, tau2, dgram)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    return _lml_direct(G, phi, y, tau2, dgram)


def _lml_direct(G, phi, y, tau2, dgram):
    n = y.size
    Pd = _dense(phi)
    K = symmetrize(Pd @ G @ Pd.T) + tau2 * np.eye(n)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        raise FactorizationError("observation covariance is not positive definite") from None
    alpha = scipy.linalg.cho_solve((L, True), y)
    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    if dgram is None:
        return float(value)
    Kinv = scipy.linalg.cho_solve((L, True), np.eye(n))
    b = Pd.T @ alpha
    M = Pd.T @ Kinv @ Pd
    grad = [0.5 * (b @ dG @ b - np.sum(M * dG)) for dG in dgram]
    grad.append(0.5 * (alpha @ alpha - np.trace(Kinv)))
    return float(value), np.array(grad)


def _lml_lowrank(G, phi, y, tau2, dgram):
    n = y.size
    L = psd_factor(G)
    P = phi.T @ phi
    P = P.toarray() if sp.issparse(P) else np.asarray(P)
    Pty = np.asarray(phi.T @ y).ravel()
    S = L.T @ P @ L
    R = np.linalg.cholesky(symmetrize(np.eye(L.shape[1]) + S / tau2))
    c = scipy.linalg.cho_solve((R, True), L.T @ Pty)
    alpha = (y - np.asarray(phi @ (L @ c)).ravel() / tau2) / tau2
    logdet = n * np.log(tau2) + 2.0 * np.sum(np.log(np.diag(R)))
    value = -0.5 * y @ alpha - 0.5 * logdet - 0.5 * n * LOG_2PI
    if dgram is None:
        return float(value)
    b = np.asarray(phi.T @ alpha).ravel()
    U = scipy.linalg.solve_triangular(R, L.T @ P, lower=True)
    M = (P - U.T @ U / tau2) / tau2
    trace_kinv = (n - np.trace(scipy.linalg.cho_solve((R, True), S)) / tau2) / tau2
    grad = [0.5 * (b @ dG @ b - np.sum(M * dG)) for dG in dgram]
    grad.append(0.5 * (alpha @ alpha - trace_kinv))
    return float(value), np.array(grad)
