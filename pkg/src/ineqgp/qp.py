"""Posterior mode under linear inequality constraints.

The mode of ``N(mu, Sigma)`` restricted to ``l <= Lambda xi <= u`` solves::

    minimize   xi^T Sigma^{-1} xi - 2 mu^T Sigma^{-1} xi
    subject to l <= Lambda xi <= u

Writing ``xi = mu + C w`` with ``C C^T = Sigma`` turns this into the
minimum-norm point of a polytope, ``min 1/2 |w|^2 s.t. A w >= b``, which is
solved with the dual active-set method of Goldfarb and Idnani. With an
identity Hessian the method's ``J`` matrix is simply the orthogonal factor
of the active normals, kept up to date with Householder reflections (add) and
Givens rotations (drop).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .constraints import LinearConstraintSystem
from .errors import InfeasibleProblemError, MaxIterationsError
from .posterior import ConditionedGaussian

COND_LIMIT = 1e12


@dataclass
class MinNormResult:
    w: np.ndarray
    active: list
    multipliers: np.ndarray
    iterations: int
    method: str = "dual-active-set"


@dataclass
class QpResult:
    """Constrained posterior mode.

    ``active_rows`` index rows of the constraint system that are tight at the
    solution; ``kkt_residual`` is the largest of the stationarity,
    primal/dual feasibility and complementary-slackness violations, measured
    in whitened coordinates.
    """

    mode: np.ndarray
    active_rows: list
    kkt_residual: float
    iterations: int
    method: str = "dual-active-set"
    whitened: np.ndarray = field(default=None, repr=False)
    active_set: list = field(default_factory=list, repr=False)


def _householder_into(J, q, d):
    # Reflect columns q: of J so that J^T n has zeros below position q.
    v = d[q:].copy()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    alpha = -norm if v[0] >= 0 else norm
    v[0] -= alpha
    vv = v @ v
    if vv > 0:
        Jt = J[:, q:]
        Jt -= np.outer(Jt @ v, v * (2.0 / vv))
    return alpha


def _drop(J, R, q, k):
    # Remove active column k and restore the triangular structure.
    R[:q, k:q - 1] = R[:q, k + 1:q]
    R[:, q - 1] = 0.0
    for i in range(k, q - 1):
        a, b = R[i, i], R[i + 1, i]
        h = np.hypot(a, b)
        if h == 0.0:
            continue
        c, s = a / h, b / h
        ri, rj = R[i, i:q - 1].copy(), R[i + 1, i:q - 1].copy()
        R[i, i:q - 1] = c * ri + s * rj
        R[i + 1, i:q - 1] = -s * ri + c * rj
        R[i + 1, i] = 0.0
        ji, jj = J[:, i].copy(), J[:, i + 1].copy()
        J[:, i] = c * ji + s * jj
        J[:, i + 1] = -s * ji + c * jj
    R[q - 1, :] = 0.0


def min_norm_point(A, b, warm_start=None, tol=1e-11, max_iter=None) -> MinNormResult:
    """Solve ``min 1/2 |w|^2 s.t. A @ w >= b`` with the Goldfarb-Idnani method.

    Parameters
    ----------
    A : (p, n) array
    b : (p,) array
    warm_start : iterable of int, optional
        Rows tried first whenever they are violated (typically the active set
        of a previous, similar solve).
    tol : float
        Feasibility tolerance on row-normalized violations.

    Raises
    ------
    InfeasibleProblemError
        If no point satisfies the constraints.
    MaxIterationsError
        If the iteration cap is reached; ``best`` holds the current iterate.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    p, n = A.shape
    if max_iter is None:
        max_iter = 20 * (p + n) + 100
    raw_norms = np.linalg.norm(A, axis=1)
    if np.any((raw_norms == 0) & (b > tol)):
        raise InfeasibleProblemError("a zero constraint row requires 0 >= positive bound")
    norms = np.where(raw_norms == 0, 1.0, raw_norms)
    x = np.zeros(n)
    J = np.eye(n)
    R = np.zeros((n, n))
    active: list = []
    u = np.zeros(0)
    preferred = np.zeros(p, dtype=bool)
    if warm_start is not None:
        ws = np.asarray(list(warm_start), dtype=int)
        preferred[ws[(ws >= 0) & (ws < p)]] = True
    it = 0
    while True:
        s = (A @ x - b) / norms
        violated = s < -tol
        if active:
            violated[active] = False
        if not violated.any():
            break
        pool = violated & preferred if (violated & preferred).any() else violated
        cand = np.flatnonzero(pool)
        pidx = int(cand[np.argmin(s[cand])])
        npv = A[pidx]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise MaxIterationsError(
                    f"active-set solver stopped after {max_iter} iterations",
                    best=MinNormResult(x.copy(), list(active), u.copy(), it))
            q = len(active)
            d = J.T @ npv
            z = J[:, q:] @ d[q:]
            zz = d[q:] @ d[q:]
            if q:
                r = scipy.linalg.solve_triangular(R[:q, :q], d[:q], lower=False)
            else:
                r = np.zeros(0)
            pos = r > 1e-14 * max(1.0, np.abs(r).max(initial=0.0))
            t1, k = np.inf, -1
            if pos.any():
                ratios = np.full(q, np.inf)
                ratios[pos] = u[pos] / r[pos]
                k = int(np.argmin(ratios))
                t1 = max(ratios[k], 0.0)
            slack = npv @ x - b[pidx]
            t2 = np.inf
            if zz > (1e-13 * norms[pidx]) ** 2:
                t2 = max(-slack / zz, 0.0)
            t = min(t1, t2)
            if not np.isfinite(t):
                raise InfeasibleProblemError(
                    f"constraint {pidx} cannot be satisfied together with the active set")
            if q:
                u = u - t * r
            u_p += t
            if np.isfinite(t2):
                x = x + t * z
            if t2 <= t1:
                alpha = _householder_into(J, q, d)
                R[:q, q] = d[:q]
                R[q, q] = alpha
                active.append(pidx)
                u = np.append(u, u_p)
                diag = np.abs(np.diag(R)[:q + 1])
                if diag.min() == 0 or diag.max() / diag.min() > COND_LIMIT:
                    raise _IllConditioned(x)
                break
            _drop(J, R, q, k)
            del active[k]
            u = np.delete(u, k)
    return MinNormResult(x, active, np.maximum(u, 0.0), it)


class _IllConditioned(Exception):
    def __init__(self, x):
        self.x = x


def dual_projected_gradient(A, b, tol=1e-10, max_iter=200000) -> MinNormResult:
    """Minimum-norm point via projected gradient ascent on the dual.

    The dual of ``min 1/2 |w|^2 s.t. A w >= b`` is
    ``max_{lam >= 0} b^T lam - 1/2 |A^T lam|^2`` with ``w = A^T lam``; it is
    solved by accelerated projected gradient with backtracking. Slower than
    the active-set method but insensitive to ill-conditioned active sets.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    p, n = A.shape
    lam = np.zeros(p)
    y = lam.copy()
    tk = 1.0
    step = 1.0 / max(np.linalg.norm(A, 2) ** 2, 1e-300)

    def dual(v):
        w = A.T @ v
        return b @ v - 0.5 * w @ w, b - A @ w

    f_y, g_y = dual(y)
    for it in range(1, max_iter + 1):
        while True:
            cand = np.maximum(y + step * g_y, 0.0)
            f_c, _ = dual(cand)
            diff = cand - y
            if f_c >= f_y + g_y @ diff - 0.5 / step * diff @ diff - 1e-15 * abs(f_y):
                break
            step *= 0.5
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = cand + ((tk - 1.0) / t_next) * (cand - lam)
        lam, tk = cand, t_next
        f_y, g_y = dual(y)
        if it % 50 == 0:
            w = A.T @ lam
            s = A @ w - b
            gap = max(np.max(-s, initial=0.0), np.max(np.abs(lam * s), initial=0.0))
            if gap < tol:
                break
    w = A.T @ lam
    active = list(np.flatnonzero(lam > 0))
    return MinNormResult(w, active, lam[active], it, "projected-gradient")


def _whitened_rows(lam, offset, factor, lower, upper):
    """Rows of ``A w >= b`` for ``lower <= lam @ (offset + factor @ w) <= upper``."""
    F = lam @ factor
    c = lam @ offset
    lo_rows = np.flatnonzero(np.isfinite(lower))
    hi_rows = np.flatnonzero(np.isfinite(upper))
    A = np.vstack([F[lo_rows], -F[hi_rows]])
    b = np.concatenate([lower[lo_rows] - c[lo_rows], c[hi_rows] - upper[hi_rows]])
    origin = np.concatenate([lo_rows, hi_rows])
    return A, b, origin


def kkt_residual(A, b, w, active, multipliers) -> float:
    """Largest stationarity / feasibility / complementarity violation."""
    lam = np.zeros(A.shape[0])
    lam[list(active)] = multipliers
    s = A @ w - b
    stat = np.linalg.norm(w - A.T @ lam)
    primal = np.max(-s, initial=0.0)
    dual = np.max(-lam, initial=0.0)
    comp = np.max(np.abs(lam * s), initial=0.0)
    return float(max(stat, primal, dual, comp))


def solve_whitened(A, b, warm_start=None, tol=1e-11) -> MinNormResult:
    """Active-set solve, falling back to dual projected gradient if ill-conditioned."""
    try:
        return min_norm_point(A, b, warm_start=warm_start, tol=tol)
    except _IllConditioned:
        return dual_projected_gradient(A, b)


def solve_map(cg: ConditionedGaussian, system: LinearConstraintSystem,
              warm_start=None, tol: float = 1e-11) -> QpResult:
    """Maximum a posteriori knot values under the constraint system.

    ``warm_start`` may be the ``active_set`` of an earlier :class:`QpResult`.
    """
    if system.n_knots != cg.dim:
        raise ValueError(f"system has {system.n_knots} knots, posterior has {cg.dim}")
    A, b, origin = _whitened_rows(system.lam, cg.mean, cg.chol, system.lower, system.upper)
    if A.shape[0] == 0:
        return QpResult(cg.mean.copy(), [], 0.0, 0, whitened=np.zeros(cg.dim))
    res = solve_whitened(A, b, warm_start=warm_start, tol=tol)
    mode = cg.mean + cg.chol @ res.w
    resid = kkt_residual(A, b, res.w, res.active, res.multipliers)
    rows = sorted({int(origin[i]) for i in res.active})
    return QpResult(mode, rows, resid, res.iterations, res.method,
                    whitened=res.w, active_set=list(res.active))


def box_mode(mean, factor, lower, upper, tol: float = 1e-11) -> np.ndarray:
    """Whitened mode ``w`` of ``N(mean, F F^T)`` truncated to ``[lower, upper]``.

    Used by the samplers when they are handed a bare truncated-Gaussian spec.
    """
    q = len(mean)
    A, b, _ = _whitened_rows(np.eye(q), np.asarray(mean, float), np.asarray(factor, float),
                             np.asarray(lower, float), np.asarray(upper, float))
    if A.shape[0] == 0:
        return np.zeros(factor.shape[1])
    return solve_whitened(A, b, tol=tol).w
