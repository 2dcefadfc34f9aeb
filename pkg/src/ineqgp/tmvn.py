"""Samplers for truncated multivariate normals ``TN(mean, cov, lower, upper)``.

All samplers work in whitened coordinates: with ``cov = F F^T`` a draw is
``z = mean + F w`` where ``w`` is standard normal restricted to the polytope
``lower - mean <= F w <= upper - mean``. When the spec comes from
:func:`ineqgp.posterior.push_forward`, ``w`` are the whitened knot values, so
a singular ``cov`` (more constraints than knots) needs no special handling.

* :func:`sample_rsm` -- rejection sampling from the mode; exact and i.i.d.
* :func:`sample_gibbs` -- coordinate Gibbs on ``w``.
* :func:`sample_hmc` -- exact Hamiltonian Monte Carlo with wall reflections.
* :func:`sample_naive_rejection` -- propose from the untruncated Gaussian;
  a test oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _univariate
from .errors import DegenerateCovarianceError, SamplingError
from .posterior import TruncatedGaussianSpec
from .qp import box_mode

BURN_IN = 100
THINNING = 200
CHAIN_LENGTH = 10_000
FEAS_TOL = 1e-8
HMC_TIME = np.pi / 2
MAX_BOUNCES = 10_000
RSM_ABORT_PROPOSALS = 10_000_000
RSM_ABORT_RATE = 1e-6

SAMPLERS = ("rsm", "gibbs", "hmc", "naive")


@dataclass
class SampleChain:
    """Draws in constraint coordinates plus bookkeeping.

    ``proposals`` and ``accepted`` are meaningful for the rejection samplers
    (``accepted == len(draws)``); ``bounces`` counts wall reflections for HMC.
    ``knots`` holds recovered knot values once an emulator has solved for
    them; ``whitened`` holds the sampler's coordinates ``w``.
    """

    draws: np.ndarray
    sampler: str
    burn_in: int = 0
    thinning: int = 1
    proposals: int = 0
    accepted: int = 0
    wall_seconds: float = 0.0
    seed: int | None = None
    bounces: int = 0
    knots: np.ndarray | None = field(default=None, repr=False)
    whitened: np.ndarray | None = field(default=None, repr=False)

    @property
    def count(self) -> int:
        return self.draws.shape[0]

    @property
    def acceptance_rate(self) -> float:
        if self.proposals == 0:
            return 1.0
        return self.accepted / self.proposals


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _whitened(spec: TruncatedGaussianSpec):
    F = spec.factor
    return F, spec.lower - spec.mean, spec.upper - spec.mean


def _to_whitened(spec, z, what):
    F = spec.factor
    z = np.asarray(z, dtype=float)
    if z.shape != (spec.dim,):
        raise ValueError(f"{what} must have shape ({spec.dim},), got {z.shape}")
    w, *_ = np.linalg.lstsq(F, z - spec.mean, rcond=None)
    if np.max(np.abs(F @ w - (z - spec.mean)), initial=0.0) > 1e-6 * (1 + np.abs(z).max()):
        raise ValueError(f"{what} is not in the support of the distribution")
    return w


def _finish(spec, W, name, **meta) -> SampleChain:
    draws = spec.mean + W @ spec.factor.T
    if draws.size:
        bad = (draws < spec.lower - FEAS_TOL) | (draws > spec.upper + FEAS_TOL)
        if bad.any():
            i, k = np.argwhere(bad)[0]
            raise SamplingError(
                f"{name}: draw {i} violates bound {k} ({draws[i, k]:.3e} not in "
                f"[{spec.lower[k]:.3e}, {spec.upper[k]:.3e}])"
            )
    return SampleChain(draws, name, whitened=W, **meta)


def _feasible(W, F, lo, hi, tol=0.0):
    V = W @ F.T
    return np.all((V >= lo - tol) & (V <= hi + tol), axis=1)


def _batch_size(rate, need, r):
    cap = max(1, 4_000_000 // max(r, 1))
    want = int(1.2 * need / max(rate, 1e-7)) + 16
    return int(min(cap, max(want, 64)))


def sample_naive_rejection(spec: TruncatedGaussianSpec, count: int, seed=None,
                           max_proposals: int = 10_000_000) -> SampleChain:
    """Keep the feasible draws of ``N(mean, cov)``; exact but possibly slow."""
    rng = _rng(seed)
    F, lo, hi = _whitened(spec)
    r = F.shape[1]
    t0 = time.perf_counter()
    kept, proposals = [], 0
    n_kept = 0
    while n_kept < count:
        if proposals >= max_proposals:
            raise SamplingError(
                f"naive rejection: only {n_kept} of {count} draws after {proposals} proposals"
            )
        rate = (n_kept + 1) / (proposals + 1)
        B = min(_batch_size(rate, count - n_kept, r), max_proposals - proposals)
        W = rng.standard_normal((B, r))
        ok = _feasible(W, F, lo, hi)
        idx = np.flatnonzero(ok)
        take = idx[: count - n_kept]
        if take.size == count - n_kept:
            proposals += int(take[-1]) + 1
        else:
            proposals += B
        kept.append(W[take])
        n_kept += take.size
    W = np.concatenate(kept) if kept else np.zeros((0, r))
    return _finish(spec, W, "naive", proposals=proposals, accepted=count,
                   wall_seconds=time.perf_counter() - t0,
                   seed=seed if isinstance(seed, (int, np.integer)) else None)


def sample_rsm(spec: TruncatedGaussianSpec, count: int, mode=None, seed=None,
               whitened_mode=None) -> SampleChain:
    """Rejection sampling from the mode.

    Proposals ``z ~ N(mode, cov)`` are rejected if infeasible and otherwise
    accepted with probability ``exp((mean - mode)^T cov^{-1} (z - mode))``,
    which is at most one on the feasible set exactly when ``mode`` is the
    constrained maximizer. The draws are i.i.d. from the target.

    Parameters
    ----------
    mode : (q,) array, optional
        Constrained mode in constraint coordinates; computed if omitted.
    whitened_mode : (r,) array, optional
        The same mode in whitened coordinates, if already known.
    """
    rng = _rng(seed)
    F, lo, hi = _whitened(spec)
    r = F.shape[1]
    if whitened_mode is not None:
        w_star = np.asarray(whitened_mode, dtype=float)
    elif mode is not None:
        w_star = _to_whitened(spec, mode, "mode")
    else:
        w_star = box_mode(spec.mean, F, spec.lower, spec.upper)
    if not _feasible(w_star[None, :], F, lo, hi, tol=1e-7)[0]:
        raise ValueError("the mode is not feasible")
    t0 = time.perf_counter()
    kept, proposals, n_kept = [], 0, 0
    while n_kept < count:
        if proposals >= RSM_ABORT_PROPOSALS and n_kept / proposals < RSM_ABORT_RATE:
            raise SamplingError(
                f"RSM acceptance rate {n_kept / proposals:.2e} after {proposals} proposals; "
                "the truncation region is too restrictive for rejection sampling"
            )
        rate = (n_kept + 1) / (proposals + 1)
        B = _batch_size(rate, count - n_kept, r)
        W = w_star + rng.standard_normal((B, r))
        U = rng.random(B)
        log_ratio = -(W - w_star) @ w_star
        ok = _feasible(W, F, lo, hi)
        if np.any(log_ratio[ok] > 1e-8 * (1 + w_star @ w_star)):
            raise SamplingError("acceptance ratio exceeds one: the supplied mode is not the maximizer")
        ok &= np.log(U) <= log_ratio
        idx = np.flatnonzero(ok)
        take = idx[: count - n_kept]
        if take.size == count - n_kept:
            proposals += int(take[-1]) + 1
        else:
            proposals += B
        kept.append(W[take])
        n_kept += take.size
    W = np.concatenate(kept) if kept else np.zeros((0, r))
    return _finish(spec, W, "rsm", proposals=proposals, accepted=count,
                   wall_seconds=time.perf_counter() - t0,
                   seed=seed if isinstance(seed, (int, np.integer)) else None)


def rsm_acceptance(spec: TruncatedGaussianSpec, proposals: int, seed=None,
                   whitened_mode=None) -> tuple[int, int]:
    """Count RSM acceptances over a fixed number of proposals.

    Useful when the acceptance rate is too small to collect a full sample.
    Returns ``(accepted, proposals)``.
    """
    rng = _rng(seed)
    F, lo, hi = _whitened(spec)
    r = F.shape[1]
    w_star = (box_mode(spec.mean, F, spec.lower, spec.upper) if whitened_mode is None
              else np.asarray(whitened_mode, dtype=float))
    accepted, done = 0, 0
    batch = max(1, 2_000_000 // max(r, 1))
    while done < proposals:
        B = min(batch, proposals - done)
        W = w_star + rng.standard_normal((B, r))
        U = rng.random(B)
        ok = _feasible(W, F, lo, hi) & (np.log(U) <= -(W - w_star) @ w_star)
        accepted += int(ok.sum())
        done += B
    return accepted, done


def _start_state(spec, start, F, lo, hi):
    if start is None:
        return box_mode(spec.mean, F, spec.lower, spec.upper)
    w = _to_whitened(spec, start, "start")
    if not _feasible(w[None, :], F, lo, hi, tol=1e-7)[0]:
        raise ValueError("the start state violates the constraints")
    return w


def sample_gibbs(spec: TruncatedGaussianSpec, count: int, start=None, burn_in: int = BURN_IN,
                 thinning: int = THINNING, seed=None) -> SampleChain:
    """Coordinate-wise Gibbs sampler on the whitened coordinates.

    Each coordinate is drawn from its univariate truncated normal given the
    others; the truncation interval intersects the slabs of every constraint
    row. ``burn_in`` and ``thinning`` count full sweeps.

    Raises
    ------
    DegenerateCovarianceError
        If ``cov`` is rank deficient and the spec carries no knot-space
        factor (specs built by ``push_forward`` always do).
    """
    if spec.lam is None and spec.rank < spec.dim:
        raise DegenerateCovarianceError(
            f"covariance has rank {spec.rank} < {spec.dim}; build the spec with "
            "push_forward so the sampler can work on the knot values"
        )
    if thinning < 1 or burn_in < 0:
        raise ValueError("thinning must be >= 1 and burn_in >= 0")
    rng = _rng(seed)
    F, lo, hi = _whitened(spec)
    w0 = _start_state(spec, start, F, lo, hi)
    finite = np.isfinite(lo) | np.isfinite(hi)
    Fk = np.ascontiguousarray(F[finite])
    lo_k, hi_k = lo[finite], hi[finite]
    Ft = np.ascontiguousarray(Fk.T)
    nz = Ft != 0.0
    col_ptr = np.concatenate([[0], np.cumsum(nz.sum(axis=1))]).astype(np.int64)
    col_rows = np.nonzero(nz)[1].astype(np.int64)
    out = np.empty((count, F.shape[1]))
    _univariate.seed_numba(int(rng.integers(2**32)))
    t0 = time.perf_counter()
    _univariate.gibbs_chain(Ft, col_ptr, col_rows, lo_k, hi_k, w0.astype(float),
                            int(burn_in), int(count), int(thinning), out)
    wall = time.perf_counter() - t0
    return _finish(spec, out, "gibbs", burn_in=burn_in, thinning=thinning,
                   wall_seconds=wall,
                   seed=seed if isinstance(seed, (int, np.integer)) else None)


def _walls(F, lo, hi):
    fin_lo = np.isfinite(lo)
    fin_hi = np.isfinite(hi)
    normals = np.vstack([F[fin_lo], -F[fin_hi]])
    offsets = np.concatenate([-lo[fin_lo], hi[fin_hi]])
    return normals, offsets


def hmc_trajectory(x, v, normals, offsets, travel=HMC_TIME, max_bounces=MAX_BOUNCES,
                   last_wall=-1):
    """Follow ``x(t) = v sin t + x cos t`` for time ``travel``, reflecting at walls.

    The walls are ``normals @ x + offsets >= 0``. Returns the end position and
    the number of reflections.
    """
    a, b = v, x
    left = travel
    bounces = 0
    nn = np.einsum("ij,ij->i", normals, normals)
    while True:
        fa = normals @ a
        fb = normals @ b
        amp = np.hypot(fa, fb)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = -offsets / amp
            reach = (amp > 0) & (ratio >= -1.0) & (ratio <= 1.0)
            phase = np.arctan2(fa, fb)
            t_hit = np.where(reach, np.mod(phase + np.arccos(np.clip(ratio, -1, 1)), 2 * np.pi),
                             np.inf)
        # a state on (or a rounding error past) a wall and heading out bounces at once
        outward = (fb + offsets <= 0.0) & (fa < 0.0)
        t_hit[outward] = 0.0
        if last_wall >= 0 and t_hit[last_wall] < 1e-12:
            t_hit[last_wall] = np.inf
        k = int(np.argmin(t_hit)) if t_hit.size else -1
        if k < 0 or t_hit[k] >= left:
            return a * np.sin(left) + b * np.cos(left), bounces
        t = t_hit[k]
        pos = a * np.sin(t) + b * np.cos(t)
        vel = a * np.cos(t) - b * np.sin(t)
        f = normals[k]
        vel = vel - 2.0 * (vel @ f) / nn[k] * f
        a, b = vel, pos
        left -= t
        last_wall = k
        bounces += 1
        if bounces > max_bounces:
            raise SamplingError(
                f"HMC trajectory exceeded {max_bounces} wall reflections; "
                "the truncation region is nearly degenerate"
            )


def sample_hmc(spec: TruncatedGaussianSpec, count: int, start=None, burn_in: int = BURN_IN,
               seed=None, thinning: int = 1, travel: float = HMC_TIME) -> SampleChain:
    """Exact HMC for the truncated Gaussian.

    In whitened coordinates the Hamiltonian flow is harmonic,
    ``x(t) = a sin t + b cos t``. Times at which a trajectory reaches each
    wall are solved in closed form; the velocity is reflected at the first
    hit. Each iteration draws a fresh velocity and integrates for ``travel``
    (a quarter period by default). Every emitted state is feasible.
    """
    rng = _rng(seed)
    F, lo, hi = _whitened(spec)
    normals, offsets = _walls(F, lo, hi)
    x = _start_state(spec, start, F, lo, hi)
    r = F.shape[1]
    total = burn_in + count * thinning
    out = np.empty((count, r))
    bounces = 0
    kept = 0
    t0 = time.perf_counter()
    for it in range(total):
        v = rng.standard_normal(r)
        x, nb = hmc_trajectory(x, v, normals, offsets, travel)
        bounces += nb
        if it >= burn_in and (it - burn_in + 1) % thinning == 0:
            out[kept] = x
            kept += 1
    wall = time.perf_counter() - t0
    return _finish(spec, out, "hmc", burn_in=burn_in, thinning=thinning,
                   wall_seconds=wall, bounces=bounces,
                   seed=seed if isinstance(seed, (int, np.integer)) else None)


def sample(spec: TruncatedGaussianSpec, sampler: str, count: int, seed=None, **kwargs) -> SampleChain:
    """Dispatch on the sampler name (``rsm``, ``gibbs``, ``hmc``, ``naive``)."""
    name = sampler.lower()
    if name == "rsm":
        return sample_rsm(spec, count, seed=seed, **kwargs)
    if name == "gibbs":
        return sample_gibbs(spec, count, seed=seed, **kwargs)
    if name == "hmc":
        return sample_hmc(spec, count, seed=seed, **kwargs)
    if name in ("naive", "naiverejection", "naive_rejection"):
        return sample_naive_rejection(spec, count, seed=seed, **kwargs)
    raise ValueError(f"unknown sampler {sampler!r}; choose from {', '.join(SAMPLERS)}")


def truncated_standard_normal(a, b, size=None, seed=None) -> np.ndarray:
    """Draws of ``N(0, 1)`` restricted to ``[a, b]`` (elementwise, broadcast)."""
    rng = _rng(seed)
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    shape = a.shape if size is None else tuple(np.atleast_1d(size))
    a = np.broadcast_to(a, shape).ravel().copy()
    b = np.broadcast_to(b, shape).ravel().copy()
    out = np.empty(a.size)
    _univariate.seed_numba(int(rng.integers(2**32)))
    _univariate.truncnorm_std_many(a, b, out)
    return out.reshape(shape)
