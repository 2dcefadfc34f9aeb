"""Effective sample size, time-normalised ESS and prediction scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft

FFT_THRESHOLD = 20_000
MIN_LENGTH = 10


class EssResult(NamedTuple):
    """Details of one ESS estimate.

    ``flag`` is ``"ok"``, ``"degenerate"`` (constant series) or
    ``"antithetic"`` (negative integrated autocorrelation; clamped at n).
    """

    ess: float
    tau: float
    pairs: np.ndarray
    flag: str


def _autocov_fft(x):
    n = x.size
    size = scipy.fft.next_fast_len(2 * n)
    f = scipy.fft.rfft(x, size)
    return scipy.fft.irfft(f * np.conj(f), size)[:n] / n


class _Autocov:
    # Lazily evaluated biased autocovariances gamma_k = sum x_t x_{t+k} / n.
    def __init__(self, x):
        self.x = x
        self.n = x.size
        self.full = _autocov_fft(x) if self.n > FFT_THRESHOLD else None

    def __call__(self, k):
        if self.full is not None:
            return self.full[k]
        return float(self.x[: self.n - k] @ self.x[k:]) / self.n


def _convex_minorant(values):
    # greatest convex minorant of (k, values[k]) via the lower hull
    k = len(values)
    if k < 3:
        return values.copy()
    hull = [0]
    for i in range(1, k):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or above the chord a -> i
            if (values[b] - values[a]) * (i - a) >= (values[i] - values[a]) * (b - a):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(np.arange(k), hull, values[hull])


def geyer_pairs(series) -> tuple[np.ndarray, float]:
    """Pair sums ``gamma_{2k} + gamma_{2k+1}`` after Geyer's adjustments.

    The initial positive sequence is truncated at the first non-positive
    pair, made non-increasing, then replaced by its greatest convex minorant.
    Returns the adjusted pairs and ``gamma_0``.
    """
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    acov = _Autocov(x)
    g0 = acov(0)
    pairs = []
    max_lag = x.size // 2
    k = 0
    while 2 * k + 1 <= max_lag:
        p = (g0 if k == 0 else acov(2 * k)) + acov(2 * k + 1)
        if p <= 0:
            break
        pairs.append(p)
        k += 1
    pairs = np.minimum.accumulate(np.asarray(pairs, dtype=float))
    pairs = _convex_minorant(pairs)
    if pairs.size:
        assert np.all(pairs >= 0) and np.all(np.diff(pairs) <= 1e-12 * pairs[0])
    return pairs, g0


def ess(series, full_output: bool = False):
    """Effective sample size ``n / (1 + 2 sum_k rho_k)`` of a scalar series.

    Autocorrelations are summed with Geyer's initial convex sequence
    estimator; the result is clamped to ``[1, n]``.

    Parameters
    ----------
    series : (n,) array_like
        Chain output, ``n >= 10``.
    full_output : bool
        Return an :class:`EssResult` instead of the bare number.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < MIN_LENGTH:
        raise ValueError(f"need at least {MIN_LENGTH} draws to estimate ESS, got {n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    scale = np.max(np.abs(x - x.mean()))
    if scale == 0 or scale <= 1e-14 * max(np.abs(x).max(), 1e-300):
        res = EssResult(float(n), 1.0, np.zeros(0), "degenerate")
        return res if full_output else res.ess
    pairs, g0 = geyer_pairs(x)
    tau = -1.0 + 2.0 * pairs.sum() / g0 if pairs.size else -1.0
    flag = "ok"
    if tau <= 1.0 / n:
        # the lag-0 pair was already non-positive: antithetic chain
        flag = "antithetic"
        value = float(n)
    else:
        value = float(np.clip(n / tau, 1.0, n))
        if n / tau > n:
            flag = "antithetic"
    res = EssResult(value, float(tau), pairs, flag)
    return res if full_output else res.ess


@dataclass(frozen=True)
class ESSReport:
    """Per-coordinate ESS, its (10%, 50%, 90%) quantiles and TN-ESS."""

    per_coordinate_ess: np.ndarray
    quantiles: tuple
    wall_seconds: float
    tn_ess: float
    n_draws: int
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "ess_q10": float(self.quantiles[0]),
            "ess_q50": float(self.quantiles[1]),
            "ess_q90": float(self.quantiles[2]),
            "wall_seconds": float(self.wall_seconds),
            "tn_ess": float(self.tn_ess),
        }


def ess_report(draws, wall_seconds: float | None = None) -> ESSReport:
    """ESS summary over all coordinates of a chain.

    ``draws`` is a :class:`~ineqgp.tmvn.SampleChain` (its recovered knot
    values are used when present, otherwise its draws) or an ``(n, k)``
    array. Chains shorter than 10 draws report ``n`` per coordinate.
    """
    if hasattr(draws, "draws"):
        chain = draws
        values = chain.knots if chain.knots is not None else chain.draws
        if wall_seconds is None:
            wall_seconds = chain.wall_seconds
    else:
        values = draws
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, k = values.shape
    if n == 0:
        raise ValueError("chain is empty")
    if n < MIN_LENGTH:
        per = np.full(k, float(n))
        flags = ("short",) * k
    else:
        results = [ess(values[:, j], full_output=True) for j in range(k)]
        per = np.array([r.ess for r in results])
        flags = tuple(r.flag for r in results)
    qs = tuple(float(v) for v in np.quantile(per, [0.1, 0.5, 0.9]))
    wall = float(wall_seconds) if wall_seconds is not None else float("nan")
    tn = qs[0] / wall if wall > 0 else float("inf")
    return ESSReport(per, qs, wall, tn, n, flags)


def smse(predictions, truth) -> float:
    """Mean squared error divided by the variance of ``truth``."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} truth values")
    if t.size < 2:
        raise ValueError("need at least two test points")
    var = t.var()
    if var <= 1e-300 or np.ptp(t) == 0:
        raise ValueError("truth is constant; the standardised error is undefined")
    return float(np.mean((p - t) ** 2) / var)


def q2(predictions, truth) -> float:
    """Predictivity coefficient ``1 - SMSE``; equals 1 for a perfect predictor."""
    return 1.0 - smse(predictions, truth)
