"""Compiled kernels: univariate truncated normal draws and the Gibbs sweep.

The standard normal CDF and quantile come from ``scipy.special`` through its
Cython C-API, so they can be called from nopython code.
"""

import ctypes
import math

import numpy as np
from numba import njit
from numba.extending import get_cython_function_address

_dd = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double)
_ndtr = _dd(get_cython_function_address("scipy.special.cython_special", "__pyx_fuse_1ndtr"))
_ndtri = _dd(get_cython_function_address("scipy.special.cython_special", "ndtri"))

# beyond this many standard deviations the inverse CDF loses precision
TAIL_SWITCH = 4.0


@njit
def seed_numba(seed):
    np.random.seed(seed)


@njit
def _right_tail(a, b):
    # exponential proposal for [a, b] with a >= TAIL_SWITCH
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    if b - a < 1.0 / lam:
        # narrow window: uniform proposal, acceptance >= exp(-1)
        while True:
            z = a + (b - a) * np.random.random()
            if np.random.random() <= math.exp(-0.5 * (z * z - a * a)):
                return z
    while True:
        z = a - math.log(1.0 - np.random.random()) / lam
        if z > b:
            continue
        d = z - lam
        if np.random.random() <= math.exp(-0.5 * d * d):
            return z


@njit
def truncnorm_std(a, b):
    """One draw of ``N(0, 1)`` restricted to ``[a, b]``."""
    if not a < b:
        return 0.5 * (a + b) if a - b < 1e-9 else np.nan
    if a >= TAIL_SWITCH:
        return _right_tail(a, b)
    if b <= -TAIL_SWITCH:
        return -_right_tail(-b, -a)
    u = np.random.random()
    if a >= 0.0:
        pa = _ndtr(-a)
        pb = _ndtr(-b)
        x = -_ndtri(pa - u * (pa - pb))
    else:
        pa = _ndtr(a)
        pb = _ndtr(b)
        x = _ndtri(pa + u * (pb - pa))
    if x < a:
        x = a
    elif x > b:
        x = b
    return x


@njit
def truncnorm_std_many(a, b, out):
    for i in range(out.shape[0]):
        out[i] = truncnorm_std(a[i], b[i])


# reassociation lets the min/max reductions vectorize; inf and nan keep
# their IEEE meaning (one-sided bounds are infinite)
_FAST = {"reassoc", "nsz", "arcp", "contract"}


@njit(fastmath=_FAST)
def gibbs_chain(Ft, col_ptr, col_rows, lo, hi, w0, n_burn, n_keep, thin, out):
    """Coordinate Gibbs on ``w ~ N(0, I)`` restricted to ``lo <= F w <= hi``.

    ``Ft`` is ``F`` transposed (row ``j`` holds column ``j`` of ``F``);
    ``col_rows[col_ptr[j]:col_ptr[j+1]]`` lists the rows where column ``j``
    is nonzero. Stores ``n_keep`` states, one every ``thin`` sweeps after
    ``n_burn`` sweeps, into ``out``.
    """
    r = w0.shape[0]
    q = lo.shape[0]
    nnz = col_rows.shape[0]
    # flat copies of the nonzeros: value, reciprocal, and the bound hit
    # first / second when moving the coordinate upwards
    vals = np.empty(nnz)
    inv = np.empty(nnz)
    first = np.empty(nnz)
    second = np.empty(nnz)
    for j in range(r):
        for idx in range(col_ptr[j], col_ptr[j + 1]):
            k = col_rows[idx]
            f = Ft[j, k]
            vals[idx] = f
            inv[idx] = 1.0 / f
            if f > 0.0:
                first[idx] = lo[k]
                second[idx] = hi[k]
            else:
                first[idx] = hi[k]
                second[idx] = lo[k]
    w = w0.copy()
    s = np.zeros(q)
    total = n_burn + n_keep * thin
    kept = 0
    for sweep in range(total):
        if sweep % 64 == 0:
            # refresh the running constraint values against rounding drift
            for k in range(q):
                s[k] = 0.0
            for j in range(r):
                for idx in range(col_ptr[j], col_ptr[j + 1]):
                    s[col_rows[idx]] += vals[idx] * w[j]
        for j in range(r):
            wj = w[j]
            a = -np.inf
            b = np.inf
            p0 = col_ptr[j]
            p1 = col_ptr[j + 1]
            if p1 > p0 and col_rows[p1 - 1] - col_rows[p0] == p1 - p0 - 1:
                # rows form a contiguous block (triangular factors): direct indexing
                off = col_rows[p0] - p0
                for idx in range(p0, p1):
                    rest = s[idx + off] - vals[idx] * wj
                    a = max(a, (first[idx] - rest) * inv[idx])
                    b = min(b, (second[idx] - rest) * inv[idx])
            else:
                for idx in range(p0, p1):
                    rest = s[col_rows[idx]] - vals[idx] * wj
                    a = max(a, (first[idx] - rest) * inv[idx])
                    b = min(b, (second[idx] - rest) * inv[idx])
            if a > b:
                # rounding at an active wall; keep the current value
                new = wj
            else:
                new = truncnorm_std(a, b)
            delta = new - wj
            if delta != 0.0:
                if p1 > p0 and col_rows[p1 - 1] - col_rows[p0] == p1 - p0 - 1:
                    off = col_rows[p0] - p0
                    for idx in range(p0, p1):
                        s[idx + off] += vals[idx] * delta
                else:
                    for idx in range(p0, p1):
                        s[col_rows[idx]] += vals[idx] * delta
                w[j] = new
        if sweep >= n_burn and (sweep - n_burn + 1) % thin == 0:
            out[kept, :] = w
            kept += 1
    return kept
