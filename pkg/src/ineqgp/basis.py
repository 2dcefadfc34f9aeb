"""Equispaced knot grids and the piecewise-(multi)linear hat basis.

Knot values are flattened in row-major order over the per-dimension knot
indices ``(j_1, ..., j_d)``: the last dimension varies fastest. Every matrix
indexed by knots (covariance, design matrix, constraint coefficients) uses
this ordering.

Indices are zero-based throughout the library.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class KnotGrid:
    """Tensor grid of equispaced knots on ``[0, 1]^d``.

    Parameters
    ----------
    dims : tuple of int
        Knot count per dimension, each at least 2.
    """

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(m) for m in np.atleast_1d(self.dims))
        if len(dims) < 1:
            raise ValueError("a grid needs at least one dimension")
        if any(m < 2 for m in dims):
            raise ValueError(f"every dimension needs at least 2 knots, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        """Total number of knots ``m = prod(dims)``."""
        return int(np.prod(self.dims))

    def spacing(self, dim: int = 0) -> float:
        return 1.0 / (self.dims[dim] - 1)

    def knots(self, dim: int = 0) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.dims[dim])

    def axes(self) -> list:
        return [self.knots(k) for k in range(self.ndim)]

    def points(self) -> np.ndarray:
        """All knot locations, shape ``(m, d)``, in flattened order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def flat_index(self, multi_index) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.dims))

    def multi_index(self, flat) -> tuple:
        return tuple(int(i) for i in np.unravel_index(int(flat), self.dims))


def _check_unit(x, what="input"):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < -_EDGE_TOL) or np.any(x > 1 + _EDGE_TOL):
        bad = x[(~np.isfinite(x)) | (x < -_EDGE_TOL) | (x > 1 + _EDGE_TOL)]
        raise ValueError(
            f"{what} must lie in [0, 1] (normalize inputs first); got e.g. {bad.ravel()[:3]}"
        )
    return np.clip(x, 0.0, 1.0)


def hat(grid: KnotGrid, dim: int, j: int, x) -> np.ndarray:
    """Hat function of knot ``j`` (zero-based) along ``dim`` evaluated at ``x``."""
    m = grid.dims[dim]
    if not 0 <= j < m:
        raise IndexError(f"knot index {j} out of range for {m} knots")
    x = _check_unit(x)
    # index units, as in design_matrix, so knots map to exact integers
    r = np.abs(_index_units(x, m) - j)
    out = np.where(r <= 1.0, 1.0 - r, 0.0)
    return out if out.ndim else float(out)


def _index_units(x, m):
    # position in knot-index units; values within a few ulps of a knot snap
    # onto it so that knots given as floats reproduce unit basis rows
    s = np.asarray(x, dtype=float) * (m - 1)
    r = np.rint(s)
    return np.where(np.abs(s - r) <= 4 * np.finfo(float).eps * np.maximum(r, 1.0), r, s)


def _cell_weights(grid: KnotGrid, X: np.ndarray):
    # per-dimension left knot index and fractional position inside the cell
    left = np.empty(X.shape, dtype=np.int64)
    frac = np.empty(X.shape)
    for k, m in enumerate(grid.dims):
        s = _index_units(X[:, k], m)
        i = np.minimum(np.floor(s).astype(np.int64), m - 2)
        left[:, k] = i
        frac[:, k] = s - i
    return left, frac


def _as_inputs(grid: KnotGrid, points) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1) if grid.ndim == 1 else X.reshape(1, -1)
    if X.shape[1] != grid.ndim:
        raise ValueError(f"inputs have {X.shape[1]} columns, grid has {grid.ndim} dims")
    return _check_unit(X, "inputs")


def design_matrix(grid: KnotGrid, points) -> sp.csr_matrix:
    """Sparse ``n x m`` matrix ``Phi[i, j] = phi_j(x_i)``.

    Each row holds the multilinear weights of the surrounding cell's corners:
    at most ``2^d`` nonzeros, nonnegative, summing to one.
    """
    X = _as_inputs(grid, points)
    n, d = X.shape
    left, frac = _cell_weights(grid, X)
    strides = np.array([int(np.prod(grid.dims[k + 1:])) for k in range(d)])
    rows, cols, vals = [], [], []
    for corner in product((0, 1), repeat=d):
        c = np.asarray(corner)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        idx = (left + c) @ strides
        rows.append(np.arange(n))
        cols.append(idx)
        vals.append(w)
    Phi = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, grid.size),
    )
    Phi.eliminate_zeros()
    Phi.sort_indices()
    return Phi


def evaluate_emulator(grid: KnotGrid, xi, points) -> np.ndarray:
    """Piecewise-multilinear interpolation of knot values ``xi`` at ``points``.

    ``xi`` may be a single knot vector of length ``m`` or a stack ``(s, m)``
    of them; the result has shape ``(n,)`` or ``(s, n)`` respectively.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != grid.size:
        raise ValueError(f"knot vector has length {xi.shape[-1]}, grid has {grid.size} knots")
    Phi = design_matrix(grid, points)
    if xi.ndim == 1:
        return Phi @ xi
    return (Phi @ xi.T).T


@dataclass(frozen=True)
class InputScaler:
    """Per-dimension affine map from the raw input box onto ``[0, 1]^d``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("lower and upper must have the same length")
        if np.any(hi <= lo):
            raise ValueError(f"each input range needs upper > lower, got {lo} .. {hi}")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    @classmethod
    def fit(cls, X, domain=None) -> "InputScaler":
        """Range of the data, or an explicit ``domain`` of ``(lo, hi)`` pairs."""
        if domain is not None:
            dom = np.asarray(domain, dtype=float).reshape(-1, 2)
            return cls(tuple(dom[:, 0]), tuple(dom[:, 1]))
        X = np.asarray(X, dtype=float)
        X = X.reshape(-1, 1) if X.ndim == 1 else X
        lo, hi = X.min(axis=0), X.max(axis=0)
        # a constant column gets a unit-width box so the map stays defined
        hi = np.where(hi > lo, hi, lo + 1.0)
        return cls(tuple(lo), tuple(hi))

    @property
    def ndim(self) -> int:
        return len(self.lower)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        X = X.reshape(-1, 1) if X.ndim == 1 and self.ndim == 1 else np.atleast_2d(X)
        return (X - np.asarray(self.lower)) / (np.asarray(self.upper) - np.asarray(self.lower))

    def inverse(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return np.asarray(self.lower) + U * (np.asarray(self.upper) - np.asarray(self.lower))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data) -> "InputScaler":
        return cls(tuple(data["lower"]), tuple(data["upper"]))
