"""Linear inequality systems ``l <= Lambda @ xi <= u`` on knot values.

Builders cover the usual shape constraints on a :class:`~ineqgp.basis.KnotGrid`
(boundedness, monotonicity along a dimension, convexity along a dimension);
:func:`compose` stacks them into one system. Because the emulator is
piecewise multilinear, bound and monotonicity constraints imposed at the
knots hold everywhere in the input domain.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .basis import KnotGrid
from .errors import ConstraintError, RankDeficientError

UP = "up"
DOWN = "down"
_DIRECTIONS = {
    "up": UP, "nondecreasing": UP, "increasing": UP, "+": UP,
    "down": DOWN, "nonincreasing": DOWN, "decreasing": DOWN, "-": DOWN,
}


@dataclass(frozen=True, eq=False)
class LinearConstraintSystem:
    """Triple ``(lam, lower, upper)`` encoding ``q`` inequalities on ``m`` knots.

    Infinite bounds are written as ``-np.inf`` / ``np.inf``. ``tags`` records
    where each row came from (``"bound"``, ``"monotone(k,up)"``,
    ``"convex(k)"`` or ``"custom"``), and ``dims`` the knot grid shape when
    the system was built from one.
    """

    lam: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    tags: tuple = ()
    dims: tuple | None = None

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        q = lam.shape[0]
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (q,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (q,)).copy()
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ConstraintError("bounds must not be NaN")
        if np.any(lower > upper):
            k = int(np.argmax(lower > upper))
            raise ConstraintError(f"row {k}: lower bound {lower[k]} exceeds upper {upper[k]}")
        if np.any(np.isinf(lower) & np.isinf(upper)):
            k = int(np.argmax(np.isinf(lower) & np.isinf(upper)))
            raise ConstraintError(f"row {k} has no finite bound")
        tags = tuple(self.tags) if self.tags else ("custom",) * q
        if len(tags) != q:
            raise ConstraintError("one tag per row is required")
        for name, arr in (("lam", lam), ("lower", lower), ("upper", upper)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "tags", tags)
        if self.dims is not None:
            dims = tuple(int(v) for v in self.dims)
            if int(np.prod(dims)) != lam.shape[1]:
                raise ConstraintError("dims do not match the number of columns")
            object.__setattr__(self, "dims", dims)

    @classmethod
    def empty(cls, m: int, dims=None) -> "LinearConstraintSystem":
        return cls(np.zeros((0, m)), np.zeros(0), np.zeros(0), (), dims)

    @property
    def n_rows(self) -> int:
        return self.lam.shape[0]

    @property
    def n_knots(self) -> int:
        return self.lam.shape[1]

    def rank(self) -> int:
        if self.n_rows == 0:
            return 0
        return int(np.linalg.matrix_rank(self.lam))

    def values(self, xi) -> np.ndarray:
        return np.asarray(xi, dtype=float) @ self.lam.T

    def contains(self, xi, tol: float = 1e-8) -> bool:
        return not check_feasible(self, xi, tol)

    def to_dict(self) -> dict:
        enc = lambda a: [None if np.isinf(v) else float(v) for v in a]
        rows, cols = np.nonzero(self.lam)
        return {
            "lam_sparse": {"rows": rows.tolist(), "cols": cols.tolist(),
                           "values": self.lam[rows, cols].tolist()},
            "lower": enc(self.lower),
            "upper": enc(self.upper),
            "tags": list(self.tags),
            "dims": None if self.dims is None else list(self.dims),
            "n_knots": self.n_knots,
        }

    @classmethod
    def from_dict(cls, data) -> "LinearConstraintSystem":
        lower = np.array([-np.inf if v is None else v for v in data["lower"]], dtype=float)
        upper = np.array([np.inf if v is None else v for v in data["upper"]], dtype=float)
        shape = (len(lower), int(data["n_knots"]))
        if "lam_sparse" in data:
            sparse = data["lam_sparse"]
            lam = np.zeros(shape)
            lam[np.asarray(sparse["rows"], int), np.asarray(sparse["cols"], int)] = sparse["values"]
        else:
            lam = np.asarray(data["lam"], dtype=float).reshape(shape)
        return cls(lam, lower, upper, tuple(data["tags"]), data.get("dims"))


class Violation(NamedTuple):
    row: int
    tag: str
    value: float
    lower: float
    upper: float


def check_feasible(system: LinearConstraintSystem, xi, tol: float = 1e-8) -> list:
    """Rows violated by ``xi`` beyond ``tol``; an empty list means feasible."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (system.n_knots,):
        raise ValueError(f"xi has shape {xi.shape}, expected ({system.n_knots},)")
    v = system.lam @ xi
    bad = np.flatnonzero((v < system.lower - tol) | (v > system.upper + tol))
    return [
        Violation(int(k), system.tags[k], float(v[k]),
                  float(system.lower[k]), float(system.upper[k]))
        for k in bad
    ]


def bounds(grid: KnotGrid, lower: float, upper: float) -> LinearConstraintSystem:
    """``lower <= xi_j <= upper`` at every knot. Either side may be infinite."""
    lower, upper = float(lower), float(upper)
    if not lower < upper:
        raise ConstraintError(f"bounds need lower < upper, got [{lower}, {upper}]")
    m = grid.size
    return LinearConstraintSystem(np.eye(m), np.full(m, lower), np.full(m, upper),
                                  ("bound",) * m, grid.dims)


def _direction(direction: str) -> str:
    try:
        return _DIRECTIONS[str(direction).strip().lower()]
    except KeyError:
        raise ConstraintError(f"unknown monotonicity direction {direction!r}") from None


def _check_dim(grid: KnotGrid, dim: int):
    if not 0 <= dim < grid.ndim:
        raise ConstraintError(f"dimension {dim} out of range for a {grid.ndim}-d grid")


def _neighbour_pairs(grid: KnotGrid, dim: int, offset: int = 1):
    idx = np.arange(grid.size).reshape(grid.dims)
    m = grid.dims[dim]
    base = np.take(idx, np.arange(m - offset), axis=dim).ravel()
    step = int(np.prod(grid.dims[dim + 1:]))
    return np.sort(base), step


def monotone(grid: KnotGrid, dim: int = 0, direction: str = UP) -> LinearConstraintSystem:
    """Nondecreasing (``"up"``) or nonincreasing (``"down"``) along ``dim``.

    One row per pair of knots adjacent along ``dim``:
    ``(m_dim - 1) * prod_{k != dim} m_k`` rows in total.
    """
    _check_dim(grid, dim)
    direction = _direction(direction)
    base, step = _neighbour_pairs(grid, dim)
    q = base.size
    lam = np.zeros((q, grid.size))
    sign = 1.0 if direction == UP else -1.0
    lam[np.arange(q), base + step] = sign
    lam[np.arange(q), base] = -sign
    tag = f"monotone({dim},{direction})"
    return LinearConstraintSystem(lam, np.zeros(q), np.full(q, np.inf), (tag,) * q, grid.dims)


def convex(grid: KnotGrid, dim: int = 0) -> LinearConstraintSystem:
    """Nonnegative second differences of knot values along ``dim``."""
    _check_dim(grid, dim)
    if grid.dims[dim] < 3:
        raise ConstraintError("convexity needs at least 3 knots along the dimension")
    base, step = _neighbour_pairs(grid, dim, offset=2)
    q = base.size
    lam = np.zeros((q, grid.size))
    rows = np.arange(q)
    lam[rows, base] = 1.0
    lam[rows, base + step] = -2.0
    lam[rows, base + 2 * step] = 1.0
    tag = f"convex({dim})"
    return LinearConstraintSystem(lam, np.zeros(q), np.full(q, np.inf), (tag,) * q, grid.dims)


def _monotone_dirs(tags) -> dict:
    dirs = {}
    for t in tags:
        m = re.fullmatch(r"monotone\((\d+),(up|down)\)", t)
        if m:
            dirs.setdefault(int(m.group(1)), set()).add(m.group(2))
    return dirs


def _reduce_bounds(lam, lower, upper, tags, dims):
    """Drop bound sides implied by monotonicity chains.

    With a common ``[l, u]`` on all knots and monotonicity along some
    dimensions, a knot's lower bound is implied whenever it has a monotone
    predecessor, and likewise for upper bounds. In 1D this turns the
    stacked system into the ``q = m + 1`` form.
    """
    dirs = _monotone_dirs(tags)
    if dims is None or not dirs or any(len(v) > 1 for v in dirs.values()):
        return lam, lower, upper, tags
    is_bound = np.array([t == "bound" for t in tags])
    if not is_bound.any():
        return lam, lower, upper, tags
    bl, bu = lower[is_bound], upper[is_bound]
    knots = np.argmax(lam[is_bound] != 0, axis=1)
    if (np.unique(bl).size > 1 or np.unique(bu).size > 1
            or np.unique(knots).size != knots.size):
        return lam, lower, upper, tags
    multi = np.array(np.unravel_index(knots, dims)).T
    need_lo = np.ones(knots.size, dtype=bool)
    need_hi = np.ones(knots.size, dtype=bool)
    for k, (d,) in dirs.items():
        first, last = multi[:, k] == 0, multi[:, k] == dims[k] - 1
        need_lo &= first if d == UP else last
        need_hi &= last if d == UP else first
    new_lo, new_hi = lower.copy(), upper.copy()
    rows = np.flatnonzero(is_bound)
    new_lo[rows[~need_lo]] = -np.inf
    new_hi[rows[~need_hi]] = np.inf
    keep = ~(np.isinf(new_lo) & np.isinf(new_hi))
    return lam[keep], new_lo[keep], new_hi[keep], tuple(np.asarray(tags, dtype=object)[keep])


def compose(systems: Sequence[LinearConstraintSystem], minimal: bool = False) -> LinearConstraintSystem:
    """Stack systems row-wise.

    Rows with identical coefficients are merged by intersecting their bounds.
    With ``minimal=True`` bound sides implied by monotonicity are dropped,
    which in 1D gives the ``m + 1`` row form (lower bound on the first knot,
    the ``m - 1`` differences, upper bound on the last knot).
    """
    systems = list(systems)
    if not systems:
        raise ConstraintError("nothing to compose")
    m = systems[0].n_knots
    if any(s.n_knots != m for s in systems):
        raise ConstraintError(f"systems disagree on the number of knots: {[s.n_knots for s in systems]}")
    dims = next((s.dims for s in systems if s.dims is not None), None)
    if any(s.dims is not None and s.dims != dims for s in systems):
        raise ConstraintError("systems were built on different grids")
    lam = np.vstack([s.lam for s in systems])
    lower = np.concatenate([s.lower for s in systems])
    upper = np.concatenate([s.upper for s in systems])
    tags = sum((s.tags for s in systems), ())
    if lam.shape[0]:
        _, first, inverse = np.unique(lam, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        if first.size < lam.shape[0]:
            lo = np.full(first.size, -np.inf)
            hi = np.full(first.size, np.inf)
            np.maximum.at(lo, inverse, lower)
            np.minimum.at(hi, inverse, upper)
            if np.any(lo > hi):
                raise ConstraintError("duplicate rows with disjoint bounds")
            order = np.sort(first)
            group = inverse[order]
            lam, lower, upper = lam[order], lo[group], hi[group]
            tags = tuple(tags[i] for i in order)
    if minimal:
        lam, lower, upper, tags = _reduce_bounds(lam, lower, upper, tags, dims)
    return LinearConstraintSystem(lam, lower, upper, tags, dims)


class KnotRecovery:
    """Solve ``Lambda @ xi = z`` for knot values given constraint-space draws.

    ``m`` linearly independent rows are selected once with a column-pivoted
    QR of ``Lambda^T``; their square system is LU-factorized and reused.
    Raises :class:`RankDeficientError` if ``rank(Lambda) < m``.
    """

    def __init__(self, system: LinearConstraintSystem, rank_tol: float = 1e-10):
        lam = system.lam
        q, m = lam.shape
        if q < m:
            raise RankDeficientError(f"{q} constraint rows cannot determine {m} knot values")
        _, R, piv = scipy.linalg.qr(lam.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > rank_tol * diag[0])) if diag.size else 0
        if rank < m:
            raise RankDeficientError(
                f"constraint matrix has rank {rank} < {m}; knot values are not identifiable"
            )
        self.system = system
        self.rows = np.sort(piv[:m])
        self._lu = scipy.linalg.lu_factor(lam[self.rows])

    def solve(self, z, tol: float = 1e-6) -> np.ndarray:
        """Knot values for one draw ``(q,)`` or a stack ``(s, q)``."""
        z = np.asarray(z, dtype=float)
        Z = np.atleast_2d(z)
        xi = scipy.linalg.lu_solve(self._lu, Z[:, self.rows].T).T
        resid = np.abs(xi @ self.system.lam.T - Z)
        scale = 1.0 + np.abs(Z)
        worst = float(np.max(resid / scale)) if resid.size else 0.0
        if worst > tol:
            raise ConstraintError(
                f"draw is inconsistent with the constraint matrix (residual {worst:.2e})"
            )
        return xi[0] if z.ndim == 1 else xi


def recover_knots(system: LinearConstraintSystem, z, tol: float = 1e-6) -> np.ndarray:
    return KnotRecovery(system).solve(z, tol)


# -- text grammar used by the command line -----------------------------------

@dataclass(frozen=True)
class ConstraintTerm:
    """One parsed constraint expression, built lazily against a grid.

    ``dim`` is zero-based; the text grammar is one-based.
    """

    kind: str
    lower: float = -np.inf
    upper: float = np.inf
    dim: int = 0
    direction: str = UP
    text: str = field(default="", compare=False)

    def build(self, grid: KnotGrid) -> LinearConstraintSystem:
        if self.kind == "bounds":
            return bounds(grid, self.lower, self.upper)
        if self.kind == "monotone":
            return monotone(grid, self.dim, self.direction)
        if self.kind == "convex":
            return convex(grid, self.dim)
        raise ConstraintError(f"unknown constraint kind {self.kind!r}")

    def __str__(self):
        if self.kind == "bounds":
            return f"bounds({self.lower:g},{self.upper:g})"
        if self.kind == "monotone":
            return f"monotone(dim={self.dim + 1},{self.direction})"
        return f"convex(dim={self.dim + 1})"


_TERM = re.compile(r"^\s*(\w+)\s*(?:\((.*)\))?\s*$")


def _number(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return np.inf
    if t in ("-inf", "-infinity"):
        return -np.inf
    return float(t)


def parse_constraint(text: str) -> ConstraintTerm:
    """Parse ``bounds(l,u)``, ``monotone(dim=k,up|down)`` or ``convex(dim=k)``.

    Dimensions in the text are one-based; ``dim`` defaults to 1.
    """
    match = _TERM.match(text)
    if not match:
        raise ConstraintError(f"cannot parse constraint {text!r}")
    kind = match.group(1).lower()
    args = [a.strip() for a in (match.group(2) or "").split(",") if a.strip()]
    positional = [a for a in args if "=" not in a]
    named = dict(a.split("=", 1) for a in args if "=" in a)
    named = {k.strip().lower(): v.strip() for k, v in named.items()}
    try:
        if kind in ("bounds", "bound", "bounded"):
            vals = positional + [named[k] for k in ("lower", "upper") if k in named]
            if len(vals) != 2:
                raise ConstraintError(f"bounds needs two values in {text!r}")
            return ConstraintTerm("bounds", _number(vals[0]), _number(vals[1]), text=text)
        if kind in ("positive", "nonnegative"):
            return ConstraintTerm("bounds", 0.0, np.inf, text=text)
        dim_text = named.get("dim")
        direction = named.get("direction", UP)
        for p in positional:
            if p.lstrip("+-").isdigit():
                dim_text = p
            else:
                direction = p
        dim = int(dim_text) - 1 if dim_text is not None else 0
        if dim < 0:
            raise ConstraintError(f"dimensions are one-based in {text!r}")
        if kind in ("monotone", "monotonic"):
            return ConstraintTerm("monotone", dim=dim, direction=_direction(direction), text=text)
        if kind == "convex":
            return ConstraintTerm("convex", dim=dim, text=text)
    except ValueError as exc:
        if isinstance(exc, ConstraintError):
            raise
        raise ConstraintError(f"bad number in constraint {text!r}: {exc}") from None
    raise ConstraintError(f"unknown constraint kind {kind!r} in {text!r}")


def build_system(grid: KnotGrid, terms, minimal: bool = False) -> LinearConstraintSystem:
    """Compose parsed terms (or strings, or ready systems) left to right."""
    systems = []
    for t in terms:
        if isinstance(t, str):
            t = parse_constraint(t)
        systems.append(t if isinstance(t, LinearConstraintSystem) else t.build(grid))
    if not systems:
        return LinearConstraintSystem.empty(grid.size, grid.dims)
    return compose(systems, minimal=minimal)
