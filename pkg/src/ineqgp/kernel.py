"""Stationary covariance functions and their tensor products.

A d-dimensional kernel is the product of one-dimensional correlation
functions, one per coordinate, scaled by a single variance::

    k(x, x') = variance * prod_k r(|x_k - x'_k| / lengthscale_k)

For the squared exponential family this is the usual anisotropic SE kernel;
for the Matern families it is the tensor (Kronecker) Matern kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

FAMILIES = ("se", "matern52", "matern32")

_ALIASES = {
    "se": "se",
    "squaredexponential": "se",
    "squared_exponential": "se",
    "rbf": "se",
    "gaussian": "se",
    "matern52": "matern52",
    "matern5/2": "matern52",
    "matern32": "matern32",
    "matern3/2": "matern32",
}

SQRT3 = np.sqrt(3.0)
SQRT5 = np.sqrt(5.0)


def canonical_family(name: str) -> str:
    """Map a user-facing family name onto one of :data:`FAMILIES`."""
    key = str(name).strip().lower().replace("-", "").replace(" ", "")
    try:
        return _ALIASES[key]
    except KeyError:
        raise ValueError(
            f"unknown kernel family {name!r}; expected one of {', '.join(FAMILIES)}"
        ) from None


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family plus hyperparameters.

    Parameters
    ----------
    family : str
        ``"se"``, ``"matern52"`` or ``"matern32"``.
    variance : float
        Output variance (squared output units).
    lengthscales : sequence of float
        One positive length-scale per input dimension.
    """

    family: str
    variance: float
    lengthscales: tuple

    def __post_init__(self):
        object.__setattr__(self, "family", canonical_family(self.family))
        ell = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ell.ndim != 1 or ell.size < 1:
            raise ValueError("lengthscales must be a non-empty vector")
        if not np.all(np.isfinite(ell)) or np.any(ell <= 0):
            raise ValueError(f"lengthscales must be positive, got {ell}")
        variance = float(self.variance)
        if not np.isfinite(variance) or variance <= 0:
            raise ValueError(f"variance must be positive, got {variance}")
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in ell))

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    @property
    def n_params(self) -> int:
        return 1 + self.dim

    def log_params(self) -> np.ndarray:
        """Hyperparameters as ``[log variance, log l_1, ..., log l_d]``."""
        return np.log(np.r_[self.variance, self.lengthscales])

    @classmethod
    def from_log_params(cls, family: str, theta: Sequence[float]) -> "KernelSpec":
        theta = np.asarray(theta, dtype=float)
        return cls(family, float(np.exp(theta[0])), tuple(np.exp(theta[1:])))

    def replace(self, **changes) -> "KernelSpec":
        fields = {"family": self.family, "variance": self.variance,
                  "lengthscales": self.lengthscales}
        fields.update(changes)
        return KernelSpec(**fields)

    def to_dict(self) -> dict:
        return {"family": self.family, "variance": self.variance,
                "lengthscales": list(self.lengthscales)}

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        return cls(data["family"], data["variance"], tuple(data["lengthscales"]))


def correlation(family: str, h: np.ndarray) -> np.ndarray:
    """One-dimensional correlation ``r(h)`` at scaled distance ``h = |dx| / l``."""
    h = np.abs(np.asarray(h, dtype=float))
    if family == "se":
        return np.exp(-0.5 * h * h)
    if family == "matern52":
        s = SQRT5 * h
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    if family == "matern32":
        s = SQRT3 * h
        return (1.0 + s) * np.exp(-s)
    raise ValueError(f"unknown kernel family {family!r}")


def _dcorr_dlog_h(family: str, h: np.ndarray) -> np.ndarray:
    # h * dr/dh; the derivative w.r.t. a lengthscale is -(h * dr/dh) / l
    h = np.abs(h)
    if family == "se":
        return -h * h * np.exp(-0.5 * h * h)
    if family == "matern52":
        s = SQRT5 * h
        return -(s * s / 3.0) * (1.0 + s) * np.exp(-s)
    if family == "matern32":
        s = SQRT3 * h
        return -s * s * np.exp(-s)
    raise ValueError(f"unknown kernel family {family!r}")


def _as_points(points, dim: int) -> np.ndarray:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if dim == 1 else X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(
            f"points have dimension {X.shape[-1] if X.ndim else 0}, kernel expects {dim}"
        )
    return X


def evaluate(spec: KernelSpec, x, xp) -> float:
    """Covariance between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != (spec.dim,) or xp.shape != (spec.dim,):
        raise ValueError(
            f"points must have dimension {spec.dim}, got {x.shape} and {xp.shape}"
        )
    h = np.abs(x - xp) / np.asarray(spec.lengthscales)
    return float(spec.variance * np.prod(correlation(spec.family, h)))


def _axis_correlations(spec: KernelSpec, X1, X2):
    ell = spec.lengthscales
    return [
        correlation(spec.family, (X1[:, [k]] - X2[:, k][None, :]) / ell[k])
        for k in range(spec.dim)
    ]


def cross(spec: KernelSpec, X1, X2) -> np.ndarray:
    """Cross-covariance matrix ``K[i, j] = k(X1[i], X2[j])``."""
    X1 = _as_points(X1, spec.dim)
    X2 = _as_points(X2, spec.dim)
    return spec.variance * reduce(np.multiply, _axis_correlations(spec, X1, X2))


def gram(spec: KernelSpec, points) -> np.ndarray:
    """Covariance matrix of a point set (no jitter added)."""
    X = _as_points(points, spec.dim)
    if X.shape[0] == 0:
        raise ValueError("gram needs at least one point")
    K = cross(spec, X, X)
    return 0.5 * (K + K.T)


def grad_hyper(spec: KernelSpec, points) -> list:
    """Derivatives of :func:`gram` w.r.t. ``variance`` then each lengthscale.

    Derivatives are taken w.r.t. the natural (not log) parameters. Multiply
    the ``j``-th matrix by the parameter value to get the log-space gradient.
    """
    X = _as_points(points, spec.dim)
    corr = _axis_correlations(spec, X, X)
    full = reduce(np.multiply, corr)
    grads = [full]
    for k, ell in enumerate(spec.lengthscales):
        h = (X[:, [k]] - X[:, k][None, :]) / ell
        others = reduce(np.multiply, corr[:k] + corr[k + 1:], np.ones_like(full))
        grads.append(spec.variance * others * (-_dcorr_dlog_h(spec.family, h) / ell))
    return grads


def kron_gram(spec: KernelSpec, axes: Sequence[np.ndarray], with_grad: bool = False):
    """Gram matrix of a tensor grid built as a Kronecker product.

    ``axes[k]`` holds the 1D coordinates along dimension ``k``; the flattened
    ordering is row-major (last dimension fastest), matching ``np.kron``.
    With ``with_grad=True`` also returns the list of natural-parameter
    derivative matrices, ordered as in :func:`grad_hyper`.
    """
    if len(axes) != spec.dim:
        raise ValueError(f"expected {spec.dim} axes, got {len(axes)}")
    corr, dcorr = [], []
    for k, t in enumerate(axes):
        t = np.asarray(t, dtype=float)
        h = (t[:, None] - t[None, :]) / spec.lengthscales[k]
        corr.append(correlation(spec.family, h))
        if with_grad:
            dcorr.append(-_dcorr_dlog_h(spec.family, h) / spec.lengthscales[k])
    R = reduce(np.kron, corr)
    G = spec.variance * R
    if not with_grad:
        return G
    grads = [R]
    for k in range(spec.dim):
        factors = corr[:k] + [dcorr[k]] + corr[k + 1:]
        grads.append(spec.variance * reduce(np.kron, factors))
    return G, grads
