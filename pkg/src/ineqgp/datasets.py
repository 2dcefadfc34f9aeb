"""Small synthetic datasets used by the demos, notebooks and tests."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.stats import qmc


class Dataset(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    truth: np.ndarray
    name: str


def five_point_toy() -> Dataset:
    """Five noisy-looking observations on ``[0, 1]`` used for bounded fits."""
    x = np.array([[0.0], [0.2], [0.5], [0.75], [1.0]])
    y = np.array([0.0, -0.5, -0.3, 0.5, 0.4])
    return Dataset(x, y, y.copy(), "five-point-toy")


def sigmoid(x) -> np.ndarray:
    """``1 / (1 + exp(-10 (x - 1/2)))``."""
    x = np.asarray(x, dtype=float)
    return 1.0 / (1.0 + np.exp(-10.0 * (x - 0.5)))


SIGMOID_RANGE = float(sigmoid(1.0) - sigmoid(0.0))


def sigmoid_data(n: int = 300, noise: float = 0.1, seed=0) -> Dataset:
    """Sigmoid at ``n`` uniform random inputs plus Gaussian noise.

    ``noise`` is the noise standard deviation as a fraction of the sigmoid's
    range on ``[0, 1]``. ``truth`` holds the noise-free values.
    """
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    truth = sigmoid(x)
    y = truth + noise * SIGMOID_RANGE * rng.standard_normal(n)
    return Dataset(x[:, None], y, truth, f"sigmoid(noise={noise:g})")


def surface_2d(x) -> np.ndarray:
    """``x1 + x2**2``: non-decreasing in both inputs on the unit square."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x[:, 0] + x[:, 1] ** 2


def surface_2d_data(per_axis: int = 30, noise: float = 0.01, seed=0) -> Dataset:
    """``surface_2d`` on a regular ``per_axis x per_axis`` grid with noise.

    ``noise`` is relative to the range of the surface (which is 2).
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, per_axis)
    x = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1).reshape(-1, 2)
    truth = surface_2d(x)
    y = truth + noise * 2.0 * rng.standard_normal(truth.size)
    return Dataset(x, y, truth, "surface-2d")


def monotone_5d(x) -> np.ndarray:
    """Nonnegative test function, non-decreasing in the first two inputs.

    The remaining inputs enter non-monotonically (a cosine in the third) or
    weakly, loosely mimicking a flooding response driven by two dominant
    forcing variables.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x1, x2, x3, x4, x5 = x.T
    return (
        np.expm1(1.5 * x1) / np.expm1(1.5)
        + x2 ** 2
        + 0.5 * x1 * x2
        + 0.15 * (1.0 + np.cos(2.0 * np.pi * x3)) * (0.5 + x1)
        + 0.1 * x4 * x5
    )


def monotone_5d_data(n: int = 200, noise: float = 0.01, seed=0) -> Dataset:
    """``monotone_5d`` on a Latin-hypercube design of ``n`` points.

    ``noise`` is relative to the range of the sampled responses.
    """
    rng = np.random.default_rng(seed)
    x = qmc.LatinHypercube(d=5, seed=rng).random(n)
    truth = monotone_5d(x)
    y = truth + noise * np.ptp(truth) * rng.standard_normal(n)
    return Dataset(x, y, truth, "monotone-5d")


def split(data: Dataset, fraction: float, seed=0):
    """Random train/test split; ``fraction`` of the points go to training."""
    rng = np.random.default_rng(seed)
    n = data.y.size
    k = max(2, int(round(fraction * n)))
    idx = rng.permutation(n)
    tr, te = np.sort(idx[:k]), np.sort(idx[k:])
    pick = lambda ix: Dataset(data.x[ix], data.y[ix], data.truth[ix], data.name)
    return pick(tr), pick(te)
