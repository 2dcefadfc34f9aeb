"""Exception types raised across the package."""

import numpy as np


class ConstraintError(ValueError):
    """Malformed or mutually inconsistent constraint system."""


class RankDeficientError(ConstraintError):
    """The constraint matrix does not have full column rank."""


class InfeasibleProblemError(RuntimeError):
    """The constraint set is empty."""


class FactorizationError(np.linalg.LinAlgError):
    """A covariance factorization failed even after the jitter ladder."""


class DegenerateCovarianceError(ValueError):
    """A sampler that needs a full-rank covariance was given a singular one."""


class SamplingError(RuntimeError):
    """A sampler could not produce the requested draws."""


class MaxIterationsError(RuntimeError):
    """An iterative solver hit its iteration cap.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
