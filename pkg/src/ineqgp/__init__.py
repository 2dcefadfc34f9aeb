"""Gaussian-process emulation under linear inequality constraints.

The latent process is represented by its values at a regular knot grid
(piecewise-linear hat basis, multilinear in several dimensions), so linear
inequalities on the knot values hold everywhere on the input domain.
Conditioning on noisy data gives a Gaussian over the knots; the constraints
turn it into a truncated Gaussian, which is summarised by its mode (a
quadratic program) and explored with exact samplers.
"""

from .basis import InputScaler, KnotGrid, design_matrix, evaluate_emulator
from .constraints import (LinearConstraintSystem, bounds, build_system, check_feasible, compose,
                          convex, monotone, parse_constraint, recover_knots)
from .diagnostics import ESSReport, ess, ess_report, q2, smse
from .emulator import (EmulatorModel, Prediction, fit, fit_tensor, load, predict, sample_knots,
                       sample_paths, save)
from .errors import (ConstraintError, DegenerateCovarianceError, FactorizationError,
                     InfeasibleProblemError, MaxIterationsError, RankDeficientError, SamplingError)
from .hyperparam import fit_ml
from .kernel import KernelSpec
from .posterior import (ConditionedGaussian, TruncatedGaussianSpec, condition, condition_auto,
                        condition_woodbury, log_marginal_likelihood, push_forward)
from .qp import solve_map
from .tmvn import SampleChain, sample, sample_gibbs, sample_hmc, sample_rsm

__version__ = "0.1.0"
