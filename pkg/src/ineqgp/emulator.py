"""End-to-end constrained emulator: fit, condition, find the mode, sample, predict.

Typical use::

    model = fit(x, y, kernel="matern52", knots=50, constraints=["bounds(-1,1)"])
    pred = predict(model, np.linspace(0, 1, 200)[:, None], count=2000, seed=1)
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernel as kern
from . import tmvn
from .basis import InputScaler, KnotGrid, design_matrix
from .constraints import (
    ConstraintTerm, KnotRecovery, LinearConstraintSystem, build_system, check_feasible,
    parse_constraint,
)
from .errors import ConstraintError, RankDeficientError
from .hyperparam import fit_ml, parse_fixed
from .posterior import ConditionedGaussian, condition, condition_auto, push_forward
from .qp import QpResult, solve_map

FORMAT = "ineqgp-model"
FORMAT_VERSION = 1
DEFAULT_KNOTS_1D = 25
KNOT_BUDGET = 4096
DEFAULT_QUANTILES = (0.025, 0.975)


class ObservationWarning(UserWarning):
    """Some observations violate the constraints (absorbed by the noise term)."""


@dataclass(eq=False)
class EmulatorModel:
    """A fitted constrained emulator.

    ``mode`` is the constrained posterior mode of the knot values and
    ``mode_whitened`` the same point as ``conditioned.chol``-whitened
    offsets from the posterior mean (the samplers' coordinates).
    """

    kernel: kern.KernelSpec
    grid: KnotGrid
    constraints: LinearConstraintSystem
    tau2: float
    scaler: InputScaler
    conditioned: ConditionedGaussian
    mode: np.ndarray
    mode_whitened: np.ndarray
    fingerprint: str
    loglik: float | None = None
    terms: tuple = ()
    active_rows: tuple = ()
    _recovery: object = field(default=None, repr=False)

    @property
    def ndim(self) -> int:
        return self.grid.ndim

    @property
    def n_knots(self) -> int:
        return self.grid.size

    def truncated(self):
        """Truncated Gaussian of ``Lambda xi`` (None when unconstrained)."""
        if self.constraints.n_rows == 0:
            return None
        return push_forward(self.conditioned, self.constraints)

    def recovery(self):
        if self._recovery is None:
            self._recovery = KnotRecovery(self.constraints)
        return self._recovery

    def design(self, points) -> "np.ndarray":
        """Design matrix at points given in original input units."""
        return design_matrix(self.grid, self.scaler.transform(_as_2d(points, self.ndim)))

    def mode_curve(self, points) -> np.ndarray:
        return np.asarray(self.design(points) @ self.mode).ravel()

    def mean_curve(self, points) -> np.ndarray:
        """Mean of the untruncated posterior at ``points``."""
        return np.asarray(self.design(points) @ self.conditioned.mean).ravel()

    def to_dict(self) -> dict:
        cg = self.conditioned
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kernel": self.kernel.to_dict(),
            "knots": list(self.grid.dims),
            "tau2": self.tau2,
            "scaler": self.scaler.to_dict(),
            "constraints": self.constraints.to_dict(),
            "terms": list(self.terms),
            "posterior": {
                "mean": cg.mean.tolist(),
                "chol": cg.chol.tolist(),
                "jitter": cg.jitter_used,
            },
            "mode": self.mode.tolist(),
            "mode_whitened": self.mode_whitened.tolist(),
            "active_rows": list(self.active_rows),
            "loglik": self.loglik,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmulatorModel":
        if data.get("format") != FORMAT:
            raise ValueError("not an emulator model file")
        if data.get("version") != FORMAT_VERSION:
            raise ValueError(
                f"model file version {data.get('version')} is not supported "
                f"(this build reads version {FORMAT_VERSION})"
            )
        post = data["posterior"]
        chol = np.asarray(post["chol"], dtype=float)
        mean = np.asarray(post["mean"], dtype=float)
        cov = chol @ chol.T - post["jitter"] * np.eye(mean.size)
        cg = ConditionedGaussian(mean, 0.5 * (cov + cov.T), chol, float(post["jitter"]))
        return cls(
            kernel=kern.KernelSpec.from_dict(data["kernel"]),
            grid=KnotGrid(tuple(data["knots"])),
            constraints=LinearConstraintSystem.from_dict(data["constraints"]),
            tau2=float(data["tau2"]),
            scaler=InputScaler.from_dict(data["scaler"]),
            conditioned=cg,
            mode=np.asarray(data["mode"], dtype=float),
            mode_whitened=np.asarray(data["mode_whitened"], dtype=float),
            fingerprint=data["fingerprint"],
            loglik=data.get("loglik"),
            terms=tuple(data.get("terms", ())),
            active_rows=tuple(data.get("active_rows", ())),
        )


def save(model: EmulatorModel, path) -> None:
    """Write the model as JSON (floats round-trip exactly)."""
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load(path) -> EmulatorModel:
    return EmulatorModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_2d(x, dim=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if dim in (None, 1) else x[None, :]
    if dim is not None and x.shape[1] != dim:
        raise ValueError(f"inputs have {x.shape[1]} columns, model has {dim}")
    return x


def fingerprint(x, y) -> str:
    h = hashlib.sha256()
    for a in (np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(y, dtype=float)):
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]


def _knot_dims(knots, d) -> tuple:
    if knots is None:
        knots = DEFAULT_KNOTS_1D
    if np.isscalar(knots):
        return (int(knots),) * d
    dims = tuple(int(k) for k in knots)
    if len(dims) != d:
        raise ValueError(f"{len(dims)} knot counts given for {d} input dimensions")
    return dims


def _terms(constraints) -> list:
    out = []
    for c in constraints or ():
        if isinstance(c, str):
            out.append(parse_constraint(c))
        elif isinstance(c, (ConstraintTerm, LinearConstraintSystem)):
            out.append(c)
        else:
            raise TypeError(f"unsupported constraint {c!r}")
    return out


def _warn_violations(terms, x, y):
    msgs = []
    for t in terms:
        if not isinstance(t, ConstraintTerm):
            continue
        if t.kind == "bounds":
            bad = np.flatnonzero((y < t.lower) | (y > t.upper))
            if bad.size:
                msgs.append(f"{t}: observations {bad.tolist()} outside the bounds")
        elif t.kind == "monotone" and x.shape[1] == 1:
            order = np.argsort(x[:, 0], kind="stable")
            dy = np.diff(y[order]) * (1 if t.direction == "up" else -1)
            bad = np.flatnonzero(dy < 0)
            if bad.size:
                pairs = [(int(order[i]), int(order[i + 1])) for i in bad]
                msgs.append(f"{t}: observation pairs {pairs} break the ordering")
    if msgs:
        warnings.warn(
            "observations violate the constraints and will be treated as noisy: "
            + "; ".join(msgs), ObservationWarning, stacklevel=3,
        )


def fit(x, y, kernel: str = "matern52", knots=None, constraints=(), domain=None,
        fixed=None, minimal: bool = False, hyper=None, n_starts: int = 10, seed=0,
        knot_budget: int = KNOT_BUDGET) -> EmulatorModel:
    """Fit a constrained emulator.

    Parameters
    ----------
    x : (n, d) or (n,) array
        Inputs in original units.
    y : (n,) array
    kernel : str
        ``"se"``, ``"matern52"`` or ``"matern32"``.
    knots : int or sequence of int
        Knots per dimension (default 25 each).
    constraints : sequence
        Constraint strings (``"bounds(0,1)"``, ``"monotone(dim=1,up)"``, ...),
        parsed terms or ready systems; composed left to right.
    domain : (d, 2) array, optional
        Input box mapped to the unit cube; defaults to the data range.
    fixed : dict, optional
        Hyperparameters held fixed during maximum likelihood.
    minimal : bool
        Drop bound rows implied by monotonicity (see ``constraints.compose``).
    hyper : (KernelSpec, tau2), optional
        Skip maximum likelihood and use these values.
    """
    x = _as_2d(x)
    y = np.asarray(y, dtype=float).ravel()
    n, d = x.shape
    if n == 0:
        raise ValueError("no observations")
    if y.size != n:
        raise ValueError(f"{n} inputs but {y.size} outputs")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("observations must be finite")
    dims = _knot_dims(knots, d)
    if int(np.prod(dims)) > knot_budget:
        raise ValueError(
            f"knot grid {dims} has {int(np.prod(dims))} knots, above the budget of {knot_budget}"
        )
    grid = KnotGrid(dims)
    scaler = InputScaler.fit(x, domain)
    u = scaler.transform(x)
    phi = design_matrix(grid, u)
    terms = _terms(constraints)
    system = build_system(grid, terms, minimal=minimal)
    _warn_violations(terms, x, y)

    loglik = None
    if hyper is not None:
        spec, tau2 = hyper
        if spec.dim != d:
            raise ValueError(f"kernel has {spec.dim} dimensions, data has {d}")
        tau2 = float(tau2)
    else:
        fixed_norm = parse_fixed(fixed, d)
        if n < 2:
            raise ValueError("need at least two observations to estimate hyperparameters")
        spec, tau2, loglik = fit_ml(kernel, grid, u, y, fixed=fixed_norm,
                                    n_starts=n_starts, seed=seed, phi=phi)
    gram = kern.kron_gram(spec, grid.axes())
    cg = condition(gram, phi, y, tau2) if tau2 == 0 else condition_auto(gram, phi, y, tau2)

    if system.n_rows:
        qp: QpResult = solve_map(cg, system)
        mode, w_mode, active = qp.mode, qp.whitened, tuple(qp.active_rows)
        bad = check_feasible(system, mode, tol=1e-6)
        if bad:
            raise ConstraintError(f"posterior mode violates {len(bad)} constraint rows")
    else:
        mode, w_mode, active = cg.mean.copy(), np.zeros(cg.dim), ()
    return EmulatorModel(
        kernel=spec, grid=grid, constraints=system, tau2=tau2, scaler=scaler,
        conditioned=cg, mode=mode, mode_whitened=w_mode, fingerprint=fingerprint(x, y),
        loglik=loglik, terms=tuple(str(t) for t in terms), active_rows=active,
    )


def fit_tensor(x, y, knots, constraints=(), knot_budget: int = KNOT_BUDGET, **options) -> EmulatorModel:
    """:func:`fit` for ``d >= 2`` inputs with a per-dimension knot list."""
    x = _as_2d(x)
    if x.shape[1] < 2:
        raise ValueError("fit_tensor needs at least two input dimensions")
    return fit(x, y, knots=knots, constraints=constraints, knot_budget=knot_budget, **options)


@dataclass
class PathSample:
    """Sampled emulator paths at ``points`` plus the underlying chain."""

    points: np.ndarray
    paths: np.ndarray
    knots: np.ndarray
    chain: tmvn.SampleChain


def sample_knots(model: EmulatorModel, sampler: str = "hmc", count: int = 1000, seed=0,
                 recovery: str = "auto", **kwargs) -> tmvn.SampleChain:
    """Draw constrained knot values; the chain's ``knots`` field is filled in.

    Draws are taken in constraint coordinates ``z = Lambda xi`` and knot values
    recovered by solving ``Lambda xi = z`` on ``m`` independent rows
    (``recovery="solve"``). With ``"auto"``, systems of rank below ``m`` use
    the samplers' whitened coordinates instead (``xi = mu + C w``).
    """
    cg = model.conditioned
    spec = model.truncated()
    if spec is None:
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((count, cg.dim))
        knots = cg.mean + W @ cg.chol.T
        return tmvn.SampleChain(knots, "gaussian", proposals=count, accepted=count,
                                seed=seed if isinstance(seed, (int, np.integer)) else None,
                                knots=knots.copy(), whitened=W)
    name = sampler.lower()
    if name == "rsm":
        chain = tmvn.sample_rsm(spec, count, seed=seed, whitened_mode=model.mode_whitened, **kwargs)
    elif name in ("gibbs", "hmc"):
        start = spec.mean + spec.factor @ model.mode_whitened
        chain = tmvn.sample(spec, name, count, seed=seed, start=start, **kwargs)
    else:
        chain = tmvn.sample(spec, name, count, seed=seed, **kwargs)
    if recovery not in ("auto", "solve", "whitened"):
        raise ValueError(f"unknown recovery {recovery!r}")
    use_solve = recovery == "solve"
    if recovery == "auto":
        try:
            model.recovery()
            use_solve = True
        except RankDeficientError:
            use_solve = False
    if use_solve:
        chain.knots = model.recovery().solve(chain.draws) if chain.count else np.zeros((0, cg.dim))
        resid = np.abs(chain.knots @ model.constraints.lam.T - chain.draws)
        if resid.size and resid.max() > 1e-8 * (1 + np.abs(chain.draws).max()):
            raise ConstraintError(f"knot recovery residual {resid.max():.2e} exceeds 1e-8")
    else:
        chain.knots = cg.mean + chain.whitened @ cg.chol.T
    return chain


def sample_paths(model: EmulatorModel, sampler: str = "hmc", count: int = 1000,
                 points=None, resolution: int = 101, seed=0, **kwargs) -> PathSample:
    """Sample constrained emulator paths.

    ``points`` are in original input units; by default a regular grid with
    ``resolution`` points per dimension spanning the fitted input box.
    """
    if points is None:
        points = default_points(model, resolution)
    points = _as_2d(points, model.ndim)
    chain = sample_knots(model, sampler, count, seed=seed, **kwargs)
    phi = model.design(points)
    paths = np.asarray(phi @ chain.knots.T).T
    return PathSample(points, paths, chain.knots, chain)


def default_points(model: EmulatorModel, resolution: int = 101) -> np.ndarray:
    axes = [np.linspace(0.0, 1.0, resolution)] * model.ndim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.ndim)
    return model.scaler.inverse(grid)


@dataclass
class Prediction:
    """Sample-based predictive summaries at ``points``."""

    points: np.ndarray
    mean: np.ndarray
    mode: np.ndarray
    quantiles: dict
    chain: tmvn.SampleChain = field(repr=False)

    @property
    def lower(self) -> np.ndarray:
        return self.quantiles[min(self.quantiles)]

    @property
    def upper(self) -> np.ndarray:
        return self.quantiles[max(self.quantiles)]


def predict(model: EmulatorModel, points=None, quantiles=DEFAULT_QUANTILES, sampler: str = "hmc",
            count: int = 1000, seed=0, resolution: int = 101, **kwargs) -> Prediction:
    """Mean, mode curve and empirical quantile bands of constrained paths."""
    qs = tuple(float(q) for q in np.atleast_1d(quantiles))
    if any(not 0.0 <= q <= 1.0 for q in qs):
        raise ValueError("quantiles must lie in [0, 1]")
    ps = sample_paths(model, sampler, count, points=points, resolution=resolution, seed=seed,
                      **kwargs)
    bands = np.quantile(ps.paths, qs, axis=0) if qs else np.zeros((0, ps.points.shape[0]))
    return Prediction(
        points=ps.points,
        mean=ps.paths.mean(axis=0),
        mode=model.mode_curve(ps.points),
        quantiles={q: bands[i] for i, q in enumerate(qs)},
        chain=ps.chain,
    )
