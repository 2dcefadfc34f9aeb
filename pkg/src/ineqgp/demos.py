"""Desk-scale experiments behind ``ineqgp demo``.

Every demo writes plot-ready CSV files into an output directory. Anything
that depends on the wall clock (CPU times, time-normalised ESS) goes into
``timings.csv`` so that all other files are reproducible byte for byte from
the seed.
"""

from __future__ import annotations

import time
import warnings
from pathlib import Path

import numpy as np

from . import datasets, diagnostics, emulator, tmvn
from .emulator import ObservationWarning
from .errors import SamplingError
from .io import write_csv, write_json, write_table

DEMOS = ("bounded-toy", "sigmoid", "tensor-2d", "tensor-5d")


def _bands(path, pred, names):
    cols = [pred.points[:, k] for k in range(pred.points.shape[1])]
    write_csv(path, list(names) + ["mean", "mode", "q_lo", "q_hi"],
              cols + [pred.mean, pred.mode, pred.lower, pred.upper])


def _fit_quiet(*args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ObservationWarning)
        return emulator.fit(*args, **kwargs)


def bounded_toy(out: Path, seed: int = 0, quick: bool = False) -> dict:
    """Five-point data under ``[-alpha, alpha]`` bounds, with and without noise.

    Compares RSM, Gibbs and HMC on the same posterior (m = 100 knots,
    Matern 5/2, sigma2 fixed at 10). RSM is only run to completion when a
    pilot estimate says ``n_s`` draws fit in the proposal budget; otherwise
    only the pilot acceptance rate is reported.
    """
    n_s = 500 if quick else tmvn.CHAIN_LENGTH
    pilot = 50_000 if quick else 200_000
    budget = 2_000_000 if quick else 20_000_000
    data = datasets.five_point_toy()
    fits, rows, times = [], [], []
    for alpha in (1.0, 0.75, 0.6, 0.5):
        for noise in ("noise-free", "noisy"):
            fixed = {"sigma2": 10.0}
            if noise == "noise-free":
                fixed["tau2"] = 0.0
            model = _fit_quiet(data.x, data.y, "matern52", 100, [f"bounds({-alpha},{alpha})"],
                               fixed=fixed, seed=seed)
            fits.append({"alpha": alpha, "noise": noise,
                         "lengthscale": model.kernel.lengthscales[0], "tau2": model.tau2,
                         "loglik": model.loglik})
            spec = model.truncated()
            acc, props = tmvn.rsm_acceptance(spec, pilot, seed=seed,
                                             whitened_mode=model.mode_whitened)
            for sampler in ("rsm", "gibbs", "hmc"):
                row = {"alpha": alpha, "noise": noise, "sampler": sampler, "n_draws": 0.0,
                       "acceptance": 1.0, "ess_q10": np.nan, "ess_q50": np.nan,
                       "ess_q90": np.nan, "status": "ok"}
                if sampler == "rsm" and acc / props * budget < n_s:
                    row.update(acceptance=acc / props, status="skipped: acceptance too low")
                    rows.append(row)
                    continue
                kwargs = {"thinning": tmvn.THINNING} if sampler == "gibbs" else {}
                t0 = time.perf_counter()
                try:
                    chain = emulator.sample_knots(model, sampler, n_s, seed=seed, **kwargs)
                except SamplingError as exc:
                    # e.g. data sitting exactly on a bound without noise leaves
                    # a feasible set of zero width
                    row.update(acceptance=np.nan, status=f"failed: {exc}")
                    rows.append(row)
                    continue
                cpu = time.perf_counter() - t0
                rep = diagnostics.ess_report(chain)
                row.update(n_draws=float(chain.count), acceptance=chain.acceptance_rate,
                           ess_q10=rep.quantiles[0], ess_q50=rep.quantiles[1],
                           ess_q90=rep.quantiles[2])
                rows.append(row)
                times.append({"alpha": alpha, "noise": noise, "sampler": sampler,
                              "cpu_seconds": cpu, "tn_ess": rep.quantiles[0] / cpu})
            for sampler in ("hmc", "gibbs"):
                try:
                    pred = emulator.predict(model, sampler=sampler, count=n_s, seed=seed,
                                            resolution=201)
                except SamplingError:
                    continue
                _bands(out / f"bands_alpha{alpha:g}_{noise}.csv", pred, ["x"])
                break
    write_table(out / "fits.csv", fits)
    write_table(out / "samplers.csv", rows)
    write_table(out / "timings.csv", times)
    write_csv(out / "data.csv", ["x", "y"], [data.x[:, 0], data.y])
    return {"fits": fits, "samplers": rows, "timings": times}


def sigmoid(out: Path, seed: int = 0, quick: bool = False) -> dict:
    """Sigmoid data with bounds and monotonicity, across knot counts and kernels."""
    n_s = 500 if quick else 2000
    data = datasets.sigmoid_data(300, 0.1, seed=seed)
    cons = ["bounds(0,1)", "monotone(dim=1,up)"]
    rows, times = [], []
    for m in (5, 25, 100):
        t0 = time.perf_counter()
        base = _fit_quiet(data.x, data.y, "se", m, [], seed=seed, domain=[[0.0, 1.0]])
        ml = time.perf_counter() - t0
        # the emulator time excludes hyperparameter estimation
        t0 = time.perf_counter()
        model = _fit_quiet(data.x, data.y, "se", m, cons, minimal=True, domain=[[0.0, 1.0]],
                           hyper=(base.kernel, base.tau2))
        pred = emulator.predict(model, np.linspace(0, 1, 201)[:, None], sampler="hmc",
                                count=n_s, seed=seed)
        cpu = time.perf_counter() - t0
        train = emulator.predict(model, data.x, quantiles=(), sampler="hmc", count=n_s, seed=seed)
        rows.append({"m": float(m), "q2": diagnostics.q2(train.mean, data.truth),
                     "lengthscale": model.kernel.lengthscales[0], "sigma2": model.kernel.variance,
                     "tau2": model.tau2})
        times.append({"experiment": f"m={m}", "ml_seconds": ml, "cpu_seconds": cpu})
        _bands(out / f"bands_m{m}.csv", pred, ["x"])

    grid_rows = []
    kernels = ("se",) if quick else ("matern32", "matern52", "se")
    levels = (0.005, 0.1) if quick else (0.005, 0.01, 0.05, 0.1)
    settings = {"bounds": ["bounds(0,1)"], "monotone": ["monotone(dim=1,up)"],
                "bounds+monotone": cons}
    m = 50 if quick else 200
    for level in levels:
        d = datasets.sigmoid_data(300, level, seed=seed)
        for fam in kernels:
            t0 = time.perf_counter()
            base = _fit_quiet(d.x, d.y, fam, m, [], seed=seed, domain=[[0.0, 1.0]])
            ml = time.perf_counter() - t0
            for name, c in settings.items():
                t0 = time.perf_counter()
                model = _fit_quiet(d.x, d.y, fam, m, c, minimal=True, domain=[[0.0, 1.0]],
                                   hyper=(base.kernel, base.tau2))
                pred = emulator.predict(model, d.x, quantiles=(), sampler="hmc", count=n_s // 2,
                                        seed=seed)
                cpu = time.perf_counter() - t0
                grid_rows.append({"noise": level, "kernel": fam, "constraints": name,
                                  "q2": diagnostics.q2(pred.mean, d.truth)})
                times.append({"experiment": f"{name}/{fam}/{level:g}", "ml_seconds": ml,
                              "cpu_seconds": cpu})
    write_table(out / "resolution.csv", rows)
    write_table(out / "kernels_noise.csv", grid_rows)
    write_table(out / "timings.csv", times)
    write_csv(out / "data.csv", ["x", "y", "truth"], [data.x[:, 0], data.y, data.truth])
    return {"resolution": rows, "kernels_noise": grid_rows, "timings": times}


def monotone_violations(paths, shape, dims, tol=1e-8) -> int:
    """Count negative forward differences of gridded paths along ``dims``.

    ``paths`` is ``(s, prod(shape))`` in row-major grid order.
    """
    arr = np.asarray(paths).reshape((-1,) + tuple(shape))
    return int(sum(np.sum(np.diff(arr, axis=k + 1) < -tol) for k in dims))


def _check_grid(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, len(axes)), tuple(len(a) for a in axes)


def tensor_fit_pair(train, test, knots, constraints, seed, count, check_axes):
    """Unconstrained and constrained fits on the same data (shared ML fit).

    Returns a dict with both Q2 values and the monotonicity violations of
    the constrained sample paths on the check grid.
    """
    d = train.x.shape[1]
    domain = [[0.0, 1.0]] * d
    unc = _fit_quiet(train.x, train.y, "matern52", knots, [], domain=domain, seed=seed)
    con = _fit_quiet(train.x, train.y, "matern52", knots, constraints, domain=domain,
                     minimal=True, hyper=(unc.kernel, unc.tau2))
    pred = emulator.predict(con, test.x, quantiles=(), sampler="hmc", count=count, seed=seed)
    pts, shape = _check_grid(check_axes)
    paths = emulator.sample_paths(con, "hmc", count // 2, points=pts, seed=seed + 1).paths
    mono_dims = [t.dim for t in emulator._terms(constraints) if getattr(t, "kind", "") == "monotone"]
    return {
        "q2_unconstrained": diagnostics.q2(unc.mean_curve(test.x), test.truth),
        "q2_constrained": diagnostics.q2(pred.mean, test.truth),
        "violations": float(monotone_violations(paths, shape, mono_dims)),
        "min_value": float(paths.min()),
        "model": con,
    }


def tensor_2d(out: Path, seed: int = 0, quick: bool = False) -> dict:
    """``x1 + x2**2`` on a 30 x 30 grid; 20% training data; 8 x 8 knots."""
    data = datasets.surface_2d_data(30, 0.01, seed=seed)
    train, test = datasets.split(data, 0.2, seed=seed)
    cons = ["positive", "monotone(dim=1,up)", "monotone(dim=2,up)"]
    t0 = time.perf_counter()
    axes = [np.linspace(0, 1, 30)] * 2
    res = tensor_fit_pair(train, test, (8, 8), cons, seed, 300 if quick else 1000, axes)
    cpu = time.perf_counter() - t0
    pts, _ = _check_grid(axes)
    pred = emulator.predict(res["model"], pts, sampler="hmc", count=300 if quick else 1000,
                            seed=seed)
    _bands(out / "surface.csv", pred, ["x1", "x2"])
    row = {k: v for k, v in res.items() if k != "model"}
    write_table(out / "q2.csv", [row])
    write_table(out / "timings.csv", [{"experiment": "tensor-2d", "cpu_seconds": cpu}])
    return {"q2": row}


def tensor_5d(out: Path, seed: int = 0, quick: bool = False) -> dict:
    """Five-input monotone function on 200 design points; knots (4, 4, 5, 3, 3)."""
    data = datasets.monotone_5d_data(200, 0.01, seed=seed)
    cons = ["positive", "monotone(dim=1,up)", "monotone(dim=2,up)"]
    axes = [np.linspace(0, 1, 11)] * 2 + [np.linspace(0, 1, 5)] * 3
    rows, times = [], []
    for frac in ((0.2,) if quick else (0.1, 0.2, 0.3)):
        train, test = datasets.split(data, frac, seed=seed)
        t0 = time.perf_counter()
        res = tensor_fit_pair(train, test, (4, 4, 5, 3, 3), cons, seed, 200 if quick else 1000,
                              axes)
        times.append({"fraction": frac, "cpu_seconds": time.perf_counter() - t0})
        row = {"fraction": frac, **{k: v for k, v in res.items() if k != "model"}}
        rows.append(row)
    write_table(out / "q2.csv", rows)
    write_table(out / "timings.csv", times)
    return {"q2": rows}


def run(name: str, out, seed: int = 0, quick: bool = False) -> dict:
    """Run a named demo, writing its files into ``out``."""
    funcs = {"bounded-toy": bounded_toy, "sigmoid": sigmoid,
             "tensor-2d": tensor_2d, "tensor-5d": tensor_5d}
    if name not in funcs:
        raise ValueError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = funcs[name](out, seed=seed, quick=quick)
    write_json(out / "run.json", {"demo": name, "seed": seed, "quick": quick})
    return result
