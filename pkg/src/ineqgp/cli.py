"""Command-line front end: ``ineqgp {fit,predict,sample,map,diagnose,demo}``.

Exit codes: 0 on success, 1 on a numerical failure (factorization, sampling,
infeasible constraints, solver caps), 2 on bad input (files, flags, configs).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import demos, diagnostics, emulator
from .errors import (ConstraintError, DegenerateCovarianceError, InfeasibleProblemError,
                     MaxIterationsError, SamplingError)
from .io import InputError, load_config, read_csv, read_dataset, write_csv, write_json

NUMERIC_ERRORS = (np.linalg.LinAlgError, SamplingError, InfeasibleProblemError,
                  MaxIterationsError, DegenerateCovarianceError)
INPUT_ERRORS = (InputError, ConstraintError, ValueError, OSError, KeyError)


def _config_overrides(args, keys):
    return {k: getattr(args, k, None) for k in keys}


def _sampler_kwargs(cfg) -> dict:
    name = cfg["sampler"]
    if name == "gibbs":
        return {"burn_in": int(cfg["burn_in"]), "thinning": int(cfg["thinning"])}
    if name == "hmc":
        return {"burn_in": int(cfg["burn_in"])}
    return {}


def _points(args, model):
    if getattr(args, "points", None):
        _, data = read_csv(args.points)
        if data.shape[1] != model.ndim:
            raise InputError(f"{args.points}: expected {model.ndim} input columns, "
                             f"found {data.shape[1]}")
        return data
    return None


def _x_columns(points):
    return [f"x{k + 1}" for k in range(points.shape[1])], [points[:, k] for k in range(points.shape[1])]


def cmd_fit(args) -> int:
    cfg = load_config(args.config, _config_overrides(
        args, ("kernel", "knots", "constraints", "n_starts", "seed")))
    if args.minimal:
        cfg["minimal"] = True
    fixed = dict(cfg["fixed"])
    for item in args.fix or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise InputError(f"--fix expects key=value, got {item!r}")
        try:
            fixed[key.strip()] = float(val)
        except ValueError:
            raise InputError(f"--fix {item!r}: value is not a number") from None
    x, y, _ = read_dataset(args.data)
    knots = cfg["knots"]
    if isinstance(knots, list) and len(knots) == 1:
        knots = knots[0]
    model = emulator.fit(x, y, kernel=cfg["kernel"], knots=knots,
                         constraints=cfg["constraints"], domain=cfg["domain"], fixed=fixed,
                         minimal=cfg["minimal"], n_starts=int(cfg["n_starts"]),
                         seed=int(cfg["seed"]))
    emulator.save(model, args.out)
    ls = " ".join(f"{v:.6g}" for v in model.kernel.lengthscales)
    print(f"sigma2 {model.kernel.variance:.6g}")
    print(f"lengthscales {ls}")
    print(f"tau2 {model.tau2:.6g}")
    if model.loglik is not None:
        print(f"loglik {model.loglik:.6f}")
    print(f"model written to {args.out}")
    return 0


def _sampling_config(args):
    cfg = load_config(args.config, _config_overrides(
        args, ("sampler", "n_samples", "burn_in", "thinning", "quantiles", "resolution", "seed")))
    if cfg["sampler"] not in ("rsm", "gibbs", "hmc"):
        raise InputError(f"unknown sampler {cfg['sampler']!r}")
    return cfg


def cmd_predict(args) -> int:
    cfg = _sampling_config(args)
    model = emulator.load(args.model)
    qs = [float(q) for q in cfg["quantiles"]]
    if len(qs) != 2 or not qs[0] < qs[1]:
        raise InputError("quantiles must be a pair lo < hi")
    pred = emulator.predict(model, _points(args, model), quantiles=qs, sampler=cfg["sampler"],
                            count=int(cfg["n_samples"]), seed=int(cfg["seed"]),
                            resolution=int(cfg["resolution"]), **_sampler_kwargs(cfg))
    names, cols = _x_columns(pred.points)
    write_csv(args.out, names + ["mean", "mode", "q_lo", "q_hi"],
              cols + [pred.mean, pred.mode, pred.lower, pred.upper])
    return 0


def cmd_sample(args) -> int:
    cfg = _sampling_config(args)
    model = emulator.load(args.model)
    ps = emulator.sample_paths(model, cfg["sampler"], int(cfg["n_samples"]),
                               points=_points(args, model), resolution=int(cfg["resolution"]),
                               seed=int(cfg["seed"]), **_sampler_kwargs(cfg))
    names, cols = _x_columns(ps.points)
    s = ps.paths.shape[0]
    write_csv(args.out, names + [f"path{i + 1}" for i in range(s)], cols + list(ps.paths))
    return 0


def cmd_map(args) -> int:
    cfg = load_config(args.config, _config_overrides(args, ("resolution",)))
    model = emulator.load(args.model)
    points = _points(args, model)
    if points is None:
        points = emulator.default_points(model, int(cfg["resolution"]))
    names, cols = _x_columns(points)
    write_csv(args.out, names + ["mode", "mean"],
              cols + [model.mode_curve(points), model.mean_curve(points)])
    if args.knots_out:
        knots = model.scaler.inverse(model.grid.points())
        kn, kc = _x_columns(knots)
        write_csv(args.knots_out, kn + ["mode"], kc + [model.mode])
    return 0


def cmd_diagnose(args) -> int:
    if bool(args.model) == bool(args.chain):
        raise InputError("give exactly one of --model or --chain")
    if args.chain:
        _, draws = read_csv(args.chain)
        report = diagnostics.ess_report(draws, wall_seconds=args.wall_seconds)
        meta = {"source": str(args.chain)}
    else:
        cfg = _sampling_config(args)
        model = emulator.load(args.model)
        chain = emulator.sample_knots(model, cfg["sampler"], int(cfg["n_samples"]),
                                      seed=int(cfg["seed"]), **_sampler_kwargs(cfg))
        report = diagnostics.ess_report(chain)
        meta = {"source": str(args.model), "sampler": chain.sampler,
                "acceptance_rate": chain.acceptance_rate, "seed": int(cfg["seed"])}
        if args.trace_out:
            k = chain.knots.shape[1]
            write_csv(args.trace_out, [f"xi{j + 1}" for j in range(k)], list(chain.knots.T))
    doc = {**meta, **report.to_dict()}
    print(json.dumps(doc, indent=2, sort_keys=True))
    if args.out:
        if args.model:
            # clock-dependent fields stay on stdout so the file is reproducible
            doc = {k: v for k, v in doc.items() if k not in ("wall_seconds", "tn_ess")}
        write_json(args.out, doc)
    if args.ess_out:
        ess = np.asarray(report.per_coordinate_ess)
        flags = np.asarray(report.flags, dtype=str)
        # indicator columns keep the file numeric, so read_csv can load it back
        write_csv(args.ess_out, ["coordinate", "ess", "antithetic", "degenerate"],
                  [np.arange(1, ess.size + 1), ess, (flags == "antithetic").astype(float),
                   (flags == "degenerate").astype(float)])
    return 0


def cmd_demo(args) -> int:
    t0 = time.perf_counter()
    demos.run(args.name, args.out, seed=args.seed, quick=args.quick)
    print(f"{args.name}: outputs in {args.out} ({time.perf_counter() - t0:.1f} s)")
    return 0


def _add_sampling(p):
    p.add_argument("--model", required=True, help="model file written by 'fit'")
    p.add_argument("--config", help="JSON config (flags override it)")
    p.add_argument("--points", help="CSV of input points (header row, one column per input)")
    p.add_argument("--sampler", choices=("rsm", "gibbs", "hmc"))
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thinning", type=int)
    p.add_argument("--resolution", type=int, help="grid points per dimension when --points is absent")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ineqgp", description="Gaussian-process emulation under linear inequality constraints.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit hyperparameters and the constrained posterior")
    p.add_argument("--data", required=True, help="CSV; last column is the response")
    p.add_argument("--config")
    p.add_argument("--kernel", choices=("se", "matern52", "matern32"))
    p.add_argument("--knots", type=int, nargs="+", help="knots per dimension")
    p.add_argument("--constraint", dest="constraints", action="append",
                   help='e.g. "bounds(0,1)", "monotone(dim=1,up)"; repeatable')
    p.add_argument("--fix", action="append", help="hold a hyperparameter fixed, e.g. sigma2=10")
    p.add_argument("--minimal", action="store_true", help="drop bound rows implied by monotonicity")
    p.add_argument("--n-starts", dest="n_starts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predictive mean, mode and quantile bands")
    _add_sampling(p)
    p.add_argument("--quantiles", type=float, nargs=2)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sample", help="constrained sample paths (one column per path)")
    _add_sampling(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("map", help="posterior mode curve")
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--points")
    p.add_argument("--resolution", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--knots-out", dest="knots_out", help="also write the mode at the knots")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("diagnose", help="effective sample sizes of a chain")
    p.add_argument("--model")
    p.add_argument("--chain", help="CSV of draws, one column per coordinate")
    p.add_argument("--wall-seconds", dest="wall_seconds", type=float)
    p.add_argument("--config")
    p.add_argument("--sampler", choices=("rsm", "gibbs", "hmc"))
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thinning", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="JSON report")
    p.add_argument("--ess-out", dest="ess_out", help="per-coordinate ESS CSV")
    p.add_argument("--trace-out", dest="trace_out", help="knot trace CSV (with --model)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("demo", help="run a desk-scale experiment")
    p.add_argument("name", choices=demos.DEMOS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory (default: demo-<name>)")
    p.add_argument("--quick", action="store_true", help="smaller chains and grids")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "demo" and args.out is None:
        args.out = f"demo-{args.name}"
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"ineqgp {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1
    except INPUT_ERRORS as exc:
        print(f"ineqgp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
