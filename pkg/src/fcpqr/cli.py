"""Command-line front end: fit, test, and simulate subcommands.

Every run writes a manifest (resolved argv, seed, versions, wall time)
next to its numerical artifacts; rerunning the manifest's argv reproduces
those artifacts byte for byte.  Exit codes: 0 ok, 2 usage, 3 data error,
4 numerical failure.
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .admm import (AdmmConfig, ChangePlaneFit, fit_changeplane,
                   select_lambda_cv)
from .data import load_dataset
from .errors import DataError, NumericalError
from .inference import bootstrap_pvalue
from .kernels import KernelSpec, evaluate_coefficients
from .simulate import (TAU_GRID_DEFAULT, SimScenario, default_test_gamma,
                       run_estimation_experiment, run_test_experiment,
                       scenarios_from_config)
from .smoothing import SmoothingSpec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _read_schema(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _infer_schema(covariate_path):
    """Canonical-name fallback when --schema is omitted.

    Expects the column names written by save_dataset: z1, z2_const,
    z2_*, x1..xp; the x-tilde subset defaults to every x column after the
    leading constant.
    """
    with open(covariate_path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    sep = "\t" if "\t" in first else ","
    names = [c.strip() for c in first.split(sep)]

    def suffix_key(nm, prefix):
        tail = nm[len(prefix):]
        return int(tail) if tail.isdigit() else 0

    x_names = sorted([nm for nm in names if nm.startswith("x")],
                     key=lambda nm: suffix_key(nm, "x"))
    z2_names = [nm for nm in names if nm.startswith("z2")]
    z2_names = (["z2_const"] if "z2_const" in z2_names else []) + sorted(
        (nm for nm in z2_names if nm != "z2_const"),
        key=lambda nm: suffix_key(nm, "z2_"))
    if not x_names or "z1" not in names or not z2_names:
        raise DataError("cannot infer schema from column names; pass --schema")
    return {"x": x_names, "xtilde": x_names[1:] if len(x_names) > 1 else x_names,
            "z1": "z1", "z2": z2_names}


def _load(args):
    schema = _read_schema(args.schema) if args.schema else _infer_schema(args.covariates)
    return load_dataset(args.data, args.covariates, schema)


def _build_config(args, ds):
    smoothing = SmoothingSpec(h=args.h, c_h=args.h_const) if args.h else None
    lam = None
    if args.lambda_tilde is not None:
        lam = args.lambda_tilde / (ds.n * ds.m)
    return AdmmConfig(tau=args.tau, lam=lam, kappa=args.kappa,
                      kernel=KernelSpec.from_string(args.kernel),
                      smoothing=smoothing, h_const=args.h_const, tol=args.tol,
                      max_iter=args.max_iter, multistart=args.multistart,
                      seed=args.seed)


def _resolved_argv(args, parser_dests):
    """Rebuild an argv that replays this run exactly (seed made explicit)."""
    argv = [args.command]
    for dest, flag in parser_dests:
        val = getattr(args, dest)
        if val is None or val is False:
            continue
        if val is True:
            argv.append(flag)
        elif isinstance(val, (list, tuple)):
            argv.extend([flag, ",".join(str(v) for v in val)])
        else:
            argv.extend([flag, str(val)])
    return argv


def _manifest(path, command, argv, seed, wall, written):
    _write_json(path, {
        "command": command,
        "argv": argv,
        "seed": seed,
        "versions": {
            "fcpqr": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": wall,
        "written": [str(w) for w in written],
    })


def _write_curves(path, fit: ChangePlaneFit, kernel, grid, p, d):
    curves = evaluate_coefficients(fit.coef, kernel, grid)
    names = [f"beta{k + 1}" for k in range(p)] + [f"theta{k + 1}" for k in range(d)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(["s"] + names) + "\n")
        for j, s in enumerate(grid):
            fh.write(",".join(repr(float(v)) for v in [s] + list(curves[:, j])) + "\n")


def _cmd_fit(args):
    ds = _load(args)
    cfg = _build_config(args, ds)
    cv_table = None
    if cfg.lam is None:
        lam, cv_table = select_lambda_cv(ds, cfg, folds=args.cv_folds)
        cfg = replace(cfg, lam=lam)
    fit = fit_changeplane(ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = fit.to_dict()
    payload["config"] = {
        "tau": cfg.tau, "lam": cfg.lam, "kappa": cfg.kappa,
        "kernel": cfg.kernel.to_string(), "h": fit.h, "h_const": cfg.h_const,
        "tol": cfg.tol, "max_iter": cfg.max_iter, "multistart": cfg.multistart,
        "seed": cfg.seed,
    }
    payload["tau"] = cfg.tau
    payload["kernel"] = cfg.kernel.to_string()
    if cv_table is not None:
        payload["cv_table"] = cv_table.tolist()
    _write_json(out / "fit.json", payload)
    _write_curves(out / "curves.csv", fit, cfg.kernel, ds.grid, ds.p, ds.d)
    return [out / "fit.json", out / "curves.csv"]


def _cmd_test(args):
    ds = _load(args)
    cfg = _build_config(args, ds)
    if cfg.lam is None:
        lam, _ = select_lambda_cv(ds, cfg, folds=args.cv_folds, null_model=True)
        cfg = replace(cfg, lam=lam)
    result = bootstrap_pvalue(ds, cfg, args.B, args.seed, alpha=args.alpha,
                              jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = result.to_dict()
    payload["lam"] = cfg.lam
    payload["kernel"] = cfg.kernel.to_string()
    _write_json(out / "wast.json", payload)
    return [out / "wast.json"]


def _cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.config:
        kind, cells, params = scenarios_from_config(args.config)
        reps, b, alpha = params["reps"], params["B"], params["alpha"]
        lam_tilde = params["lambda_tilde"]
        seed = params["seed"]
    else:
        kind, reps, b, alpha = args.scenario, args.reps, args.B, args.alpha
        lam_tilde, seed = args.lambda_tilde, args.seed
        tau_values = (list(TAU_GRID_DEFAULT) if args.tau == "grid"
                      else [float(v) for v in str(args.tau).split(",")])
        n_values = [int(v) for v in str(args.n).split(",")]
        if kind == "estimation":
            cells = [SimScenario(n=n, m=args.m, tau=tau, error_family=args.dist,
                                 xi_effect=1.0, seed=seed)
                     for tau in tau_values for n in n_values]
        else:
            xi_values = [float(v) for v in str(args.xi).split(",")]
            gamma0 = tuple(default_test_gamma())
            cells = [SimScenario(n=n, m=args.m, tau=tau, error_family=args.dist,
                                 xi_effect=xi, gamma0=gamma0, seed=seed)
                     for tau in tau_values for n in n_values for xi in xi_values]
    # each cell's tau overrides at fit time inside the experiment workers
    cfg = AdmmConfig(tau=cells[0].tau, lam=None,
                     kernel=KernelSpec.from_string(args.kernel),
                     tol=args.tol, max_iter=args.max_iter,
                     multistart=args.multistart, seed=seed)
    if kind == "estimation":
        summary = run_estimation_experiment(cells, cfg, reps, jobs=args.jobs)
        target = out / "summary.csv"
    else:
        summary = run_test_experiment(cells, cfg, reps, b, alpha=alpha,
                                      jobs=args.jobs, lam_tilde=lam_tilde)
        target = out / "power.csv"
    summary.to_delimited(target)
    return [target]


def build_parser():
    parser = argparse.ArgumentParser(prog="fcpqr",
                                     description="Change-plane quantile regression "
                                                 "for functional responses")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--kernel", default="gaussian:0.2")
        p.add_argument("--h", type=float, default=None,
                       help="override the threshold-smoothing bandwidth")
        p.add_argument("--h-const", type=float, default=1.0, dest="h_const")
        p.add_argument("--kappa", type=float, default=1.0)
        p.add_argument("--tol", type=float, default=1e-3)
        p.add_argument("--max-iter", type=int, default=500, dest="max_iter")
        p.add_argument("--multistart", type=int, default=1)
        p.add_argument("--lambda-tilde", type=float, default=None, dest="lambda_tilde",
                       help="penalty in pre-scaled units (divided by n*m); "
                            "default: cross-validated")
        p.add_argument("--cv-folds", type=int, default=5, dest="cv_folds")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=True)

    p_fit = sub.add_parser("fit", help="fit the change-plane model")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--covariates", required=True)
    p_fit.add_argument("--schema", default=None)
    p_fit.add_argument("--tau", type=float, default=0.5)
    add_common(p_fit)

    p_test = sub.add_parser("test", help="test for subgroup existence")
    p_test.add_argument("--data", required=True)
    p_test.add_argument("--covariates", required=True)
    p_test.add_argument("--schema", default=None)
    p_test.add_argument("--tau", type=float, default=0.5)
    add_common(p_test)
    p_test.add_argument("--B", type=int, default=500)
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--jobs", type=int, default=1)

    p_sim = sub.add_parser("simulate", help="run a synthetic experiment campaign")
    p_sim.add_argument("--config", default=None,
                       help="JSON scenario-grid declaration; overrides the "
                            "individual design flags")
    p_sim.add_argument("--scenario", choices=["estimation", "power"])
    p_sim.add_argument("--tau", default="0.5",
                       help="quantile level(s): scalar, comma list, or "
                            "'grid' for 0.25,0.5,0.75")
    p_sim.add_argument("--dist", choices=["gaussian", "t3", "laplace", "none"],
                       default="t3")
    p_sim.add_argument("--n", default="200", help="sample size(s), comma separated")
    p_sim.add_argument("--m", type=int, default=30)
    p_sim.add_argument("--reps", type=int, default=100)
    p_sim.add_argument("--B", type=int, default=200)
    p_sim.add_argument("--alpha", type=float, default=0.05)
    p_sim.add_argument("--xi", default="0,0.1,0.2,0.3,0.4,0.5")
    p_sim.add_argument("--jobs", type=int, default=1)
    add_common(p_sim)
    return parser


_COMMON_DESTS = [("tau", "--tau"), ("kernel", "--kernel"), ("h", "--h"),
                 ("h_const", "--h-const"), ("kappa", "--kappa"), ("tol", "--tol"),
                 ("max_iter", "--max-iter"), ("multistart", "--multistart"),
                 ("lambda_tilde", "--lambda-tilde"), ("cv_folds", "--cv-folds"),
                 ("seed", "--seed"), ("out", "--out")]

_DESTS = {
    "fit": [("data", "--data"), ("covariates", "--covariates"),
            ("schema", "--schema")] + _COMMON_DESTS,
    "test": [("data", "--data"), ("covariates", "--covariates"),
             ("schema", "--schema")] + _COMMON_DESTS
            + [("B", "--B"), ("alpha", "--alpha"), ("jobs", "--jobs")],
    "simulate": [("config", "--config"), ("scenario", "--scenario"),
                 ("dist", "--dist"), ("n", "--n"), ("m", "--m"),
                 ("reps", "--reps"), ("B", "--B"), ("alpha", "--alpha"),
                 ("xi", "--xi"), ("jobs", "--jobs")]
                + _COMMON_DESTS,
}

_HANDLERS = {"fit": _cmd_fit, "test": _cmd_test, "simulate": _cmd_simulate}


def dispatch(argv):
    """Parse argv, run the command, write artifacts plus a manifest.

    Returns the process exit status.  All randomness flows from --seed;
    when the flag is absent a seed is drawn once from system entropy and
    recorded in the manifest, so the manifest argv always replays exactly.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and not (args.config or args.scenario):
        print("fcpqr simulate: one of --config or --scenario is required",
              file=sys.stderr)
        return EXIT_USAGE
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % (2**32))
    start = time.perf_counter()
    try:
        written = _HANDLERS[args.command](args)
    except DataError as exc:
        print(f"fcpqr {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"fcpqr {args.command}: numerical failure: {exc} "
              f"{exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _manifest(out / "manifest.json", args.command,
              _resolved_argv(args, _DESTS[args.command]), args.seed,
              time.perf_counter() - start, written)
    return EXIT_OK


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
