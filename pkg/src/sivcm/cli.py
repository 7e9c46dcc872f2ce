"""Command-line front end: ``sivcm fit | infer | bandwidth | simulate``.

Exit codes are 0 on success, 1 on usage or input errors and 2 on numerical
failures. Every error is reported as a single ``code: message`` line on
standard error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bandwidth import BandwidthPlan, default_grid, select_bandwidths, undersmoothing_factor
from .errors import MalformedCsv, SivcmError
from .estimation import Dataset, mel_estimate, normalize_index, pilot_index
from .inference import (DEFAULT_MC_DRAWS, METHODS, profile_on_angles, region_spec,
                        region_verdict, statistics_at)
from .io import read_dataset_csv, write_csv, write_json
from .kernels import Kernel, WeightFn
from .smoothing import local_fit_batch

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
CURVE_GRID = 101


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _methods(text):
    names = [m.strip().upper() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"methods must be drawn from {','.join(METHODS).lower()}")
    return tuple(dict.fromkeys(names))


def _kernel(text):
    try:
        return Kernel.from_name(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _data_flags(sp):
    sp.add_argument("csv", help="input CSV with header y,x1..xp,z1..zq")
    sp.add_argument("--p", type=int, help="number of X columns (required)")
    sp.add_argument("--q", type=int, help="number of Z columns (required)")
    sp.add_argument("--weight-lo", type=float, help="lower end of the index weight interval")
    sp.add_argument("--weight-hi", type=float, help="upper end of the index weight interval")
    sp.add_argument("--kernel", type=_kernel, default=Kernel.EPANECHNIKOV)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=".", help="output directory")


def _fit_flags(sp):
    sp.add_argument("--h", type=float, help="estimation bandwidth (default: from MMCV)")
    sp.add_argument("--h1", type=float, help="derivative / optimal bandwidth (default: from MMCV)")
    sp.add_argument("--init-beta", type=_float_list, help="starting index, comma separated")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sivcm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    fit = sub.add_parser("fit", help="estimate the index and the coefficient curves")
    _data_flags(fit)
    _fit_flags(fit)

    infer = sub.add_parser("infer", help="confidence-region verdicts and statistic profile")
    _data_flags(infer)
    _fit_flags(infer)
    infer.add_argument("--alpha", type=float, default=0.05)
    infer.add_argument("--methods", type=_methods, default=METHODS)
    infer.add_argument("--beta-grid", type=int, default=181,
                       help="number of circle points in the profile (p = 2)")
    infer.add_argument("--beta-test", type=_float_list, action="append", default=[],
                       help="extra index to test, comma separated (repeatable)")
    infer.add_argument("--mc-draws", type=int, default=DEFAULT_MC_DRAWS)

    bw = sub.add_parser("bandwidth", help="MMCV bandwidth selection")
    _data_flags(bw)
    bw.add_argument("--init-beta", type=_float_list, help="pilot index, comma separated")
    bw.add_argument("--grid-size", type=int, default=20)

    sim = sub.add_parser("simulate", help="seeded Monte Carlo study")
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--replicates", type=int, default=100)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--methods", type=_methods, default=METHODS)
    sim.add_argument("--mc-draws", type=int, default=DEFAULT_MC_DRAWS)
    sim.add_argument("--no-profile", action="store_true", help="skip statistic_profile.csv")
    sim.add_argument("--out", default="sim_out")
    return parser


# --------------------------------------------------------------------------- validation

def _validate(args):
    if args.command is None:
        raise UsageError("a subcommand is required (fit, infer, bandwidth, simulate)")
    if args.command == "simulate":
        if args.n < 2 or args.replicates < 1:
            raise UsageError("--n must be at least 2 and --replicates at least 1")
        _check_alpha(args)
        return
    for flag in ("p", "q"):
        v = getattr(args, flag)
        if v is None:
            raise UsageError(f"--{flag} is required")
        if v < 1:
            raise UsageError(f"--{flag} must be positive")
    if (args.weight_lo is None) != (args.weight_hi is None):
        raise UsageError("--weight-lo and --weight-hi must be given together")
    if args.weight_lo is not None and not args.weight_lo <= args.weight_hi:
        raise UsageError("--weight-lo must not exceed --weight-hi")
    for flag in ("h", "h1"):
        v = getattr(args, flag, None)
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise UsageError(f"--{flag} must be a positive number")
    init = getattr(args, "init_beta", None)
    if init is not None:
        if len(init) != args.p:
            raise UsageError(f"--init-beta needs {args.p} values")
        if not np.any(init):
            raise UsageError("--init-beta must not be the zero vector")
    if args.command == "infer":
        _check_alpha(args)
        if args.beta_grid < 1:
            raise UsageError("--beta-grid must be positive")
        for b in args.beta_test:
            if len(b) != args.p or not np.any(b):
                raise UsageError(f"--beta-test needs {args.p} values, not all zero")
    if args.command == "bandwidth" and args.grid_size < 1:
        raise UsageError("--grid-size must be positive")


def _check_alpha(args):
    if not 0.0 < args.alpha < 1.0:
        raise UsageError("--alpha must lie in (0, 1)")
    if args.mc_draws < 1000:
        raise UsageError("--mc-draws must be at least 1000")


# --------------------------------------------------------------------------- commands

def _load(args) -> Dataset:
    Y, X, Z = read_dataset_csv(args.csv, args.p, args.q)
    return Dataset(Y, X, Z)


def _weight(args) -> WeightFn:
    if args.weight_lo is None:
        return WeightFn.everywhere()
    return WeightFn(args.weight_lo, args.weight_hi)


def _plan(args, data, pilot) -> BandwidthPlan:
    if args.h is None and args.h1 is None:
        return select_bandwidths(data, pilot, args.kernel, shuffle_seed=args.seed)
    f = undersmoothing_factor(data.n)
    h1 = args.h1 if args.h1 is not None else args.h / f
    h = args.h if args.h is not None else h1 * f
    return BandwidthPlan(h_opt=h1, h=h, h1=h1, b_n=h1)


def _fit(args, data):
    w = _weight(args)
    pilot = (normalize_index(args.init_beta) if args.init_beta is not None
             else pilot_index(data, args.kernel, w))
    plan = _plan(args, data, pilot)
    return mel_estimate(data, plan, args.kernel, w, init=pilot)


def _curve_rows(data, fit):
    U = data.X @ fit.beta_hat.beta
    grid = np.linspace(float(U.min()), float(U.max()), CURVE_GRID)
    bw = fit.bandwidths
    g = local_fit_batch(U, data.Z, data.Y, grid, bw.h_opt, fit.kernel)
    d = g if bw.h1 == bw.h_opt else local_fit_batch(U, data.Z, data.Y, grid, bw.h1, fit.kernel)
    return [[u, *ga, *db] for u, ga, db in zip(grid, g.a, d.b)]


def cmd_fit(args) -> int:
    data = _load(args)
    fit = _fit(args, data)
    out = _outdir(args.out)
    doc = {"n": data.n, "p": data.p, "q": data.q, **fit.to_dict()}
    write_json(out / "fit.json", doc)
    q = data.q
    write_csv(out / "curves.csv",
              ["u"] + [f"g{j + 1}" for j in range(q)] + [f"gdot{j + 1}" for j in range(q)],
              _curve_rows(data, fit))
    print("beta_hat: " + ", ".join(f"{b:.6f}" for b in fit.beta_hat.beta))
    print(f"sigma2_hat: {fit.sigma2_hat:.6f}  status: {fit.status}")
    return EXIT_OK


def cmd_infer(args) -> int:
    data = _load(args)
    fit = _fit(args, data)
    seed = 0 if args.seed is None else args.seed
    specs = {m: region_spec(m, args.alpha, fit, args.mc_draws, seed) for m in args.methods}

    tests = [("beta_hat", fit.beta_hat.beta)] + [("beta_test", np.asarray(b)) for b in args.beta_test]
    verdicts = []
    for label, beta in tests:
        stats = statistics_at(data, fit, beta)
        entry = {"label": label, "beta": normalize_index(beta).beta.tolist(),
                 "r_hat": stats["r_hat"], "rho_hat": stats["rho_hat"]}
        for m, spec in specs.items():
            v = region_verdict(data, fit, beta, spec, stats)
            entry[m] = {"statistic": v.statistic, "inside": v.inside, "flags": list(v.flags)}
        verdicts.append(entry)

    regions = {m: {"critical_value": s.critical_value, "alpha": s.alpha,
                   "calibration": "weighted_chisq_mc" if m == "EEL" else f"chisq_{fit.p}"}
               for m, s in specs.items()}
    out = _outdir(args.out)
    lower = [m.lower() for m in METHODS]
    if fit.p == 2:
        theta_hat = math.atan2(fit.beta_hat.beta[1], fit.beta_hat.beta[0])
        # half circle centred on the estimate covers every direction once
        angles = theta_hat + np.linspace(-math.pi / 2, math.pi / 2, args.beta_grid + 1)[1:]
        rows = profile_on_angles(data, fit, angles)
        for m, s in specs.items():
            inside = [r[m.lower()] <= s.critical_value for r in rows]
            regions[m]["grid_points"] = len(rows)
            regions[m]["grid_inside"] = int(sum(inside))
        write_csv(out / "statistic_profile.csv",
                  ["theta", "beta1", "beta2", *lower]
                  + [f"inside_{m.lower()}" for m in specs],
                  [[r["theta"], r["beta1"], r["beta2"], *(r[m] for m in lower),
                    *(int(r[m.lower()] <= s.critical_value) for m, s in specs.items())]
                   for r in rows])
    doc = {"n": data.n, "p": data.p, "q": data.q, "alpha": args.alpha,
           "methods": list(specs), "mc_draws": args.mc_draws, "seed": seed,
           "fit": {"beta_hat": fit.beta_hat.beta.tolist(), "sigma2_hat": fit.sigma2_hat,
                   "bandwidths": fit.bandwidths.to_dict(), "status": fit.status,
                   "G_eigs": fit.plugins.G_eigs.tolist()},
           "regions": regions, "verdicts": verdicts}
    write_json(out / "region.json", doc)
    for m, r in regions.items():
        print(f"{m:<7} critical={r['critical_value']:.4f}"
              + (f"  grid inside={r['grid_inside']}/{r['grid_points']}" if "grid_points" in r else ""))
    return EXIT_OK


def cmd_bandwidth(args) -> int:
    data = _load(args)
    w = _weight(args)
    pilot = (normalize_index(args.init_beta) if args.init_beta is not None
             else pilot_index(data, args.kernel, w))
    U = data.X @ pilot.beta
    plan = select_bandwidths(data, pilot, args.kernel, grid=default_grid(U, data.n, args.grid_size),
                             shuffle_seed=args.seed)
    out = _outdir(args.out)
    write_json(out / "bandwidth.json", {"n": data.n, "pilot": pilot.beta.tolist(),
                                        "kernel": args.kernel.name.lower(), **plan.to_dict()})
    print(f"h_opt={plan.h_opt:.6g}  h={plan.h:.6g}  h1={plan.h1:.6g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulation import SimConfig, emit_reports, format_table, run_study

    kw = {"n": args.n, "replicates": args.replicates, "alpha": args.alpha,
          "methods": args.methods, "mc_draws": args.mc_draws}
    if args.seed is not None:
        kw["base_seed"] = args.seed
    try:
        cfg = SimConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc))
    result = run_study(cfg, profile=not args.no_profile)
    emit_reports(result, args.out)
    print(format_table(result))
    return EXIT_OK


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


COMMANDS = {"fit": cmd_fit, "infer": cmd_infer, "bandwidth": cmd_bandwidth,
            "simulate": cmd_simulate}


def _fail(code: str, message, status: int) -> int:
    text = " ".join(str(message).split())
    print(f"{code}: {text}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
    except UsageError as exc:
        return _fail("usage_error", exc, EXIT_USAGE)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage_error", exc, EXIT_USAGE)
    except MalformedCsv as exc:
        return _fail(exc.code, exc, EXIT_USAGE)
    except SivcmError as exc:
        return _fail(exc.code, exc, EXIT_NUMERIC)
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        return _fail("numerical_error", exc, EXIT_NUMERIC)
    except OSError as exc:
        return _fail("io_error", exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
