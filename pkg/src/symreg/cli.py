"""Command-line interface.

Commands
--------
fit             maximum likelihood fit of a CSV data set
test            Wald/LR/score/gradient tests with corrections (and bootstrap)
simulate-size   null rejection rates for a simulation design
simulate-power  size-corrected power curves for a simulation design

Exit status is 0 on success, 1 on numerical failure (non-convergence) and
2 on usage or data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .distcore import ParameterError, QuadratureError, kernel
from .design import SingularDesignError
from .estimate import ConvergenceError, ModelSpec, aicc, fit, fit_logsymmetric, standard_errors
from .resample import BootstrapFailure, bootstrap_test
from .simlab import ConfigError, SimulationError, load_design, power_study, size_study, table_report
from .testsuite import run_tests

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
INTERCEPT = "intercept"


class DataError(ValueError):
    pass


def read_csv(path):
    """Read a header-first UTF-8 CSV into ``(names, columns)``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not UTF-8 text") from None
    if not rows or not rows[0]:
        raise DataError(f"{path} has no header row")
    names = [h.strip() for h in rows[0]]
    if len(set(names)) != len(names):
        raise DataError("duplicate column names in header")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    cols = {name: [] for name in names}
    for i, row in enumerate(body, start=2):
        if len(row) != len(names):
            raise DataError(f"line {i}: expected {len(names)} fields, found {len(row)}")
        for name, cell in zip(names, row):
            cols[name].append(cell.strip())
    return names, cols


def _numeric(cols, name):
    out = np.empty(len(cols[name]))
    for i, cell in enumerate(cols[name]):
        try:
            out[i] = float(cell)
        except ValueError:
            raise DataError(f"column {name!r}, data row {i + 1}: {cell!r} is not a number") from None
        if not math.isfinite(out[i]):
            raise DataError(f"column {name!r}, data row {i + 1}: missing or non-finite value")
    return out


def build_spec(args, with_test: bool) -> ModelSpec:
    names, cols = read_csv(args.data)
    if args.response not in cols:
        raise DataError(f"response column {args.response!r} not found (columns: {', '.join(names)})")
    covs = [c for c in names if c != args.response] if args.covariates is None else \
        [c.strip() for c in args.covariates.split(",") if c.strip()]
    for c in covs:
        if c not in cols:
            raise DataError(f"unknown covariate column {c!r}")
    y = _numeric(cols, args.response)
    xcols = [] if args.no_intercept else [np.ones(y.size)]
    xnames = [] if args.no_intercept else [INTERCEPT]
    for c in covs:
        xcols.append(_numeric(cols, c))
        xnames.append(c)
    if not xcols:
        raise DataError("the model has no covariates")
    X = np.column_stack(xcols)
    if y.size <= X.shape[1]:
        raise DataError(f"need more rows than coefficients (n={y.size}, p={X.shape[1]})")
    if args.log:
        bad = [int(i) + 1 for i in np.flatnonzero(~(y > 0))]
        if bad:
            raise DataError(f"--log needs a positive response; data rows {bad} are not positive")
    test = beta10 = None
    if with_test:
        wanted = [c.strip() for c in (args.test or "").split(",") if c.strip()]
        if not wanted:
            raise DataError("--test needs at least one column")
        for c in wanted:
            if c not in xnames:
                raise DataError(f"tested column {c!r} is not in the model ({', '.join(xnames)})")
        test = [xnames.index(c) for c in wanted]
        if args.null:
            try:
                beta10 = [float(v) for v in args.null.split(",")]
            except ValueError:
                raise DataError(f"--null values {args.null!r} are not numbers") from None
            if len(beta10) != len(test):
                raise DataError(f"--null has {len(beta10)} values for {len(test)} tested columns")
    return ModelSpec(y, X, kernel(args.family), test=test, beta10=beta10, log_scale=args.log, names=xnames)


def _emit(payload, out):
    text = json.dumps(payload, indent=2, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    spec = build_spec(args, with_test=False)
    res = fit_logsymmetric(spec) if args.log else fit(spec)
    se_b, se_phi = standard_errors(spec, res)
    names = list(spec.names)
    payload = {
        "family": spec.family.spec,
        "log_scale": spec.log_scale,
        "n": spec.n,
        "p": spec.p,
        "coefficients": [
            {"name": nm, "estimate": float(b), "std_error": float(s)}
            for nm, b, s in zip(names, res.beta_hat, se_b)
        ],
        "phi": res.phi_hat,
        "phi_std_error": float(se_phi),
        "loglik": res.loglik,
        "aicc": aicc(res, spec.n, spec.p + 1) if spec.n - spec.p - 2 > 0 else None,
        "iterations": res.iterations,
        "converged": res.converged,
        "degenerate": res.degenerate,
    }
    if args.log:
        payload["loglik_response"] = res.loglik_response
        payload["median"] = res.median.tolist()
    _emit(payload, args.out)
    return EXIT_OK if res.converged else EXIT_NUMERIC


def cmd_test(args) -> int:
    spec = build_spec(args, with_test=True)
    report = run_tests(spec, force=True)
    payload = report.to_json()
    payload["converged"] = bool(report.unrestricted.converged and report.restricted.converged)
    if not payload["converged"]:
        _emit(payload, args.out)
        print("error: maximum likelihood did not converge", file=sys.stderr)
        return EXIT_NUMERIC
    if args.boot:
        boot = bootstrap_test(spec, (report.unrestricted, report.restricted), B=args.boot, seed=args.seed,
                              threads=args.threads)
        payload["bootstrap"] = {k: v.to_json() for k, v in boot.items()}
    a = args.alpha
    payload["alpha"] = a
    payload["reject"] = {k: (v is not None and v <= a) for k, v in payload["pvalues"].items()}
    if args.boot:
        payload["reject"].update({f"boot_{k[2:]}": v["pvalue"] <= a for k, v in payload["bootstrap"].items()})
    _emit(payload, args.out)
    return EXIT_OK


def _design_from_args(args):
    overrides = {}
    if args.reps is not None:
        overrides["replicates"] = args.reps
    if args.seed is not None:
        overrides["noise_seed"] = args.seed
    if getattr(args, "boot", None) is not None:
        overrides["bootstrap_B"] = args.boot or None
    if args.family is not None:
        overrides["family"] = args.family
    if args.alpha is not None:
        overrides["alphas"] = (args.alpha,)
    if getattr(args, "calibration", None) is not None:
        overrides["calibration_replicates"] = args.calibration
    design = load_design(args.config)
    return replace(design, **overrides) if overrides else design


def _manifest(args, design, wall):
    return {
        "command": args.command,
        "argv": sys.argv[1:],
        "design": design.to_dict(),
        "seeds": {"covariate_seed": design.covariate_seed, "noise_seed": design.noise_seed},
        "threads": args.threads,
        "versions": {
            "symreg": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_seconds": round(wall, 3),
    }


def _write_outputs(args, design, files, shown, wall):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8")
        (out / "manifest.json").write_text(
            json.dumps(_manifest(args, design, wall), indent=2) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(files[shown])


def cmd_simulate_size(args) -> int:
    design = _design_from_args(args)
    t0 = time.perf_counter()
    result = size_study(design, threads=args.threads)
    wall = time.perf_counter() - t0
    files = {
        "result.json": json.dumps(result.to_json(), indent=2, allow_nan=False) + "\n",
        "table.csv": table_report(result, "csv"),
        "table.txt": table_report(result, "text"),
    }
    _write_outputs(args, design, files, "table.txt", wall)
    return EXIT_OK


def cmd_simulate_power(args) -> int:
    design = _design_from_args(args)
    t0 = time.perf_counter()
    result = power_study(design, threads=args.threads)
    wall = time.perf_counter() - t0
    files = {
        "power.json": json.dumps(result.to_json(), indent=2, allow_nan=False) + "\n",
        "power.csv": result.to_csv(),
    }
    _write_outputs(args, design, files, "power.csv", wall)
    return EXIT_OK


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _level(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def _family(s):
    try:
        kernel(s)
    except ParameterError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return s


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symreg",
        description="Fit symmetric linear regressions and test coefficients with small-sample corrections.",
        epilog="Exit status: 0 success, 1 numerical failure, 2 usage or data error.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--response", required=True, help="response column")
        p.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
        p.add_argument("--no-intercept", action="store_true", help="omit the intercept column")
        p.add_argument("--family", type=_family, default="normal",
                       help="normal, cauchy, student-t:NU, logistic1, logistic2 or pexp:K")
        p.add_argument("--log", action="store_true", help="log-symmetric model for a positive response")
        p.add_argument("--out", help="write JSON here instead of stdout")

    p_fit = sub.add_parser("fit", help="maximum likelihood fit")
    data_args(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_test = sub.add_parser("test", help="hypothesis tests on coefficients")
    data_args(p_test)
    p_test.add_argument("--test", required=True, help="comma-separated tested columns")
    p_test.add_argument("--null", help="comma-separated null values (default 0)")
    p_test.add_argument("--alpha", type=_level, default=0.05, help="nominal level for the reject flags")
    p_test.add_argument("--boot", type=_positive_int, help="number of bootstrap samples")
    p_test.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p_test.add_argument("--threads", type=_positive_int, default=1, help="worker processes for the bootstrap")
    p_test.set_defaults(func=cmd_test)

    for name, func, what in (("simulate-size", cmd_simulate_size, "null rejection rates"),
                             ("simulate-power", cmd_simulate_power, "size-corrected power curves")):
        p = sub.add_parser(name, help=what)
        p.add_argument("--config", required=True, help="design file or bundled design name")
        p.add_argument("--family", type=_family)
        p.add_argument("--reps", type=_positive_int)
        p.add_argument("--seed", type=int, help="noise seed")
        p.add_argument("--alpha", type=_level, help="single nominal level")
        p.add_argument("--threads", type=_positive_int, default=1, help="worker processes")
        p.add_argument("--out", help="output directory (default: print to stdout)")
        if name == "simulate-size":
            p.add_argument("--boot", type=int, help="bootstrap samples per replicate (0 disables)")
        else:
            p.add_argument("--calibration", type=_positive_int, help="null replicates for critical values")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ConfigError, ParameterError, SingularDesignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, SimulationError, BootstrapFailure, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
