"""Command-line interface: ``scoredriven fit | forecast | simulate``.

Exit status is 0 on success, 1 for bad input (flags, data, model files,
unsupported combinations, failed fits) and 2 for internal errors.
"""

from __future__ import annotations

import argparse
import math
import sys
import traceback

import numpy as np

from scoredriven import __version__
from scoredriven.errors import ScoreDrivenError
from scoredriven.estimation import FitOptions, fit, fit_stats
from scoredriven.forecasting import DEFAULT_QUANTILES, forecast
from scoredriven.io import ModelFile, read_series, write_series, write_table
from scoredriven.links import parse_link
from scoredriven.model import ModelSpec, dynamic_initial_params, simulate_series

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; here that status means an internal error
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _scaling(text):
    try:
        d = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"scaling must be 0, 0.5 or 1, got {text!r}") from None
    if d not in (0.0, 0.5, 1.0):
        raise argparse.ArgumentTypeError(f"scaling must be 0, 0.5 or 1, got {text!r}")
    return d


def _init_mode(text):
    if text == "stationary":
        return ("stationary", None)
    if text.startswith("seasonal:"):
        try:
            period = int(text.split(":", 1)[1])
        except ValueError:
            period = 0
        if period >= 1:
            return ("seasonal", period)
    raise argparse.ArgumentTypeError(f"--init must be 'stationary' or 'seasonal:<period>', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scoredriven", description="Score-driven (GAS) time-series models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="estimate a model and write it to a JSON file")
    f.add_argument("--data", required=True, help="CSV file with one column of observations")
    f.add_argument("--dist", required=True, help="distribution name, e.g. normal, tdist-ls, lognormal")
    p = f.add_mutually_exclusive_group()
    p.add_argument("--p", type=int, help="score lags 1..p (default 1)")
    p.add_argument("--p-lags", type=_ints, help="explicit score lags, e.g. 1,12")
    q = f.add_mutually_exclusive_group()
    q.add_argument("--q", type=int, help="autoregressive lags 1..q (default 1)")
    q.add_argument("--q-lags", type=_ints, help="explicit autoregressive lags")
    f.add_argument("--scaling", type=_scaling, default=0.0, help="0, 0.5 or 1 (default 0)")
    f.add_argument("--time-varying", type=_ints, help="1-based indices of time-varying parameters (default all)")
    f.add_argument("--links", help="per-parameter links: id, log[:a], logit[:a:b], comma-separated")
    f.add_argument("--init", type=_init_mode, default=("stationary", None),
                   help="stationary (default) or seasonal:<period>")
    f.add_argument("--method", default="nm", choices=["nm", "lbfgs", "ipnewton"])
    f.add_argument("--starts", type=int, default=3, help="number of random starts (default 3)")
    f.add_argument("--initial-point", type=_floats, action="append",
                   help="explicit starting theta; repeat for several starts")
    f.add_argument("--lb", type=_floats, help="lower bounds on theta")
    f.add_argument("--ub", type=_floats, help="upper bounds on theta")
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--verbose", type=int, default=1, choices=[0, 1, 2, 3])
    f.add_argument("--out", required=True, help="model JSON to write")

    fc = sub.add_parser("forecast", help="simulate scenarios from a fitted model")
    fc.add_argument("--data", required=True)
    fc.add_argument("--model", required=True)
    fc.add_argument("--horizon", type=int, required=True)
    fc.add_argument("--scenarios", type=int, default=10000)
    fc.add_argument("--quantiles", type=_floats, default=list(DEFAULT_QUANTILES))
    fc.add_argument("--seed", type=int, default=None)
    fc.add_argument("--threads", type=int, default=None, help="worker threads (default SDM_THREADS or CPU count)")
    fc.add_argument("--out-prefix", required=True)

    s = sub.add_parser("simulate", help="draw a synthetic series from a model")
    s.add_argument("--model", required=True)
    s.add_argument("--length", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    return parser


def _spec_from_args(a) -> ModelSpec:
    links = None
    if a.links:
        links = [parse_link(t) for t in a.links.split(",")]
    p = a.p_lags if a.p_lags is not None else (a.p if a.p is not None else 1)
    q = a.q_lags if a.q_lags is not None else (a.q if a.q is not None else 1)
    return ModelSpec(a.dist, p=p, q=q, scaling=a.scaling, time_varying=a.time_varying, links=links)


def _clean(v):
    v = float(v)
    return None if not math.isfinite(v) else v


def cmd_fit(a, out=None) -> int:
    out = out or sys.stdout
    spec = _spec_from_args(a)
    y = read_series(a.data)
    mode, period = a.init
    init = dynamic_initial_params(y, spec, period) if mode == "seasonal" else None
    opts = FitOptions(
        method=a.method,
        n_starts=a.starts,
        initial_points=a.initial_point,
        lower=a.lb,
        upper=a.ub,
        tol=a.tol,
        seed=a.seed,
        verbosity=a.verbose,
    )
    res = fit(spec, y, opts, init)
    print(fit_stats(res), file=out)
    meta = {
        "loglik": res.loglik,
        "aic": res.aic,
        "bic": res.bic,
        "n_obs": res.n_obs,
        "n_params": res.n_params,
        "method": res.method,
        "seed": a.seed,
        "names": list(res.names),
        "std_errors": [_clean(v) for v in res.std_errors],
    }
    mf = ModelFile(spec, res.coefficients, mode, period, init, meta)
    mf.save(a.out)
    print(f"model written to {a.out}", file=out)
    return EXIT_OK


def cmd_forecast(a, out=None) -> int:
    out = out or sys.stdout
    mf = ModelFile.load(a.model)
    y = read_series(a.data)
    fc = forecast(
        y, mf.spec, mf.coefficients, a.horizon, a.scenarios,
        init=mf.initial_params(), seed=a.seed, quantiles=a.quantiles, threads=a.threads,
    )
    names = list(mf.spec.dist.param_names)
    write_table(f"{a.out_prefix}.parameters.csv", names, fc.parameter_forecast)
    write_table(
        f"{a.out_prefix}.scenarios.csv",
        [f"s{i + 1}" for i in range(fc.n_scenarios)],
        fc.observation_scenarios,
    )
    qs = list(fc.quantiles)
    write_table(
        f"{a.out_prefix}.quantiles.csv",
        ["point"] + [f"q{q:g}" for q in qs],
        np.column_stack([fc.observation_forecast] + [fc.quantiles[q] for q in qs]),
    )
    print(f"wrote {a.out_prefix}.parameters.csv, .scenarios.csv, .quantiles.csv", file=out)
    return EXIT_OK


def cmd_simulate(a, out=None) -> int:
    out = out or sys.stdout
    mf = ModelFile.load(a.model)
    if a.length < 1:
        raise UsageError("--length must be positive")
    y, _ = simulate_series(mf.spec, mf.coefficients, mf.initial_params(), a.length, np.random.default_rng(a.seed))
    write_series(a.out, y)
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "forecast": cmd_forecast, "simulate": cmd_simulate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (ScoreDrivenError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        print("internal error; please report it with the command line above", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
