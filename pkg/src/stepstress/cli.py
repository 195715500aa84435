"""Command-line interface.

Subcommands: fit, metrics, test, tune, simulate, if-scan, datasets.
Exit codes: 0 success, 2 validation error, 3 non-convergence.
Numbers print with 4 significant digits; --json emits full precision.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .datasets import BUILTIN_DATASETS, builtin_dataset, load_dataset
from .estimation import (
    EstimationError,
    FitConfig,
    fit_mdpde,
    param_confidence_interval,
)
from .hypothesis import LinearHypothesis, wald_test, z_test
from .lifetime import estimate_mean_lifetime, estimate_quantile, estimate_reliability, metrics_report
from .model import ModelParams, TestPlan
from .robustness import if_divergence_scan
from .simulation import (
    ContaminationSpec,
    StudyConfig,
    StudyError,
    run_estimator_study,
    run_level_power_study,
)
from .tuning import TuningConfig, select_beta

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3


class CliError(Exception):
    """Validation failure surfaced as exit code 2."""


def _fmt(x, json_mode=False):
    if json_mode or isinstance(x, (bool, int)) or x is None:
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.4g}")
    return x


def _print_kv(pairs, json_mode):
    if json_mode:
        print(json.dumps(pairs))
    else:
        for key, value in pairs.items():
            if isinstance(value, float):
                print(f"{key} = {value:.4g}")
            else:
                print(f"{key} = {value}")


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_data(args):
    try:
        return load_dataset(args.data)
    except ValueError as e:
        raise CliError(str(e)) from None


def _fit_with_flags(dataset, args):
    """Shared fit step: fixed beta or 'auto' tuning selection."""
    if args.beta == "auto":
        tuning = TuningConfig(pilot_beta=getattr(args, "pilot", 0.5))
        result = select_beta(dataset.counts_array(), dataset.plan, tuning)
        return result.fit, result
    try:
        beta = float(args.beta)
    except ValueError:
        raise CliError(f"--beta must be a number or 'auto', got {args.beta!r}") from None
    if beta < 0:
        raise CliError("--beta must be >= 0")
    fit = fit_mdpde(dataset.counts_array(), dataset.plan, FitConfig(beta=beta))
    return fit, None


def _fit_payload(fit, level):
    ci_log = param_confidence_interval(fit, level=level, scale="log")
    return {
        **fit.to_dict(),
        "level": level,
        "ci_log_theta0": list(ci_log[0]),
        "ci_theta1": list(ci_log[1]),
    }


def cmd_fit(args) -> int:
    dataset = _load_data(args)
    fit, tuning = _fit_with_flags(dataset, args)
    if not fit.converged:
        print(f"fit did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    payload = _fit_payload(fit, args.level)
    if tuning is not None:
        payload["beta_star"] = tuning.beta_star
        payload["tuning_rounds"] = tuning.rounds
    if args.json:
        out = json.dumps(payload)
        _emit(out + "\n", args.out)
    else:
        shown = {k: _fmt(v) for k, v in payload.items() if k not in ("covariance",)}
        shown["ci_log_theta0"] = [_fmt(v) for v in payload["ci_log_theta0"]]
        shown["ci_theta1"] = [_fmt(v) for v in payload["ci_theta1"]]
        lines = "\n".join(f"{k} = {v}" for k, v in shown.items()) + "\n"
        _emit(lines, args.out)
    return EXIT_OK


def cmd_metrics(args) -> int:
    dataset = _load_data(args)
    fit, _ = _fit_with_flags(dataset, args)
    if not fit.converged:
        print(f"fit did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    stress = args.stress if args.stress is not None else dataset.plan.use_stress
    entries = []
    if args.mean:
        entries.append((estimate_mean_lifetime(fit, stress, args.level), stress, None))
    if args.reliability_at is not None:
        entries.append(
            (estimate_reliability(fit, stress, args.reliability_at, args.level), stress, args.reliability_at)
        )
    if args.quantile is not None:
        entries.append((estimate_quantile(fit, stress, args.quantile, args.level), stress, args.quantile))
    if not entries:
        raise CliError("choose at least one of --mean, --reliability-at, --quantile")
    report = metrics_report(entries)
    if args.json:
        _emit(json.dumps(report) + "\n", args.out)
    else:
        lines = []
        for row in report:
            lines.append(
                f"{row['quantity']} @ stress {_fmt(row['stress'])}"
                + (f" ({_fmt(row['time_or_alpha'])})" if row["time_or_alpha"] is not None else "")
                + f": {row['estimate']:.4g}  se {row['se']:.4g}"
                + f"  direct [{row['direct_ci'][0]:.4g}, {row['direct_ci'][1]:.4g}]"
                + f"  transformed [{row['transformed_ci'][0]:.4g}, {row['transformed_ci'][1]:.4g}]"
            )
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v != ""]
    except ValueError:
        raise CliError(f"could not parse {what}: {text!r}") from None


def cmd_test(args) -> int:
    dataset = _load_data(args)
    fit, _ = _fit_with_flags(dataset, args)
    if not fit.converged:
        print(f"fit did not converge: {fit.message}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    if args.M is not None:
        if args.D is None:
            raise CliError("--M needs --D")
        rows = [r for r in args.M.split(";") if r]
        M = [_parse_floats(r, "--M row") for r in rows]
        d = _parse_floats(args.D, "--D")
        try:
            report = wald_test(fit, M, d, alpha=args.alpha)
        except ValueError as e:
            raise CliError(str(e)) from None
    else:
        if args.m is None or args.d is None:
            raise CliError("provide --m and --d (or --M and --D)")
        m = _parse_floats(args.m, "--m")
        if len(m) != 2:
            raise CliError("--m needs exactly two components")
        try:
            report = z_test(fit, LinearHypothesis(m=(m[0], m[1]), d=args.d, alpha=args.alpha))
        except ValueError as e:
            raise CliError(str(e)) from None
    payload = report.to_dict()
    if args.json:
        _emit(json.dumps(payload) + "\n", args.out)
    else:
        flat = {k: _fmt(v) for k, v in payload.items() if k != "hypothesis"}
        flat["hypothesis"] = json.dumps(payload["hypothesis"])
        _emit("\n".join(f"{k} = {v}" for k, v in flat.items()) + "\n", args.out)
    return EXIT_OK


def cmd_tune(args) -> int:
    dataset = _load_data(args)
    grid = tuple(np.linspace(0.0, 1.0, args.grid_size))
    config = TuningConfig(
        pilot_beta=args.pilot, grid=grid, convergence_rate=args.rate, max_rounds=args.max_rounds
    )
    result = select_beta(dataset.counts_array(), dataset.plan, config)
    if not result.converged:
        print("tuning did not stabilize before max rounds", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    payload = {
        "beta_star": result.beta_star,
        "rounds": result.rounds,
        **_fit_payload(result.fit, args.level),
    }
    if args.json:
        _emit(json.dumps(payload) + "\n", args.out)
    else:
        _emit(
            "\n".join(
                f"{k} = {_fmt(v)}" for k, v in payload.items() if k not in ("covariance",)
            )
            + "\n",
            args.out,
        )
    if args.trace:
        lines = ["round,pilot_log_theta0,pilot_theta1,beta_star,mse_min"]
        lines += [",".join(str(v) for v in row) for row in result.trace]
        Path(args.trace).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _study_config_from_json(payload: dict, seed_override=None) -> tuple[StudyConfig, dict]:
    try:
        plan = TestPlan.from_dict(payload["plan"])
        truth = ModelParams(**payload["true_params"])
        betas = tuple(payload["betas"])
        cont = payload.get("contamination")
        specs: list[ContaminationSpec | None] = []
        if cont is None:
            specs.append(None)
        else:
            cell = cont["cell_index"]
            coord = cont.get("coordinate", "theta0")
            maker = (
                ContaminationSpec.scale_theta0 if coord == "theta0" else ContaminationSpec.scale_theta1
            )
            specs.extend(maker(truth, cell, float(r)) for r in cont["rates"])
        alt = payload.get("alt_params")
        config = StudyConfig(
            plan=plan,
            true_params=truth,
            betas=betas,
            contamination_grid=tuple(specs),
            replications=int(payload["replications"]),
            seed=int(seed_override if seed_override is not None else payload.get("seed", 0)),
            alt_params=ModelParams(**alt) if alt else None,
            sample_sizes=tuple(payload["sample_sizes"]) if payload.get("sample_sizes") else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CliError(f"bad study config: {e}") from None
    return config, payload


def cmd_simulate(args) -> int:
    try:
        payload = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read study config: {e}") from None
    config, payload = _study_config_from_json(payload, args.seed)
    study = payload.get("study", "rmse")
    try:
        if study == "rmse":
            result = run_estimator_study(config)
        elif study in ("level", "power"):
            hyp_payload = payload.get("hypothesis")
            if not hyp_payload:
                raise CliError("level/power studies need a 'hypothesis' entry")
            hyp = LinearHypothesis(
                m=tuple(hyp_payload["m"]), d=hyp_payload["d"], alpha=hyp_payload.get("alpha", 0.05)
            )
            result = run_level_power_study(config, hyp)
        else:
            raise CliError(f"unknown study kind {study!r}")
    except StudyError as e:
        print(f"study failed: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    _emit(result.to_csv(), args.out)
    return EXIT_OK


def cmd_if_scan(args) -> int:
    params = ModelParams(args.theta0, args.theta1)
    dataset = _load_data(args)
    lo, hi, num = args.grid
    if num < 2 or hi <= lo:
        raise CliError("--grid needs start < stop and at least 2 points")
    grid = np.geomspace(lo, hi, int(num)) if args.log_grid else np.linspace(lo, hi, int(num))
    try:
        curve = if_divergence_scan(
            params, dataset.plan, args.beta, axis=args.axis.replace("-", "_"), grid=grid
        )
    except ValueError as e:
        raise CliError(str(e)) from None
    lines = ["axis_value,norm_theta0_component,norm_theta1_component"]
    lines += [f"{a},{b},{c}" for a, b, c in curve]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_datasets(args) -> int:
    if args.dump:
        ds = builtin_dataset(args.dump)
        print(json.dumps(ds.to_dict(), indent=2))
        return EXIT_OK
    for name, ds in sorted(BUILTIN_DATASETS.items()):
        plan = ds.plan
        print(
            f"{name}: N={plan.n_units}, stresses {plan.stress_levels}, "
            f"{plan.L} inspections ending {plan.inspection_times[-1]}, "
            f"{ds.counts[-1]} survivors"
        )
    return EXIT_OK


def _add_common(p, with_beta=True):
    p.add_argument("--data", required=True, help="builtin dataset name or dataset JSON path")
    if with_beta:
        p.add_argument("--beta", default="0", help="DPD tuning parameter, or 'auto'")
        p.add_argument("--pilot", type=float, default=0.5, help="pilot beta for --beta auto")
    p.add_argument("--level", type=float, default=0.95, help="confidence level")
    p.add_argument("--json", action="store_true", help="emit full-precision JSON")
    p.add_argument("--out", default=None, help="write output to a file instead of stdout")
    p.add_argument("--seed", type=int, default=None, help="simulation seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepstress",
        description="Robust DPD inference for step-stress tests of one-shot devices",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the MDPDE (beta=0 is the MLE)")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("metrics", help="reliability, quantile and mean lifetime at use stress")
    _add_common(p)
    p.add_argument("--mean", action="store_true", help="mean lifetime")
    p.add_argument("--reliability-at", type=float, default=None, metavar="T")
    p.add_argument("--quantile", type=float, default=None, metavar="ALPHA")
    p.add_argument("--stress", type=float, default=None, help="stress level (default: use stress)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("test", help="Z-type or chi-square Wald test of a linear hypothesis")
    _add_common(p)
    p.add_argument("--m", default=None, help="two comma-separated coefficients")
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--M", default=None, help="matrix rows 'a,b;c,d'")
    p.add_argument("--D", default=None, help="comma-separated right-hand side")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("tune", help="data-driven choice of beta")
    _add_common(p, with_beta=False)
    p.add_argument("--pilot", type=float, default=0.5)
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--rate", type=float, default=1e-3, help="stopping rate epsilon")
    p.add_argument("--max-rounds", type=int, default=50)
    p.add_argument("--trace", default=None, help="write the per-round trace CSV here")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="run a Monte-Carlo study from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("if-scan", help="influence-function leverage scan as CSV")
    _add_common(p, with_beta=False)
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--theta1", type=float, required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--axis", choices=["inspection-time", "stress-level"], default="inspection-time")
    p.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "NUM"), required=True)
    p.add_argument("--log-grid", action="store_true", help="geometric grid spacing")
    p.set_defaults(func=cmd_if_scan)

    p = sub.add_parser("datasets", help="list or dump the builtin datasets")
    p.add_argument("--dump", default=None, help="print one dataset as JSON")
    p.set_defaults(func=cmd_datasets)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, EstimationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
