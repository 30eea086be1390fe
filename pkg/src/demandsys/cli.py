"""Command-line entry point: fit, audit, synth and elasticity subcommands.

Every run writes a manifest with the resolved configuration and seed so
outputs can be reproduced byte-for-byte. Exit codes: 0 success, 2 data
or input errors, 3 non-convergence. Regularity failure is a reported
outcome, not an error exit.
"""

import argparse
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import elasticity as el
from . import estimation, models, regularity, synth
from .errors import DemandSysError, NonConvergence

log = logging.getLogger("demandsys")

CONFIG_ENV = "DEMANDSYS_CONFIG"

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NOCONV = 3

MODEL_CHOICES = ("rotterdam", "aids", "quaids", "all")


def _version():
    try:
        return metadata.version("demandsys")
    except metadata.PackageNotFoundError:
        return "unknown"


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)


def _error_json(out_dir, code, message):
    payload = {"error": type(message).__name__ if isinstance(message, Exception)
               else "Error", "message": str(message), "exit_code": code}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "error.json", payload)
    print(f"error: {payload['message']}", file=sys.stderr)
    return code


def _manifest(out_dir, args_ns, extra=None):
    payload = {"version": _version(),
               "command": args_ns.command,
               "config": {k: (str(v) if isinstance(v, Path) else v)
                          for k, v in vars(args_ns).items()
                          if k not in ("func",)}}
    if extra:
        payload.update(extra)
    _write_json(out_dir / "manifest.json", payload)


def _load_schema(path):
    if path is None:
        path = os.environ.get(CONFIG_ENV)
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _params_text(result, goods):
    spec, p = result.spec, result.params
    lines = [f"model: {spec.form}   n_obs: {result.n_obs}   "
             f"objective: {result.objective:.6g}   "
             f"converged: {result.converged}"]
    se_map = _free_param_se(result)
    n = spec.n_goods

    def fmt(name, value):
        se = se_map.get(name)
        tail = f" ({se:.6g})" if se is not None else ""
        return f"  {name:<10s} {value: .6g}{tail}"

    for i in range(n):
        lines.append(fmt(f"alpha_{i + 1}", p.alpha[i]))
    for i in range(n):
        for j in range(i, n):
            lines.append(fmt(f"gamma_{i + 1}{j + 1}", p.gamma[i, j]))
    if p.beta is not None:
        for i in range(n):
            lines.append(fmt(f"beta_{i + 1}", p.beta[i]))
    if p.lam is not None:
        for i in range(n):
            lines.append(fmt(f"lambda_{i + 1}", p.lam[i]))
    return "\n".join(lines) + "\n"


def _free_param_se(result):
    """Standard errors of the free entries, keyed by parameter name."""
    spec = result.spec
    n = spec.n_goods
    se = result.theta_se()
    names = [f"alpha_{i + 1}" for i in range(n - 1)]
    names += [f"gamma_{i + 1}{j + 1}" for i in range(n - 1)
              for j in range(i, n - 1)]
    if spec.form in (models.AIDS, models.QUAIDS):
        names += [f"beta_{i + 1}" for i in range(n - 1)]
    if spec.form == models.QUAIDS:
        names += [f"lambda_{i + 1}" for i in range(n - 1)]
    return dict(zip(names, se))


def cmd_fit(args):
    out = Path(args.out)
    try:
        schema = _load_schema(args.config)
        dataset = data_mod.load_panel_csv(
            args.input, schema=schema,
            allow_unbalanced=args.allow_unbalanced,
            price_is_index=args.price_is_index)
    except (DemandSysError, OSError, ValueError) as exc:
        return _error_json(out, EXIT_DATA, exc)

    forms = list(MODEL_CHOICES[:3]) if "all" in args.model \
        else list(dict.fromkeys(args.model))
    out.mkdir(parents=True, exist_ok=True)
    _manifest(out, args, {"n_units": len(dataset.units),
                          "n_periods": len(dataset.periods),
                          "goods": dataset.goods})

    reports = []
    any_failed = False
    for form in forms:
        spec = models.ModelSpec(form, dataset.n_goods, alpha0=args.alpha0)
        try:
            if form == models.ROTTERDAM:
                transform = data_mod.rotterdam_transform(dataset)
                result = estimation.estimate_rotterdam(transform)
                pt = el.EvaluationPoint.from_transform(transform)
            else:
                result = estimation.estimate_nonlinear(dataset, spec)
                pt = el.EvaluationPoint.from_dataset(dataset)
        except DemandSysError as exc:
            _error_json(out, EXIT_NOCONV, exc)
            any_failed = True
            continue
        if not result.converged:
            any_failed = True

        result.save(out / f"{form}_params.json")
        (out / f"{form}_params.txt").write_text(
            _params_text(result, dataset.goods), encoding="utf-8")

        table = el.table_with_se(spec, result, pt, goods=dataset.goods)
        table.save(out / f"{form}_elasticities.json")
        (out / f"{form}_elasticities.txt").write_text(table.to_text(),
                                                      encoding="utf-8")

        report = regularity.audit(result, pt, data=dataset,
                                  curvature_tol=args.curvature_tol)
        if args.per_observation and form != models.ROTTERDAM:
            report_extra = regularity.per_observation_negativity(
                result, dataset, args.curvature_tol)
            report.negativity["per_observation"] = report_extra
        report.save(out / f"{form}_regularity.json")
        reports.append(report)

    if reports:
        selection = regularity.select_model(reports)
        _write_json(out / "selection.json", selection)
        grid = regularity.report_grid_text(reports)
        (out / "regularity.txt").write_text(grid, encoding="utf-8")
        if args.format == "text":
            print(grid)
            print("selected:", selection["selected"])
        else:
            print(json.dumps(selection, indent=2))
    return EXIT_NOCONV if any_failed else EXIT_OK


def cmd_audit(args):
    out = Path(args.out) if args.out else None
    try:
        spec, params = models.load_params(args.params)
        with open(args.point, encoding="utf-8") as fh:
            pt = el.EvaluationPoint.from_dict(json.load(fh))
    except (DemandSysError, OSError, ValueError, KeyError) as exc:
        return _error_json(out, EXIT_DATA, exc)

    result = estimation.EstimationResult(
        spec=spec, theta=None, params=params, cov_theta=None, sigma=None,
        n_obs=0, iterations=0, converged=True, objective=None)
    report = regularity.audit(result, pt, data=None,
                              curvature_tol=args.curvature_tol,
                              model=spec.form)
    payload = report.to_dict()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _manifest(out, args)
        _write_json(out / f"{spec.form}_regularity.json", payload)
        (out / "regularity.txt").write_text(
            regularity.report_grid_text([report]), encoding="utf-8")
    if args.format == "text":
        print(regularity.report_grid_text([report]))
        ev = ", ".join(f"{v:.6g}" for v in report.negativity["eigenvalues"])
        print(f"eigenvalues: {ev}")
    else:
        print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_synth(args):
    try:
        if args.params:
            spec, params = models.load_params(args.params)
            if spec.form != args.model:
                raise DemandSysError(
                    f"--model {args.model} but parameter file is {spec.form}")
            cfg = synth.SynthConfig(
                spec=spec, true_params=params, n_units=args.units,
                n_periods=args.periods, share_noise_sd=args.noise,
                seed=args.seed)
        else:
            cfg = synth.demo_config(args.model, n_units=args.units,
                                    n_periods=args.periods,
                                    share_noise_sd=args.noise,
                                    seed=args.seed)
        dataset = synth.generate(cfg)
    except DemandSysError as exc:
        return _error_json(None, EXIT_DATA, exc)
    data_mod.save_panel_csv(dataset, args.out)
    print(f"wrote {args.out}: {len(dataset.units)} units x "
          f"{len(dataset.periods)} periods x {dataset.n_goods} goods")
    return EXIT_OK


def cmd_elasticity(args):
    try:
        spec, params = models.load_params(args.params)
        with open(args.point, encoding="utf-8") as fh:
            pt = el.EvaluationPoint.from_dict(json.load(fh))
    except (DemandSysError, OSError, ValueError, KeyError) as exc:
        return _error_json(None, EXIT_DATA, exc)
    table = el.elasticities(spec, params, pt)
    if args.format == "text":
        print(table.to_text())
    else:
        print(json.dumps(table.to_dict(), indent=2))
    if args.out:
        table.save(args.out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="demandsys",
        description="Demand-system estimation and regularity audit "
                    "(Rotterdam, AIDS, QUAIDS)")
    parser.add_argument("--verbose", action="store_true",
                        help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="estimate models from a panel CSV")
    p_fit.add_argument("input", help="panel CSV path")
    p_fit.add_argument("--model", action="append", choices=MODEL_CHOICES,
                       default=None,
                       help="model(s) to fit; repeatable; default all")
    p_fit.add_argument("--alpha0", type=float, default=0.0)
    p_fit.add_argument("--curvature-tol", type=float, default=0.0)
    p_fit.add_argument("--format", choices=("json", "text"), default="text")
    p_fit.add_argument("--out", default="demandsys_out")
    p_fit.add_argument("--config", default=None,
                       help=f"column-mapping config (default ${CONFIG_ENV})")
    p_fit.add_argument("--allow-unbalanced", action="store_true")
    p_fit.add_argument("--price-is-index", action="store_true",
                       help="chain previous-period=100 price indices to levels")
    p_fit.add_argument("--per-observation", action="store_true",
                       help="also run the curvature test at every observation")
    p_fit.set_defaults(func=cmd_fit)

    p_audit = sub.add_parser(
        "audit", help="regularity-check externally supplied parameters")
    p_audit.add_argument("params", help="parameter JSON path")
    p_audit.add_argument("point",
                         help="evaluation point JSON (wbar, pbar, ybar)")
    p_audit.add_argument("--curvature-tol", type=float, default=0.0)
    p_audit.add_argument("--format", choices=("json", "text"), default="text")
    p_audit.add_argument("--out", default=None)
    p_audit.set_defaults(func=cmd_audit)

    p_synth = sub.add_parser("synth", help="generate a synthetic panel CSV")
    p_synth.add_argument("--model", choices=MODEL_CHOICES[:3],
                         default="aids")
    p_synth.add_argument("--params", default=None,
                         help="true-parameter JSON; default demo values")
    p_synth.add_argument("--units", type=int, default=31)
    p_synth.add_argument("--periods", type=int, default=13)
    p_synth.add_argument("--noise", type=float, default=0.0,
                         help="share noise standard deviation")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", default="synthetic_panel.csv")
    p_synth.set_defaults(func=cmd_synth)

    p_el = sub.add_parser(
        "elasticity", help="elasticity table from parameters without refit")
    p_el.add_argument("params")
    p_el.add_argument("point")
    p_el.add_argument("--format", choices=("json", "text"), default="text")
    p_el.add_argument("--out", default=None)
    p_el.set_defaults(func=cmd_elasticity)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fit" and not args.model:
        args.model = ["all"]
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
