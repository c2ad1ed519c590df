"""Command line entry point: ``mcvar {fit,simulate,report}``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .estimate import FitOptions, fit_ls, fit_multiclass, fit_singleclass
from .io import export_fit, load_fit, load_panel_csv, read_config, write_study
from .jgl import AdmmOptions
from .panel import PanelSpec
from .reports import cluster_report, network_export, parse_subset, similarity_matrix, subset_positions
from .simulation import SimulationDesign, StudyOptions, run_study
from .spg import SpgOptions
from .tuning import RegularizationGrid

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# flags of `fit` that may also come from --config
FIT_KEYS = ("input", "order", "out", "estimator", "lambda1", "lambda2", "gamma1", "gamma2",
            "grid-size", "mu", "spg-max-iter", "spg-tol", "rho", "logdet-weight", "max-outer", "scale")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _scale(text: str) -> tuple[int, int, int]:
    try:
        K, J, T = (int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--scale expects K,J,T, got {text!r}") from None
    return K, J, T


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcvar", description="Sparse multi-class VAR estimation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="estimate a multi-class VAR from a panel CSV")
    f.add_argument("--input")
    f.add_argument("--order", type=int)
    f.add_argument("--config")
    f.add_argument("--out")
    f.add_argument("--estimator", choices=["multi", "single", "ls"])
    for name in ("lambda1", "lambda2", "gamma1", "gamma2"):
        f.add_argument(f"--{name}", help="comma-separated candidate values")
    f.add_argument("--grid-size", type=int)
    f.add_argument("--mu", type=float)
    f.add_argument("--spg-max-iter", type=int)
    f.add_argument("--spg-tol", type=float)
    f.add_argument("--rho", type=float)
    f.add_argument("--logdet-weight", choices=["series", "likelihood"])
    f.add_argument("--max-outer", type=int)
    f.add_argument("--scale", choices=["yes", "no"])

    s = sub.add_parser("simulate", help="run the Monte Carlo study for one design")
    s.add_argument("--design", required=True, choices=["varying-beta", "varying-sigma", "varying-both"])
    s.add_argument("--runs", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--scale", help="K,J,T (default 15,10,100)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--estimators", default="ls,single,multi")
    s.add_argument("--out", required=True)

    r = sub.add_parser("report", help="export clusters, networks or similarity matrices from a fit file")
    r.add_argument("kind", choices=["clusters", "network", "similarity"])
    r.add_argument("--fit", required=True)
    r.add_argument("--tau", type=float, default=1e-4)
    r.add_argument("--subset", help="e.g. 'lag=1;sources=price1,price2;targets=sales1'")
    r.add_argument("--out", required=True)
    return parser


def _fit_settings(args) -> dict:
    settings: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        cfg = read_config(path)
        unknown = sorted(set(cfg) - set(FIT_KEYS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        settings.update(cfg)
    for key in FIT_KEYS:
        val = getattr(args, key.replace("-", "_"))
        if val is not None:
            settings[key] = val
    for key in ("input", "order", "out"):
        if key not in settings:
            raise UsageError(f"fit: --{key} is required (flag or config)")
    return settings


def _cmd_fit(args) -> int:
    st = _fit_settings(args)
    try:
        order = int(st["order"])
    except ValueError:
        raise UsageError(f"--order must be an integer, got {st['order']!r}") from None
    src = Path(st["input"])
    if not src.is_file():
        raise UsageError(f"input file not found: {src}")
    spg = SpgOptions()
    if "mu" in st:
        spg = replace(spg, mu=float(st["mu"]))
    if "spg-max-iter" in st:
        spg = replace(spg, max_iter=int(st["spg-max-iter"]))
    if "spg-tol" in st:
        spg = replace(spg, tol=float(st["spg-tol"]))
    admm = AdmmOptions(rho=float(st["rho"])) if "rho" in st else AdmmOptions()
    options = FitOptions(
        order=order, spg=spg, admm=admm,
        logdet_weight=st.get("logdet-weight", "series"),
        max_outer=int(st.get("max-outer", 20)),
        scale=str(st.get("scale", "no")).lower() in ("yes", "true", "1"),
    )
    grid = RegularizationGrid(
        **{k: (_floats(str(st[c])) if c in st else None)
           for k, c in (("lam1", "lambda1"), ("lam2", "lambda2"), ("gamma1", "gamma1"), ("gamma2", "gamma2"))},
        n_default=int(st.get("grid-size", 10)),
    )
    panel = load_panel_csv(src)
    estimator = st.get("estimator", "multi")
    if estimator == "ls":
        fit = fit_ls(panel, order, options)
    elif estimator == "single":
        fit = fit_singleclass(panel, grid, options)
    else:
        fit = fit_multiclass(panel, grid, options)
    export_fit(fit, st["out"])
    print(f"fit written to {st['out']} (lambda1={fit.lam1:.6g}, lambda2={fit.lam2:.6g}, "
          f"gamma1={fit.gamma1:.6g}, gamma2={fit.gamma2:.6g}, outer iterations={fit.outer_iterations})")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    K, J, T = _scale(args.scale) if args.scale else (15, 10, 100)
    try:
        design = SimulationDesign(args.design, PanelSpec(K, J, T, 1))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    estimators = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    options = StudyOptions(estimators=estimators, workers=max(1, args.workers))
    log = logging.getLogger("mcvar.simulate")

    def progress(rec):
        log.info("run %d/%d done: %s", rec.run + 1, args.runs,
                 ", ".join(f"{n}={v:.4f}" for n, v in rec.maee.items()) or "failed")

    result = run_study(design, args.runs, args.seed, options, progress)
    runs_path, summary_path = write_study(result, args.out)
    print(f"wrote {runs_path} and {summary_path}")
    for name, v in result.mean_maee.items():
        print(f"  MAEE {name:>6}: {v:.4f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    if not Path(args.fit).is_file():
        raise UsageError(f"fit file not found: {args.fit}")
    fit = load_fit(args.fit)
    beta = fit.beta
    try:
        lag, sources, targets = parse_subset(args.subset, fit.series_names, beta.P)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    if args.kind == "clusters":
        import json

        rep = cluster_report(beta, args.tau, subset_positions(lag, sources, targets))
        out.write_text(json.dumps(rep.to_dict(fit.series_names, fit.class_names), indent=1) + "\n", encoding="utf-8")
    elif args.kind == "network":
        net = network_export(beta, lag, sources, targets, fit.series_names, fit.class_names)
        out.write_text(net.to_dot(), encoding="utf-8")
    else:
        sim = similarity_matrix(beta, subset_positions(lag, sources, targets), fit.class_names)
        out.write_text(sim.to_csv(), encoding="utf-8")
        if sim.empty_rows:
            names = [fit.class_names[k] for k in sim.empty_rows]
            print(f"note: classes with no nonzero effect in the subset: {', '.join(names)}", file=sys.stderr)
    print(f"{args.kind} report written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        handler = {"fit": _cmd_fit, "simulate": _cmd_simulate, "report": _cmd_report}[args.command]
        return handler(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"mcvar: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
