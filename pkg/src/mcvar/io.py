"""Panel CSV files, fit files and flat key-value config files."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .estimate import FitResult
from .panel import CoefficientSet, MultiClassPanel, PrecisionSet

FIT_FORMAT = "mcvar-fit"
FIT_VERSION = 1


class PanelFormatError(ValueError):
    pass


class FitFormatError(ValueError):
    pass


def load_panel_csv(path) -> MultiClassPanel:
    """Read a ``class,time,<series...>`` file into a balanced panel.

    Classes keep their order of first appearance; rows within a class may be
    in any order but the integer time index must be gap-free and identical
    across classes.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PanelFormatError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "class" or header[1] != "time":
            raise PanelFormatError(f"{path}: header must be 'class,time,<series1>,...', got {header!r}")
        series = header[2:]
        if len(set(series)) != len(series):
            raise PanelFormatError(f"{path}: duplicate series names in header")
        rows: dict[str, dict[int, list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise PanelFormatError(f"{path}:{lineno}: expected {len(header)} columns, found {len(row)}")
            cls = row[0].strip()
            try:
                t = int(row[1])
            except ValueError:
                raise PanelFormatError(f"{path}:{lineno}: column 'time' is not an integer: {row[1]!r}") from None
            values = []
            for col, cell in zip(series, row[2:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise PanelFormatError(
                        f"{path}:{lineno}: column {col!r} is not numeric: {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise PanelFormatError(f"{path}:{lineno}: column {col!r} is not finite: {cell!r}")
                values.append(v)
            per_class = rows.setdefault(cls, {})
            if t in per_class:
                raise PanelFormatError(f"{path}:{lineno}: duplicate row for class {cls!r}, time {t}")
            per_class[t] = values
    if not rows:
        raise PanelFormatError(f"{path}: no data rows")

    all_times = sorted(set().union(*(r.keys() for r in rows.values())))
    expected = list(range(all_times[0], all_times[-1] + 1))
    for cls, per_class in rows.items():
        missing = sorted(set(expected) - set(per_class))
        if missing:
            raise PanelFormatError(f"{path}: class {cls!r} is missing time {missing[0]}"
                                   + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    data = np.array([[rows[c][t] for t in expected] for c in rows])
    return MultiClassPanel(data, series, list(rows))


def write_panel_csv(panel: MultiClassPanel, path, times=None):
    times = list(range(1, panel.T + 1)) if times is None else list(times)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "time", *panel.series_names])
        for k, cname in enumerate(panel.class_names):
            for t, row in zip(times, panel.data[k]):
                w.writerow([cname, t, *(repr(float(v)) for v in row)])


def fit_to_dict(fit: FitResult) -> dict:
    return {
        "format": FIT_FORMAT,
        "version": FIT_VERSION,
        "shape": {"K": fit.beta.K, "P": fit.beta.P, "J": fit.beta.J},
        "series_names": list(fit.series_names),
        "class_names": list(fit.class_names),
        "selected": {"lambda1": fit.lam1, "lambda2": fit.lam2, "gamma1": fit.gamma1, "gamma2": fit.gamma2},
        "objective_trace": [float(v) for v in fit.objective_trace],
        "outer_iterations": int(fit.outer_iterations),
        "converged": bool(fit.converged),
        "flags": list(fit.flags),
        "beta": fit.beta.coef.tolist(),
        "omega": fit.omega.omega.tolist(),
        "means": None if fit.means is None else np.asarray(fit.means).tolist(),
    }


def fit_from_dict(doc: dict) -> FitResult:
    if not isinstance(doc, dict) or doc.get("format") != FIT_FORMAT:
        raise FitFormatError("not a fit file (missing or wrong 'format' field)")
    if doc.get("version") != FIT_VERSION:
        raise FitFormatError(f"unsupported fit file version {doc.get('version')!r}; expected {FIT_VERSION}")
    try:
        shape = doc["shape"]
        K, P, J = int(shape["K"]), int(shape["P"]), int(shape["J"])
        beta = np.array(doc["beta"], dtype=float)
        omega = np.array(doc["omega"], dtype=float)
        if beta.shape != (K, P, J, J) or omega.shape != (K, J, J):
            raise FitFormatError(f"array shapes {beta.shape}, {omega.shape} do not match K={K}, P={P}, J={J}")
        sel = doc["selected"]
        means = doc.get("means")
        return FitResult(
            beta=CoefficientSet(beta),
            omega=PrecisionSet(omega),
            lam1=float(sel["lambda1"]),
            lam2=float(sel["lambda2"]),
            gamma1=float(sel["gamma1"]),
            gamma2=float(sel["gamma2"]),
            objective_trace=[float(v) for v in doc["objective_trace"]],
            outer_iterations=int(doc["outer_iterations"]),
            converged=bool(doc["converged"]),
            series_names=[str(s) for s in doc["series_names"]],
            class_names=[str(s) for s in doc["class_names"]],
            means=None if means is None else np.array(means, dtype=float),
            flags=[str(f) for f in doc.get("flags", [])],
        )
    except FitFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FitFormatError(f"malformed fit file: {exc}") from exc


def export_fit(fit: FitResult, path):
    text = json.dumps(fit_to_dict(fit), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_fit(path) -> FitResult:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FitFormatError(f"{path}: not a fit file: {exc}") from exc
    return fit_from_dict(doc)


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys mirror CLI flags."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-")] = val
    return out


def write_study(result, outdir) -> tuple[Path, Path]:
    """Write ``runs.csv`` (one row per run) and ``summary.json`` (aggregates).

    Contains no timestamps or host details so equal studies give equal bytes.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = list(result.estimators)
    runs_path = outdir / "runs.csv"
    with runs_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "seed_entropy", *(f"maee_{n}" for n in names), "excluded", "errors"])
        for rec in result.runs:
            w.writerow([
                rec.run,
                rec.seed_entropy,
                *(repr(rec.maee[n]) if n in rec.maee else "" for n in names),
                int(not rec.ok),
                "; ".join(f"{k}: {v}" for k, v in sorted(rec.errors.items())),
            ])
    spec = result.design.spec
    summary = {
        "design": result.design.variant.value,
        "K": spec.K, "J": spec.J, "T": spec.T, "P": spec.P,
        "runs": len(result.runs),
        "master_seed": result.master_seed,
        "excluded_runs": result.excluded,
        "mean_maee": result.mean_maee,
        "paired_ttest_pvalues": result.pvalues(),
        "selected": {
            str(rec.run): {n: list(v) for n, v in rec.selected.items()} for rec in result.runs
        },
    }
    summary_path = outdir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    return runs_path, summary_path
