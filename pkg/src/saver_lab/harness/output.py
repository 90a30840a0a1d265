"""curves.csv / summary.json emission with byte-stable formatting."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

from .runner import REFERENCE, RepRecord, RunMetrics, aggregate, fit_slope, NonPositiveValue

CURVE_COLUMNS = ("strategy", "n", "rep", "mse", "violations", "final_budget")
FLOAT_FMT = "{:.12e}"


class IoError(OSError):
    pass


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return FLOAT_FMT.format(x)


def _json_num(x):
    if x is None:
        return None
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(FLOAT_FMT.format(x))
    return x


def curves_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in records:
        w.writerow([r.strategy, r.n, r.rep, _fmt(r.sq_error), r.violations, _fmt(r.final_budget)])
    return buf.getvalue()


def _slope(points):
    try:
        return fit_slope(points)
    except (NonPositiveValue, ValueError):
        return None


def summary_dict(metrics: RunMetrics) -> dict:
    per = {}
    for s in metrics.strategies:
        rows = []
        for n in metrics.budgets:
            c = metrics.cells[(s, n)]
            rows.append(
                {
                    "n": n,
                    "mse": _json_num(c.mse),
                    "mse_stderr": _json_num(c.mse_stderr),
                    "regret": _json_num(c.regret),
                    "violation_mean": _json_num(c.violation_mean),
                    "violation_max": c.violation_max,
                    "final_budget_quantiles": {k: _json_num(v) for k, v in c.budget_quantiles.items()},
                    "true_constraint_rate": _json_num(c.true_constraint_rate),
                }
            )
        entry = {"curve": rows, "mse_slope": _json_num(_slope(metrics.curve(s)))}
        if REFERENCE in metrics.strategies:
            entry["regret_slope"] = None if s == REFERENCE else _json_num(_slope(metrics.excess_curve(s)))
        per[s] = entry
    out = {
        "environment": metrics.config_label,
        "budgets": list(metrics.budgets),
        "repetitions": metrics.repetitions,
        "strategies": per,
        "complexity": None,
    }
    if metrics.complexity is not None:
        out["complexity"] = {k: _json_list(v) for k, v in metrics.complexity.to_dict().items()}
    return out


def _json_list(v):
    if isinstance(v, list):
        return [_json_list(x) for x in v]
    return _json_num(v)


def summary_text(metrics: RunMetrics) -> str:
    return json.dumps(summary_dict(metrics), sort_keys=True, indent=2) + "\n"


def write_outputs(metrics: RunMetrics, out_dir: str | os.PathLike) -> dict:
    """Write curves.csv and summary.json into ``out_dir``; returns the two paths."""
    out = Path(out_dir)
    paths = {"curves": out / "curves.csv", "summary": out / "summary.json"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths["curves"].write_text(curves_text(metrics.records))
        paths["summary"].write_text(summary_text(metrics))
    except OSError as exc:
        raise IoError(f"cannot write outputs to {out}: {exc}") from exc
    return paths


def read_curves(path: str | os.PathLike) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(CURVE_COLUMNS)}")
        return [
            RepRecord(
                strategy=row["strategy"],
                n=int(row["n"]),
                rep=int(row["rep"]),
                sq_error=float(row["mse"]),
                violations=int(row["violations"]),
                final_budget=float(row["final_budget"]),
                true_failures=0,
            )
            for row in reader
        ]


def metrics_from_curves(records) -> RunMetrics:
    """Rebuild aggregate metrics from curve rows (no complexity report)."""
    strategies = tuple(dict.fromkeys(r.strategy for r in records))
    budgets = tuple(sorted({r.n for r in records}))
    reps = {(r.strategy, r.n) for r in records}
    counts = {}
    for r in records:
        counts[(r.strategy, r.n)] = counts.get((r.strategy, r.n), 0) + 1
    if not records:
        return RunMetrics([], {}, (), (), 0)
    repetitions = max(counts.values())
    if len(set(counts.values())) != 1 or len(reps) != len(strategies) * len(budgets):
        raise ValueError("curves file has an uneven number of runs per (strategy, n)")
    cells = aggregate(records, strategies, budgets, repetitions)
    for c in cells.values():
        c.true_constraint_rate = math.nan  # not stored in the curves file
    return RunMetrics(records, cells, strategies, budgets, repetitions, config_label="report")
