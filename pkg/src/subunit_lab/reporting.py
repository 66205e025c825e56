"""Report persistence, schema validation, CSV export, and report diffing."""

import csv
import importlib.resources as resources
import json
import math

import jsonschema

from .errors import SchemaMismatchError

SCHEMA_VERSION = "1"


def load_schema():
    ref = resources.files("subunit_lab").joinpath("schemas/report.schema.json")
    return json.loads(ref.read_text())


def validate_report(report):
    jsonschema.validate(report, load_schema())


def write_report(report, path):
    validate_report(report)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_report(path):
    with open(path) as fh:
        return json.load(fh)


def json_safe(x):
    """Recursively replace non-finite floats (JSON has no inf/nan)."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {k: json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    if hasattr(x, "item"):
        return json_safe(x.item())
    return x


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _walk_constants(report):
    out = {}
    for ball_id, ball in sorted(report.get("balls", {}).items()):
        for name, value in sorted(ball.get("constants", {}).items()):
            if isinstance(value, (int, float)):
                out[f"{ball_id}.{name}"] = float(value)
    for name, value in sorted(report.get("solver", {}).items()):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            out[f"solver.{name}"] = float(value)
    return out


def compare(report_a, report_b, budgets=None):
    """Tabulate constant drift between two runs.

    Returns (rows, flagged) where rows are (key, a, b, drift, budget, ok)
    and drift = |a - b| / max(|a|, |b|).  Keys present in only one report
    are skipped (refinement pairs may differ in resolvable bands).
    """
    if report_a.get("schema_version") != report_b.get("schema_version"):
        raise SchemaMismatchError(
            f"schema versions differ: {report_a.get('schema_version')} vs "
            f"{report_b.get('schema_version')}")
    budgets = budgets or report_a.get("budgets") or {"default": 0.30}
    default = float(budgets.get("default", 0.30))
    ca, cb = _walk_constants(report_a), _walk_constants(report_b)
    rows, flagged = [], []
    for key in sorted(set(ca) & set(cb)):
        a, b = ca[key], cb[key]
        scale = max(abs(a), abs(b))
        drift = 0.0 if scale == 0 else abs(a - b) / scale
        budget = float(budgets.get(key, default))
        ok = drift <= budget
        rows.append((key, a, b, drift, budget, ok))
        if not ok:
            flagged.append(key)
    return rows, flagged


def format_diff(rows, flagged):
    if not rows:
        return "no shared constants\n"
    lines = [f"{'constant':44s} {'a':>12s} {'b':>12s} {'drift':>8s}  ok"]
    for key, a, b, drift, budget, ok in rows:
        lines.append(f"{key:44s} {a:12.5g} {b:12.5g} {drift:8.2%}  "
                     f"{'yes' if ok else 'NO'}")
    lines.append(f"{len(flagged)} of {len(rows)} constants over budget")
    return "\n".join(lines) + "\n"
