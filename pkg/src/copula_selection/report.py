"""Deterministic JSON / CSV report emission.

Floats are written at 6 significant digits, keys keep insertion order, and
coefficient tables carry the usual significance stars
(* p<0.10, ** p<0.05, *** p<0.01, two-sided normal).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy import stats

SIG_DIGITS = 6
STAR_FOOTNOTE = "* p<0.10, ** p<0.05, *** p<0.01"


def round_sig(x: float, digits: int = SIG_DIGITS) -> float:
    if not math.isfinite(x) or x == 0.0:
        return float(x)
    return float(f"{x:.{digits}g}")


def fmt(x) -> str:
    """Six-significant-digit text form used in CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.{SIG_DIGITS}g}"
    return "" if x is None else str(x)


def stars(p: float) -> str:
    if not math.isfinite(p):
        return ""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.10:
        return "*"
    return ""


def stars_from_z(z: float) -> str:
    return stars(float(2.0 * stats.norm.sf(abs(z))))


def coefficient_rows(names, coef, se) -> list[dict]:
    """Table rows: name, coefficient, SE, z, p and stars."""
    rows = []
    for name, b, s in zip(names, coef, se):
        b, s = float(b), float(s)
        z = b / s if s > 0 else float("nan")
        p = float(2.0 * stats.norm.sf(abs(z))) if s > 0 else float("nan")
        rows.append({"name": name, "coef": b, "se": s, "z": z, "p": p, "stars": stars(p)})
    return rows


def fit_rows(fit) -> list[dict]:
    """Rows for a propensity.FitResult."""
    return coefficient_rows(fit.names, fit.coefficients, fit.standard_errors)


def clean(obj):
    """Convert numpy scalars/arrays to plain types and round floats."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = round_sig(float(obj))
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def flatten(obj, prefix: str = "") -> list[tuple[str, object]]:
    """Dotted key paths; list items use ``[i]``."""
    out = []
    if isinstance(obj, dict):
        for k, v in obj.items():
            out += flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            out += flatten(v, f"{prefix}[{i}]")
    else:
        out.append((prefix, obj))
    return out


def write_json(results: dict, path) -> Path:
    path = Path(path)
    text = json.dumps(clean(results), indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def write_csv(results: dict, path) -> Path:
    """Flat two-column ``field,value`` table."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["field", "value"])
        for key, val in flatten(results):
            w.writerow([key, fmt(val)])
    return path


def write_table_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    cols = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([fmt(row[c]) for c in cols])
    return path


def emit_report(results: dict, out_dir, stem: str, formats=("json",)) -> list[Path]:
    """Write ``<stem>.json`` and/or ``<stem>.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for f in formats:
        if f == "json":
            written.append(write_json(results, out_dir / f"{stem}.json"))
        elif f == "csv":
            written.append(write_csv(results, out_dir / f"{stem}.csv"))
        else:
            raise ValueError(f"unknown report format {f!r}")
    return written


def render_table(rows: list[dict], title: str = "") -> str:
    """Plain-text coefficient table (coef with stars, SE in parentheses)."""
    width = max([len(r["name"]) for r in rows] + [8])
    lines = [title] if title else []
    for r in rows:
        lines.append(f"{r['name']:<{width}}  {fmt(r['coef']) + r['stars']:>14}  ({fmt(r['se'])})")
    lines.append(STAR_FOOTNOTE)
    return "\n".join(lines)
