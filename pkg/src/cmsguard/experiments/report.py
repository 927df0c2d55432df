"""
Deterministic report files.

Tables are written with a fixed column order and ``repr`` float formatting,
so the same configuration always produces the same bytes. Wall-clock
timings go to a separate ``timings.json``.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .pipeline import RunReport

__all__ = ["REPORT_SCHEMA", "emit_report", "read_report", "report_tables"]

REPORT_SCHEMA = "cmsguard.report/1"

CURVE_COLUMNS = ["sweep_value", "method", "freq_hz", "relative_error"]
TRANSLATION_COLUMNS = ["sweep_value", "grid_points", "feasible_points", "certificate_passed",
                       "min_certificate_eig", "max_rounds"]


def _row_columns(component_ids):
    cols = ["sweep_parameter", "sweep_value", "method", "kind", "r_total"]
    for cid in component_ids:
        cols += [f"r_{cid}", f"n_bar_{cid}", f"selected_{cid}", f"iterations_{cid}",
                 f"frf_evals_{cid}", f"counter_ok_{cid}"]
    cols += ["component_satisfied", "assembly_satisfied", "max_relative_error",
             "max_weighted_error", "error"]
    return cols


def report_tables(report: RunReport):
    """``{table name: (columns, rows)}`` for the deterministic part of a report."""
    return {
        "summary": (_row_columns(report.component_ids), report.rows),
        "curves": (CURVE_COLUMNS, report.curves),
        "translation": (TRANSLATION_COLUMNS, report.translation),
    }


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TEXT_COLUMNS = ("sweep_parameter", "method", "kind", "error")


def _parse(text, column):
    if column in _TEXT_COLUMNS or column.startswith("selected_"):
        return text
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _meta(report: RunReport):
    return {
        "schema": REPORT_SCHEMA,
        "config_name": report.config_name,
        "config_hash": report.config_hash,
        "sweep_parameter": report.sweep_parameter,
        "component_ids": list(report.component_ids),
        "guarantees_verified": report.guarantees_verified,
    }


def emit_report(report: RunReport, fmt="csv", out_dir="."):
    """
    Write the report to `out_dir`.

    ``csv`` writes ``summary.csv``, ``curves.csv``, ``translation.csv`` and
    ``meta.json``; ``json`` writes a single ``report.json``. Both also write
    ``timings.json``. Returns the list of written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    tables = report_tables(report)
    if fmt == "csv":
        for name, (cols, rows) in tables.items():
            buf = io.StringIO()
            wr = csv.writer(buf, lineterminator="\n")
            wr.writerow(cols)
            for r in rows:
                wr.writerow([_cell(r.get(c)) for c in cols])
            p = out / f"{name}.csv"
            p.write_text(buf.getvalue())
            written.append(p)
        p = out / "meta.json"
        p.write_text(json.dumps(_meta(report), sort_keys=True, indent=1) + "\n")
        written.append(p)
    elif fmt == "json":
        doc = _meta(report)
        for name, (cols, rows) in tables.items():
            doc[name] = {"columns": cols, "rows": [[r.get(c) for c in cols] for r in rows]}
        p = out / "report.json"
        p.write_text(json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n")
        written.append(p)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    p = out / "timings.json"
    p.write_text(json.dumps(report.timings, sort_keys=True, indent=1) + "\n")
    written.append(p)
    return written


def read_report(out_dir, fmt="csv"):
    """
    Read tables written by :func:`emit_report`.

    Returns ``(meta, {table name: list of row dicts})``.
    """
    out = Path(out_dir)
    if fmt == "csv":
        meta = json.loads((out / "meta.json").read_text())
        tables = {}
        for name in ("summary", "curves", "translation"):
            with open(out / f"{name}.csv", newline="") as fh:
                rd = csv.reader(fh)
                cols = next(rd)
                tables[name] = [{c: _parse(v, c) for c, v in zip(cols, row)} for row in rd]
        return meta, tables
    doc = json.loads((out / "report.json").read_text())
    tables = {}
    for name in ("summary", "curves", "translation"):
        t = doc.pop(name)
        tables[name] = [dict(zip(t["columns"], row)) for row in t["rows"]]
    return doc, tables
