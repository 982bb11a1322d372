"""Report serialization: one CSV per table, or a single JSON object."""
from __future__ import annotations

import csv
import io
import json
import math
import os


def _cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def table_csv(columns, rows):
    """RFC 4180 text; header only when there are no rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def meta_rows(report):
    d = report.as_dict()
    rows = []
    for section in ("summary", "provenance"):
        for k, v in d[section].items():
            rows.append([section, k, v])
    for i, w in enumerate(d["warnings"]):
        rows.append(["warnings", str(i), w])
    for k, v in d["config"].items():
        rows.append(["config", k, ",".join(map(str, v)) if isinstance(v, list) else v])
    return rows


def to_json(report):
    return json.dumps(_json_value(report.as_dict()), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def render(report, fmt):
    """{filename: text} for the requested format."""
    if fmt == "json":
        return {f"{report.experiment}.json": to_json(report)}
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    files = {}
    for name, t in report.tables.items():
        files[f"{report.experiment}_{name}.csv"] = table_csv(t.columns, t.rows)
    files[f"{report.experiment}_meta.csv"] = table_csv(["section", "key", "value"], meta_rows(report))
    return files


def emit(report, fmt="json", out_dir="."):
    """Write the report files under ``out_dir``; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, text in render(report, fmt).items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths.append(path)
    return paths
