"""Self-describing CSV / JSON-lines output for curves and tables.

Files open with ``#``-prefixed header lines (``# key: <json>``) carrying the
metadata, followed by the data.  Floats are printed with 17 significant
digits so that a read-back reproduces every value exactly.
"""

from __future__ import annotations

import json
import os
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .montecarlo import CurvePoint, PerformanceCurve

__all__ = ["write_table", "read_table", "emit_curve", "read_curve", "jsonable", "format_complex"]

CURVE_COLUMNS = ("snr_db", "probability", "ci_low", "ci_high")


def format_complex(z):
    """Real part alone when the value is real, else a ``complex()``-parsable string like ``-0.5j``."""
    z = complex(z)
    if z.imag == 0:
        return z.real
    if z.real == 0:
        return f"{z.imag!r}j"
    return repr(z)[1:-1]


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers to JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return format_complex(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def _parse(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_table(path, columns: Sequence[str], rows: Sequence[Sequence], header: Dict, fmt: str = "csv"):
    """Write rows under a ``#`` metadata header, as CSV or JSON lines."""
    lines = [f"# {k}: {json.dumps(jsonable(v), sort_keys=True)}" for k, v in header.items()]
    if fmt == "csv":
        lines.append(",".join(columns))
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    elif fmt == "jsonl":
        for row in rows:
            body = ", ".join(
                f"{json.dumps(c)}: {json.dumps(v) if isinstance(v, str) else _fmt(v)}"
                for c, v in zip(columns, row)
            )
            lines.append("{" + body + "}")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def read_table(path) -> Tuple[Dict, List[str], List[list]]:
    """Inverse of :func:`write_table`; detects the format from the body."""
    header, body = {}, []
    with open(path) as fh:
        for line in fh.read().splitlines():
            if line.startswith("# "):
                key, _, val = line[2:].partition(": ")
                header[key] = json.loads(val)
            elif line:
                body.append(line)
    if body and body[0].startswith("{"):
        recs = [json.loads(b) for b in body]
        columns = list(recs[0]) if recs else []
        return header, columns, [[r[c] for c in columns] for r in recs]
    if not body:
        return header, list(header.get("columns", [])), []
    columns = body[0].split(",")
    return header, columns, [[_parse(t) for t in b.split(",")] for b in body[1:]]


def emit_curve(curve: PerformanceCurve, path, fmt: str = "csv", extra_header: Dict = None):
    header = {"source": curve.source, "detector": curve.detector, "columns": list(CURVE_COLUMNS),
              "metadata": curve.metadata}
    header.update(extra_header or {})
    rows = [(p.snr_db, p.probability, p.ci_low, p.ci_high) for p in curve.points]
    write_table(path, CURVE_COLUMNS, rows, header, fmt)


def read_curve(path) -> PerformanceCurve:
    header, columns, rows = read_table(path)
    idx = [columns.index(c) for c in CURVE_COLUMNS] if rows else []
    pts = [CurvePoint(*(float(row[i]) for i in idx)) for row in rows]
    return PerformanceCurve(pts, header["source"], header["detector"], header.get("metadata", {}))
