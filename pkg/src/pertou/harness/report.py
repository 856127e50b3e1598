"""CSV reports with a fixed schema and exact float round-trip."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

HEADER = ["experiment", "param_json", "value", "ci_low", "ci_high", "seed"]


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    params: dict
    value: float
    ci_low: float
    ci_high: float
    seed: int

    @classmethod
    def with_se(cls, experiment, params, value, std_error, seed, z: float = 1.96):
        """Row whose interval is ``value -/+ z * std_error``."""
        value, std_error = float(value), float(std_error)
        return cls(experiment, params, value, value - z * std_error, value + z * std_error,
                   int(seed))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def param_json(params: dict) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(_jsonable(params), sort_keys=True, separators=(",", ":"))


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def render_csv(rows: Iterable[ReportRow]) -> str:
    rows = list(rows)
    if not rows:
        raise ReportError("refusing to write an empty report")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([r.experiment, param_json(r.params), _fmt(r.value), _fmt(r.ci_low),
                    _fmt(r.ci_high), str(int(r.seed))])
    return buf.getvalue()


def emit_report(rows: Iterable[ReportRow], path, format: str = "csv") -> Path:
    """Write ``rows`` to ``path``; returns the path."""
    if format != "csv":
        raise ReportError(f"unsupported report format {format!r}")
    text = render_csv(rows)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ReportError(f"cannot write report to {path}: {exc.strerror}") from None
    return path


def parse_report(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != HEADER:
        raise ReportError(f"unexpected report header {header}")
    rows = []
    for n, rec in enumerate(reader, start=2):
        if len(rec) != len(HEADER):
            raise ReportError(f"line {n}: expected {len(HEADER)} fields, got {len(rec)}")
        try:
            rows.append(ReportRow(rec[0], json.loads(rec[1]), float(rec[2]), float(rec[3]),
                                  float(rec[4]), int(rec[5])))
        except ValueError as exc:
            raise ReportError(f"line {n}: {exc}") from None
    return rows


def read_report(path) -> list:
    try:
        return parse_report(Path(path).read_text())
    except OSError as exc:
        raise ReportError(f"cannot read report {path}: {exc.strerror}") from None


def summarize(rows) -> str:
    """Short per-experiment text summary (row counts and pass flags)."""
    lines = []
    by_exp = {}
    for r in rows:
        by_exp.setdefault(r.experiment, []).append(r)
    for name, rs in by_exp.items():
        flags = [r.params.get("pass") for r in rs if "pass" in r.params]
        failed = sum(1 for f in flags if f is False)
        status = "" if not flags else f", {len(flags) - failed}/{len(flags)} checks pass"
        finite = [r.value for r in rs if math.isfinite(r.value)]
        span = f", values in [{min(finite):.6g}, {max(finite):.6g}]" if finite else ""
        lines.append(f"{name}: {len(rs)} rows{status}{span}")
    return "\n".join(lines)
