"""Audit reports: flat CSV rows plus a JSON mirror.

CSV columns (frozen):

    run_id      text
    functional  text    name of the measured quantity
    window_a    time    window start (empty if not a windowed quantity)
    window_b    time    window end
    N           freq    I-operator cutoff (empty if unused)
    s           -       regularity (empty if unused)
    value       -       the number; units follow from `functional`

Floats are written with repr(), the shortest string that round-trips, so a
report is byte-stable for identical inputs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

COLUMNS = ("run_id", "functional", "window_a", "window_b", "N", "s", "value")


@dataclass(frozen=True)
class Row:
    functional: str
    value: float
    window_a: Optional[float] = None
    window_b: Optional[float] = None
    N: Optional[float] = None
    s: Optional[float] = None


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def jsonable(obj: Any) -> Any:
    """Plain-JSON version of configs, numpy scalars, tuples and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


@dataclass
class AuditReport:
    run_id: str
    rows: List[Row] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, Any] = field(default_factory=dict)

    def add(self, functional: str, value: float, window=None, N=None, s=None) -> None:
        a, b = (None, None) if window is None else window
        self.rows.append(Row(functional, float(value), a, b, N, s))

    def extend(self, other: "AuditReport") -> None:
        self.rows.extend(other.rows)
        for k, v in other.summary.items():
            self.summary.setdefault(k, v)

    def select(self, functional: str, N=None) -> List[Row]:
        return [r for r in self.rows if r.functional == functional and (N is None or r.N == N)]

    def value(self, functional: str, N=None) -> float:
        rows = self.select(functional, N)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows named {functional!r} (N={N})")
        return rows[0].value

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([self.run_id, r.functional, _fmt(r.window_a), _fmt(r.window_b),
                        _fmt(r.N), _fmt(r.s), _fmt(r.value)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "run_id": self.run_id,
            "columns": list(COLUMNS),
            "rows": [[self.run_id, r.functional, r.window_a, r.window_b, r.N, r.s, r.value]
                     for r in self.rows],
            "summary": self.summary,
            "provenance": self.provenance,
        }
        return json.dumps(jsonable(doc), indent=2, sort_keys=True) + "\n"

    def write(self, directory, stem: Optional[str] = None, formats: Iterable[str] = ("csv", "json")) -> List[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.run_id
        out = []
        for fmt in formats:
            if fmt == "csv":
                text = self.to_csv()
            elif fmt == "json":
                text = self.to_json()
            else:
                raise ValueError(f"unknown report format {fmt!r}")
            path = directory / f"{stem}.{fmt}"
            path.write_text(text)
            out.append(path)
        return out


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
