"""Reading and writing labelled square matrices as CSV or JSON.

CSV: a header row of ids followed by one row of numbers per id.
JSON: ``{"ids": [...], "matrix": [[...], ...]}``.
Values are written with 17 significant digits, which round-trips doubles exactly.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError


def detect_format(path: str | Path) -> str:
    return "json" if str(path).lower().endswith(".json") else "csv"


def parse_matrix(text: str, fmt: str) -> tuple[tuple[str, ...], np.ndarray]:
    if fmt == "json":
        try:
            data = json.loads(text)
            ids = tuple(str(x) for x in data["ids"])
            rows = data["matrix"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"malformed matrix JSON: {exc}") from None
    else:
        reader = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
        if not reader:
            raise ValidationError("empty CSV matrix")
        ids = tuple(c.strip() for c in reader[0])
        rows = reader[1:]
    if len(set(ids)) != len(ids):
        raise ValidationError("matrix ids repeat")
    n = len(ids)
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ValidationError(f"matrix is not square over its {n} ids")
    try:
        values = np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(n, n)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"non-numeric matrix entry: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise ValidationError("matrix has non-finite entries")
    return ids, values


def read_matrix(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    path = Path(path)
    return parse_matrix(path.read_text(encoding="utf-8"), detect_format(path))


def format_matrix(ids, values: np.ndarray, fmt: str) -> str:
    ids = [str(x) for x in ids]
    if fmt == "json":
        rows = ",\n    ".join("[" + ", ".join(f"{v:.17g}" for v in row) + "]" for row in values)
        return '{\n  "ids": ' + json.dumps(ids) + ',\n  "matrix": [\n    ' + rows + "\n  ]\n}\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ids)
    for row in values:
        writer.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()


def write_matrix(path: str | Path, ids, values: np.ndarray, fmt: str | None = None) -> None:
    path = Path(path)
    path.write_text(format_matrix(ids, values, fmt or detect_format(path)), encoding="utf-8")
