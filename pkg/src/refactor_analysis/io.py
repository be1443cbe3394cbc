"""CSV ingestion and report serialization.

Reports are JSON documents with a ``schema_version`` field::

    {
      "schema_version": "1.0",
      "dataset": {"n": ..., "p": ..., "missing_rate": ..., ...},
      "config": {...},                  # echo of the run configuration
      "panels": [{"values": {...}, "missing": {...}, "provenance": {...}}, ...],
      "tables": {"name": [{...}, ...]}, # e.g. rankings or simulation results
      "timestamps": {"created": null}
    }

``timestamps.created`` is filled only when ``SOURCE_DATE_EPOCH`` is set, so
reports from identical inputs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ResponseMatrix, ValidationError
from .metrics import MetricPanel

SCHEMA_VERSION = "1.0"
FORMATS = ("wide_csv", "long_csv")
REPORT_FORMATS = ("json", "csv_long")


class DataFormatError(ValidationError):
    """File contents do not match the declared format."""


def _parse_cell(tok: str, missing_token: str, where: str):
    t = tok.strip()
    if t == missing_token or (t == "" and missing_token == ""):
        return None
    try:
        v = float(t)
    except ValueError:
        raise DataFormatError(f"non-numeric value {tok!r} at {where}") from None
    if v not in (0.0, 1.0):
        raise DataFormatError(f"non-binary value {tok!r} at {where}")
    return int(v)


def _is_data_row(cells, missing_token) -> bool:
    """True when every cell is 0, 1 or the missing token."""
    for c in cells:
        t = c.strip()
        if t == missing_token:
            continue
        try:
            if float(t) not in (0.0, 1.0):
                return False
        except ValueError:
            return False
    return True


def load_wide(path, missing_token: str = "NA", id_column: Optional[str] = None,
              header: Optional[bool] = None) -> ResponseMatrix:
    """Read a rectangular 0/1 CSV (rows are respondents, columns items).

    Parameters
    ----------
    missing_token : str
        Cells equal to this token are masked.
    id_column : str, optional
        Header name of a column holding row labels.
    header : bool, optional
        Whether the first line holds column labels. By default a first
        line made only of 0, 1 and ``missing_token`` is treated as data.

    Raises
    ------
    DataFormatError
        On ragged rows or values other than 0, 1 and ``missing_token``; the
        message names the offending row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [r for r in csv.reader(fh) if r]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    if header is None:
        header = id_column is not None or not _is_data_row(lines[0], missing_token)
    col_labels = list(lines[0]) if header else [str(j) for j in range(len(lines[0]))]
    body = lines[1:] if header else lines
    width = len(col_labels)
    id_idx = None
    if id_column is not None:
        if id_column not in col_labels:
            raise DataFormatError(f"id column {id_column!r} not in header")
        id_idx = col_labels.index(id_column)
    row_labels, vals, mask = [], [], []
    for r, cells in enumerate(body):
        lineno = r + (2 if header else 1)
        if len(cells) != width:
            raise DataFormatError(f"ragged row at line {lineno}: {len(cells)} fields, expected {width}")
        row_labels.append(cells[id_idx] if id_idx is not None else str(r))
        rv, rm = [], []
        for j, tok in enumerate(cells):
            if j == id_idx:
                continue
            v = _parse_cell(tok, missing_token, f"row {r}, column {col_labels[j]!r} (line {lineno})")
            rv.append(0 if v is None else v)
            rm.append(v is not None)
        vals.append(rv)
        mask.append(rm)
    labels = [c for j, c in enumerate(col_labels) if j != id_idx]
    if not header:
        labels = [str(j) for j in range(len(labels))]
    return ResponseMatrix(np.array(vals), np.array(mask, dtype=bool), tuple(row_labels), tuple(labels))


def load_long(path, row_col: str = "respondent", item_col: str = "item", value_col: str = "response",
              missing_token: str = "NA") -> ResponseMatrix:
    """Pivot (respondent, item, response) triplets to a masked wide matrix.

    Respondents and items are ordered by first appearance. Unobserved cells
    and responses equal to ``missing_token`` are masked.

    Raises
    ------
    DataFormatError
        On duplicate (respondent, item) keys, missing columns or
        non-binary responses.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        for c in (row_col, item_col, value_col):
            if c not in cols:
                raise DataFormatError(f"column {c!r} missing from {path}")
        rows, items, cells = {}, {}, {}
        for k, rec in enumerate(reader):
            rid, iid = rec[row_col], rec[item_col]
            key = (rid, iid)
            if key in cells:
                raise DataFormatError(f"duplicate key respondent={rid!r} item={iid!r} at line {k + 2}")
            rows.setdefault(rid, len(rows))
            items.setdefault(iid, len(items))
            cells[key] = _parse_cell(rec[value_col], missing_token, f"respondent {rid!r}, item {iid!r}")
    vals = np.zeros((len(rows), len(items)), dtype=np.int8)
    mask = np.zeros_like(vals, dtype=bool)
    for (rid, iid), v in cells.items():
        if v is not None:
            vals[rows[rid], items[iid]] = v
            mask[rows[rid], items[iid]] = True
    return ResponseMatrix(vals, mask, tuple(rows), tuple(items))


def write_wide(X: ResponseMatrix, path, missing_token: str = "NA") -> None:
    """Write ``X`` with a header row; masked cells become ``missing_token``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([str(c) for c in X.col_labels])
        for i in range(X.n_rows):
            w.writerow([str(int(X.values[i, j])) if X.mask[i, j] else missing_token for j in range(X.n_cols)])


@dataclass(frozen=True)
class DatasetSpec:
    path: str
    format: str = "wide_csv"
    id_columns: tuple = ("respondent", "item", "response")
    missing_token: str = "NA"

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}, got {self.format!r}")
        object.__setattr__(self, "path", str(self.path))
        object.__setattr__(self, "id_columns", tuple(self.id_columns))

    def load(self) -> ResponseMatrix:
        if self.format == "wide_csv":
            return load_wide(self.path, self.missing_token)
        return load_long(self.path, *self.id_columns, missing_token=self.missing_token)


def dataset_metadata(X: ResponseMatrix, **extra) -> dict:
    return dict(n=X.n_rows, p=X.n_cols, missing_rate=X.missing_rate, **extra)


def default_timestamps() -> dict:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return {"created": None}
    from datetime import datetime, timezone

    return {"created": datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()}


@dataclass
class ReportDocument:
    dataset: dict = field(default_factory=dict)
    panels: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=default_timestamps)
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "dataset": self.dataset,
            "config": self.config,
            "panels": [p.to_dict() for p in self.panels],
            "tables": self.tables,
            "timestamps": self.timestamps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportDocument":
        if "schema_version" not in d:
            raise ValidationError("report has no schema_version")
        return cls(
            dataset=d.get("dataset", {}),
            panels=[MetricPanel.from_dict(p) for p in d.get("panels", [])],
            config=d.get("config", {}),
            tables=d.get("tables", {}),
            timestamps=d.get("timestamps", {}),
            schema_version=d["schema_version"],
        )


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def fmt_number(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if math.isfinite(v) else ""
    return str(v)


CSV_LONG_COLUMNS = ("panel", "mode", "association", "metric", "value", "missing", "provenance")


def _check_writable(path: Path):
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir():
        raise OSError(f"cannot write {path}: directory {parent} does not exist")


def write_report(doc: ReportDocument, path, format: str = "json") -> None:
    """Serialize ``doc`` as the full JSON document or as one CSV row per (panel, metric)."""
    if format not in REPORT_FORMATS:
        raise ValidationError(f"report format must be one of {REPORT_FORMATS}")
    path = Path(path)
    _check_writable(path)
    if format == "json":
        text = json.dumps(_plain(doc.to_dict()), sort_keys=True, indent=2, allow_nan=False) + "\n"
        path.write_text(text, encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_LONG_COLUMNS)
        for k, panel in enumerate(doc.panels):
            prov = _plain(panel.provenance)
            prov_text = json.dumps(prov, sort_keys=True, separators=(",", ":"))
            for metric in sorted(panel.values):
                w.writerow([k, prov.get("mode", ""), prov.get("association", ""), metric,
                            fmt_number(panel.values[metric]), panel.missing.get(metric, ""), prov_text])


def read_report(path) -> ReportDocument:
    with open(path, encoding="utf-8") as fh:
        return ReportDocument.from_dict(json.load(fh))


def write_table(rows: Sequence[dict], path, columns: Optional[Sequence[str]] = None) -> None:
    """Long-form table as CSV; floats use 17 significant digits."""
    path = Path(path)
    _check_writable(path)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt_number(r.get(c)) for c in columns])


def read_table(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
