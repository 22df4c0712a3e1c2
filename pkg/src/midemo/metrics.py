"""Pearson correlation, results tables and the cost of explainability."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCorrelationError, DimensionError, SchemaError


def pearson(x, y):
    """Sample Pearson correlation, two-pass in float64."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"pearson: lengths {x.size} and {y.size} differ")
    if x.size < 2:
        raise DegenerateCorrelationError(f"pearson: need at least 2 points, got {x.size}")
    # A constant column can still leave a rounding residue after centring.
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise DegenerateCorrelationError("pearson: zero variance input")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateCorrelationError("pearson: zero variance input")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def safe_pearson(x, y):
    """``(r, degenerate)``; zero variance yields ``(0.0, True)``."""
    try:
        return pearson(x, y), False
    except DegenerateCorrelationError:
        if np.asarray(x).size < 2:
            raise
        return 0.0, True


def columnwise_pearson(pred, target, names):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.shape[1] != len(names):
        raise DimensionError(f"prediction {pred.shape} vs target {target.shape} "
                             f"for {len(names)} columns")
    r, flags = {}, {}
    for k, name in enumerate(names):
        r[name], flags[name] = safe_pearson(pred[:, k], target[:, k])
    return r, flags


@dataclass
class ResultsRow:
    name: str
    columns: tuple
    values: np.ndarray

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.columns),):
            raise DimensionError(f"{self.name}: {self.values.size} values for "
                                 f"{len(self.columns)} columns")

    @property
    def mean(self):
        return float(np.mean(self.values))

    def as_dict(self):
        return dict(zip(self.columns, self.values.tolist()))


@dataclass
class ResultsTable:
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, row):
        if tuple(row.columns) != tuple(self.columns):
            raise SchemaError(f"row {row.name!r} columns {row.columns} != {self.columns}")
        self.rows.append(row)

    def row(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


@dataclass
class CoEReport:
    baseline: str
    candidate: str
    columns: tuple
    values: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.values))

    def as_row(self):
        return ResultsRow(f"CoE_{self.candidate}", self.columns, self.values)


def cost_of_explainability(baseline, candidate):
    """Per-column ``r_baseline - r_candidate``; positive means performance lost."""
    if set(baseline.columns) != set(candidate.columns):
        missing = sorted(set(baseline.columns) ^ set(candidate.columns))
        raise SchemaError(f"column sets differ: {missing}")
    cand = candidate.as_dict()
    diff = np.array([b - cand[c] for c, b in zip(baseline.columns, baseline.values)])
    return CoEReport(baseline.name, candidate.name, baseline.columns, diff)


def aggregate_results(runs, name="", columns=None):
    """Mean over runs of per-run correlation dicts (``{column: r}``)."""
    if not runs:
        raise ValueError("need at least one run")
    if columns is None:
        columns = tuple(runs[0].keys())
    for k, run in enumerate(runs):
        if set(run) != set(columns):
            raise SchemaError(f"run {k} columns {sorted(run)} != {sorted(columns)}")
    values = np.array([[run[c] for c in columns] for run in runs]).mean(axis=0)
    return ResultsRow(name, columns, values)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def format_cell(v):
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def comment_line(meta):
    """``# key=value ...`` provenance line placed above a CSV header."""
    return "# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n"


def _data_lines(fh):
    return (line for line in fh if not line.startswith("#"))


def write_results_csv(path, rows, columns=None, meta=None):
    columns = tuple(columns or rows[0].columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write(comment_line(meta))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("scheme",) + columns + ("mean",))
        for row in rows:
            d = row.as_dict()
            w.writerow([row.name] + [format_cell(d[c]) for c in columns] + [format_cell(row.mean)])


def write_results_json(path, rows, meta=None):
    doc = {"rows": [{"name": r.name, "columns": list(r.columns), "values": r.as_dict(),
                     "mean": r.mean} for r in rows]}
    if meta:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_results(path, expected_columns=None):
    """Read rows from a results CSV or JSON file written by this package."""
    path = str(path)
    rows = []
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        for r in doc["rows"]:
            cols = tuple(expected_columns or r.get("columns") or r["values"].keys())
            _check_columns(path, r["values"].keys(), cols)
            rows.append(ResultsRow(r["name"], cols, [r["values"][c] for c in cols]))
        return rows
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_data_lines(fh))
        header = [h for h in (reader.fieldnames or []) if h not in ("scheme", "mean")]
        if not reader.fieldnames or "scheme" not in reader.fieldnames:
            raise SchemaError(f"{path}: missing column 'scheme'")
        cols = tuple(expected_columns or header)
        _check_columns(path, header, cols)
        for rec in reader:
            try:
                rows.append(ResultsRow(rec["scheme"], cols, [float(rec[c]) for c in cols]))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: bad value in row {rec.get('scheme')!r}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no result rows")
    return rows


def _check_columns(path, found, expected):
    found = set(found)
    missing = [c for c in expected if c not in found]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    extra = sorted(found - set(expected))
    if extra:
        raise SchemaError(f"{path}: unexpected column(s) {', '.join(extra)}")
