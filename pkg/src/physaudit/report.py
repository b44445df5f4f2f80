"""Run reports as CSV tables and a JSON mirror with the same field names.

Tables:

* ``verdicts``: one row per (test, expectation).
* ``per_metric``: average confidence per metric plus their mean (``avg``).
* ``summary``: overall confidence, hit coverage, perfect-align rate and mean semantic score.
* ``alignment``: hit coverage and timing error with 95% half-widths.
* ``errors``: quarantined cases.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .audit import TestVerdict
from .config import METRIC_NAMES
from .onset import AlignmentScores, perfect_align_rate
from .stats import mean_ci95

__all__ = [
    "TABLE_METRIC_ORDER",
    "VERDICT_COLUMNS",
    "PER_METRIC_COLUMNS",
    "SUMMARY_COLUMNS",
    "ALIGNMENT_COLUMNS",
    "ERROR_COLUMNS",
    "QuarantinedCase",
    "RunReport",
    "per_metric_confidence",
    "alignment_summary",
    "report_tables",
    "table_csv",
    "report_json",
    "report_from_json",
    "emit_report",
]

# column order of the per-metric confidence table
TABLE_METRIC_ORDER = (
    "attack_time", "decay_rate", "f0", "spectral_centroid", "spectral_flux",
    "spectral_rolloff", "temporal_modulation", "rt60", "drr",
)
assert set(TABLE_METRIC_ORDER) == set(METRIC_NAMES)

VERDICT_COLUMNS = ("test_id", "metric", "trend", "confidence", "n_seeds", "n_votes_pass",
                   "n_failures", "n_wrong", "tau")
PER_METRIC_COLUMNS = ("method",) + TABLE_METRIC_ORDER + ("avg",)
SUMMARY_COLUMNS = ("method", "confidence", "hit_coverage", "perfect_align", "semantic")
ALIGNMENT_COLUMNS = ("method", "n_seeds", "hit_coverage", "hit_coverage_ci95",
                     "timing_error", "timing_error_ci95")
ERROR_COLUMNS = ("case", "reason", "message")


@dataclass(frozen=True)
class QuarantinedCase:
    case: str
    reason: str
    message: str

    def to_dict(self) -> dict:
        return {"case": self.case, "reason": self.reason, "message": self.message}


@dataclass(frozen=True)
class RunReport:
    method: str = "run"
    verdicts: tuple[TestVerdict, ...] = ()
    alignment: tuple[AlignmentScores, ...] = ()
    semantic: tuple[float, ...] = ()
    errors: tuple[QuarantinedCase, ...] = ()
    missing: tuple[str, ...] = field(default=())

    def sorted(self) -> RunReport:
        order = {m: k for k, m in enumerate(TABLE_METRIC_ORDER)}
        verdicts = tuple(sorted(self.verdicts, key=lambda v: (v.test_id, order[v.metric], v.trend)))
        errors = tuple(sorted(self.errors, key=lambda e: (e.case, e.reason, e.message)))
        return RunReport(self.method, verdicts, self.alignment, self.semantic, errors, tuple(sorted(self.missing)))


def _mean_or_none(values) -> Optional[float]:
    values = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(values)) if values else None


def per_metric_confidence(verdicts: Sequence[TestVerdict]) -> dict[str, Optional[float]]:
    """Mean confidence per metric over all its verdicts; ``avg`` averages the metrics present."""
    out: dict[str, Optional[float]] = {}
    for metric in TABLE_METRIC_ORDER:
        out[metric] = _mean_or_none([v.confidence for v in verdicts if v.metric == metric])
    out["avg"] = _mean_or_none(list(out.values()))
    return out


def _ci(values: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    values = [float(v) for v in values if v is not None and math.isfinite(v)]
    if not values:
        return None, None
    if len(values) == 1:
        return values[0], None
    mean, lo, _ = mean_ci95(values)
    return float(mean), float(mean - lo)


def alignment_summary(scores: Sequence[AlignmentScores]) -> dict:
    """Mean hit coverage (%) and timing error (ms) with 95% half-widths, and perfect-align rate."""
    cov, cov_ci = _ci([s.hit_coverage for s in scores])
    err, err_ci = _ci([s.timing_error for s in scores if s.timing_error is not None])
    return {
        "n_seeds": len(scores),
        "hit_coverage": cov,
        "hit_coverage_ci95": cov_ci,
        "timing_error": err,
        "timing_error_ci95": err_ci,
        "perfect_align": perfect_align_rate(scores) if scores else None,
    }


def report_tables(report: RunReport) -> dict[str, list[dict]]:
    report = report.sorted()
    verdict_rows = []
    for v in report.verdicts:
        d = v.to_dict()
        verdict_rows.append({c: (v.n_wrong if c == "n_wrong" else d[c]) for c in VERDICT_COLUMNS})
    per_metric = per_metric_confidence(report.verdicts)
    align = alignment_summary(report.alignment)
    tables = {"verdicts": verdict_rows, "errors": [e.to_dict() for e in report.errors]}
    if report.verdicts:
        tables["per_metric"] = [{"method": report.method, **per_metric}]
    else:
        tables["per_metric"] = []
    if report.verdicts or report.alignment:
        tables["summary"] = [{
            "method": report.method,
            "confidence": per_metric["avg"],
            "hit_coverage": align["hit_coverage"],
            "perfect_align": align["perfect_align"],
            "semantic": _mean_or_none(report.semantic),
        }]
    else:
        tables["summary"] = []
    if report.alignment:
        tables["alignment"] = [{"method": report.method, **{k: align[k] for k in ALIGNMENT_COLUMNS[1:]}}]
    else:
        tables["alignment"] = []
    return tables


_COLUMNS = {
    "verdicts": VERDICT_COLUMNS,
    "per_metric": PER_METRIC_COLUMNS,
    "summary": SUMMARY_COLUMNS,
    "alignment": ALIGNMENT_COLUMNS,
    "errors": ERROR_COLUMNS,
}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else repr(float(v))
    return str(v)


def table_csv(name: str, rows: Sequence[dict]) -> str:
    """One table as CSV; an empty table still has its header row."""
    columns = _COLUMNS[name]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def report_json(report: RunReport) -> str:
    """JSON document holding the raw report and the derived tables."""
    report = report.sorted()
    doc = {
        "method": report.method,
        "verdicts": [v.to_dict() for v in report.verdicts],
        "alignment": [a.to_dict() for a in report.alignment],
        "semantic": list(report.semantic),
        "errors": [e.to_dict() for e in report.errors],
        "missing": list(report.missing),
        "tables": report_tables(report),
    }
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def report_from_json(text: str) -> RunReport:
    doc = json.loads(text)
    return RunReport(
        method=doc["method"],
        verdicts=tuple(TestVerdict.from_dict(v) for v in doc["verdicts"]),
        alignment=tuple(AlignmentScores(float(a["hit_coverage"]), a["timing_error"], bool(a["perfect"]))
                        for a in doc["alignment"]),
        semantic=tuple(float(s) for s in doc["semantic"]),
        errors=tuple(QuarantinedCase(**e) for e in doc["errors"]),
        missing=tuple(doc.get("missing", ())),
    )


def emit_report(report: RunReport, fmt: str = "csv") -> dict[str, str]:
    """File name to contents: one CSV per table, or a single ``report.json``."""
    if fmt == "json":
        return {"report.json": report_json(report)}
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    tables = report_tables(report)
    return {f"{name}.csv": table_csv(name, tables[name]) for name in _COLUMNS}
