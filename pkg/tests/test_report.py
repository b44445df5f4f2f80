import csv
import io
import json

import pytest

from physaudit.audit import TestVerdict
from physaudit.onset import AlignmentScores
from physaudit.report import (
    PER_METRIC_COLUMNS,
    VERDICT_COLUMNS,
    QuarantinedCase,
    RunReport,
    alignment_summary,
    emit_report,
    per_metric_confidence,
    report_from_json,
    report_json,
)


def verdict(test_id="t", metric="f0", confidence=0.5, tau=1.0):
    return TestVerdict(metric, "increase", confidence, 2, 1, 1, tau, ("pass", "fail_nan"), (1.0, 1.0), test_id)


def rows(text):
    return list(csv.reader(io.StringIO(text)))


class TestTables:
    def test_empty_is_header_only(self):
        files = emit_report(RunReport())
        assert rows(files["verdicts.csv"]) == [list(VERDICT_COLUMNS)]
        assert rows(files["per_metric.csv"]) == [list(PER_METRIC_COLUMNS)]
        assert all(len(rows(text)) == 1 for text in files.values())

    def test_one_verdict_one_row(self):
        table = rows(emit_report(RunReport(verdicts=(verdict(),)))["verdicts.csv"])
        assert table == [list(VERDICT_COLUMNS), ["t", "f0", "increase", "0.5", "2", "1", "1", "0", "1.0"]]

    def test_rows_sorted_by_case_then_metric(self):
        vs = (verdict("b", "f0"), verdict("a", "drr"), verdict("a", "attack_time"))
        table = rows(emit_report(RunReport(verdicts=vs))["verdicts.csv"])
        assert [r[:2] for r in table[1:]] == [["a", "attack_time"], ["a", "drr"], ["b", "f0"]]

    def test_per_metric_average(self):
        vs = (verdict(metric="f0", confidence=0.2), verdict("u", "f0", 0.4), verdict(metric="rt60", confidence=1.0))
        pm = per_metric_confidence(vs)
        assert pm["f0"] == pytest.approx(0.3)
        assert pm["rt60"] == 1.0
        assert pm["drr"] is None
        assert pm["avg"] == pytest.approx(0.65)

    def test_nan_tau_renders_blank(self):
        table = rows(emit_report(RunReport(verdicts=(verdict(tau=float("nan")),)))["verdicts.csv"])
        assert table[1][-1] == ""

    def test_alignment_summary(self):
        scores = [AlignmentScores(100.0, 10.0, True), AlignmentScores(50.0, 20.0, False)]
        s = alignment_summary(scores)
        assert s["hit_coverage"] == 75.0
        assert s["timing_error"] == 15.0
        assert s["perfect_align"] == 50.0
        assert s["hit_coverage_ci95"] > 0

    def test_missing_timing_error_skipped(self):
        s = alignment_summary([AlignmentScores(0.0, None, False)])
        assert s["timing_error"] is None
        assert s["hit_coverage_ci95"] is None

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report(RunReport(), "xml")


class TestJson:
    def test_round_trip(self):
        report = RunReport(
            "m", (verdict("b"), verdict("a", "drr", 1.0)),
            (AlignmentScores(100.0, 3.5, True), AlignmentScores(0.0, None, False)),
            (0.5, 0.25), (QuarantinedCase("c", "missing_fmt", "bad"),), ("c: 1 of 10 seeds",))
        text = report_json(report)
        again = report_from_json(text)
        assert again == report.sorted()
        assert report_json(again) == text

    def test_field_names_mirror_csv(self):
        report = RunReport(verdicts=(verdict(),))
        doc = json.loads(emit_report(report, "json")["report.json"])
        assert list(doc["tables"]["verdicts"][0]) == list(VERDICT_COLUMNS)
        assert list(doc["tables"]["per_metric"][0]) == list(PER_METRIC_COLUMNS)
