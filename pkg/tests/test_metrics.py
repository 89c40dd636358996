"""Tests for evaluation metrics and the comparison table."""

import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from malproc_monitor.exceptions import InvalidInputError
from malproc_monitor.metrics import (
    COMPARISON_MODELS,
    REPORT_COLUMNS,
    ComparisonTable,
    EvaluationReport,
    ProcessRecord,
    accuracy,
    build_report,
    fnr,
    fnr_over_time,
    fpr,
    fpr_over_time,
    offline_benchmark,
    offline_report,
    records_from_events,
    report_from_records,
)
from malproc_monitor.simulation.engine import EventKind, SimulationEvent
from malproc_monitor.telemetry.features import Label

from .helpers import build_scenario, build_trace, make_rows

B, M = Label.BENIGN, Label.MALICIOUS


def record(pid, label, runtime, duration, killed_at=None, app_id=None):
    return ProcessRecord(pid, app_id or f"app-{pid}", label, runtime, duration, killed_at)


# Two benign processes (one killed at 25 of 100 s) and two malicious ones
# (one killed after 10 of 40 s, one never killed, 60 s).
TOY = [
    record(1, B, 25, 100, killed_at=25),
    record(2, B, 50, 50),
    record(3, M, 10, 40, killed_at=10),
    record(4, M, 60, 60),
]


def test_rates_on_toy_log():
    """Test every rate on a hand-computed log."""
    assert fpr(TOY) == pytest.approx(0.5)
    assert fnr(TOY) == pytest.approx(0.5)
    assert fnr_over_time(TOY) == pytest.approx(70 / 100)
    assert fpr_over_time(TOY) == pytest.approx(75 / 150)
    assert accuracy(TOY) == pytest.approx(0.5)


def test_fpr_over_time_single_process():
    """Test a 100 s benign process killed at 25 s loses 75% of its time."""
    assert fpr_over_time([record(1, B, 25, 100, killed_at=25)]) == pytest.approx(0.75)


def test_combined_is_mean():
    """Test combined = (FPR + FNR over time) / 2."""
    report = report_from_records("test", "online", TOY)
    assert report.combined == pytest.approx((0.5 + 0.7) / 2)
    row = report.row()
    assert list(row) == REPORT_COLUMNS
    assert row["combined"] == pytest.approx(0.6)


def test_empty_class_warns():
    """Test a missing class gives rate 0 and a warning."""
    warnings = []
    benign_only = [record(1, B, 10, 10)]
    assert fnr(benign_only, warnings) == 0.0
    assert fnr_over_time(benign_only, warnings) == 0.0
    assert len(warnings) == 2

    report = report_from_records("test", "online", benign_only)
    assert report.warnings


def test_app_level_accuracy():
    """Test an application counts as killed when any process was."""
    records = [
        record(1, M, 5, 10, killed_at=5, app_id="locker"),
        record(2, M, 10, 10, app_id="locker"),
        record(3, B, 10, 10, app_id="editor"),
    ]
    assert accuracy(records) == pytest.approx(2 / 3)
    assert accuracy(records, app_level=True) == 1.0
    assert accuracy([]) == 0.0


def test_records_from_events():
    """Test runtimes are rebuilt by counting snapshot events."""
    scenario = build_scenario([
        (1, None, "locker", "malicious", 0, 10),
        (2, None, "editor", "benign", 0, 5),
    ])
    events = [SimulationEvent(t, EventKind.SNAPSHOT, 1, "locker") for t in (1, 2, 3)]
    events.append(SimulationEvent(3, EventKind.KILL, 1, "locker"))
    events += [SimulationEvent(t, EventKind.SNAPSHOT, 2, "editor") for t in range(1, 6)]

    records = records_from_events(events, scenario.ground_truth())
    assert [(r.process_id, r.runtime, r.killed_at) for r in records] == [(1, 3, 3), (2, 5, None)]
    assert records[0].unkilled_duration == 10


def test_build_report_needs_ground_truth():
    """Test a missing sidecar is an input error."""
    with pytest.raises(InvalidInputError):
        build_report("test", "online", [([], None)])


def test_offline_report():
    """Test offline rows use the mean rule and leave over-time columns empty."""
    traces = [
        build_trace(1, make_rows(3), "benign", app_id="a"),
        build_trace(2, make_rows(3), "malicious", app_id="b"),
        build_trace(1, make_rows(3), "malicious", app_id="c"),
    ]
    scores = [[0.1, 0.2, 0.3], [0.2, 0.8, 0.8], [0.4, 0.4, 0.4]]
    report = offline_report("test", "offline", traces, scores, 0.5)

    assert report.fpr == 0.0
    assert report.fnr == pytest.approx(0.5)
    assert report.accuracy == pytest.approx(2 / 3)
    assert report.combined is None
    assert report.row()["fnr_over_time"] is None

    with pytest.raises(InvalidInputError):
        offline_report("test", "offline", traces, scores[:2], 0.5)


def test_offline_benchmark_skips_empty_traces():
    """Test traces without snapshots do not count."""

    class ConstantModel:
        threshold = 0.5

        def score_trace(self, trace):
            return np.full(len(trace.snapshots), 0.9 if trace.y else 0.1)

    traces = [
        build_trace(1, make_rows(2), "benign"),
        build_trace(2, make_rows(2), "malicious"),
        build_trace(3, make_rows(0), "malicious"),
    ]
    report = offline_benchmark(ConstantModel(), {"test": traces})[0]
    assert report.accuracy == 1.0
    assert report.fnr == 0.0


def test_comparison_table():
    """Test the six-model table, its ordering and its files."""
    table = ComparisonTable()
    for model in reversed(COMPARISON_MODELS):
        table.add(EvaluationReport("test", model, 0.9, 0.1, 0.2, details=[TOY[0]]))
    table.add(EvaluationReport("validation", "online", 0.8, 0.1, 0.2, fnr_over_time=0.3, fpr_over_time=0.05))

    assert table.has_all_models("test")
    assert not table.has_all_models("validation")

    frame = table.to_frame()
    assert list(frame.columns) == REPORT_COLUMNS
    assert frame[frame["split"] == "test"]["model"].tolist() == COMPARISON_MODELS
    assert "90.00" in table.to_text()

    with tempfile.TemporaryDirectory() as tmpdir:
        csv_path = Path(tmpdir) / "comparison.csv"
        details_path = Path(tmpdir) / "processes.jsonl"
        table.to_csv(csv_path)
        table.write_details(details_path)

        loaded = pd.read_csv(csv_path)
        assert len(loaded) == 7
        lines = details_path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 6
        assert json.loads(lines[0])["label"] == "benign"
