"""Tests for the feature schema, trace files and normalization."""

import json
import math
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
import yaml

from malproc_monitor.exceptions import InvalidInputError
from malproc_monitor.telemetry.features import (
    FEATURE_COUNT,
    FEATURE_NAMES,
    Label,
    ProcessSnapshot,
    ProcessTrace,
    make_feature_vector,
    split_by_label,
)
from malproc_monitor.telemetry.normalization import NormalizationStats, compute_stats, denormalize, normalize
from malproc_monitor.telemetry.traces import read_traces, write_traces

from .helpers import build_trace, make_rows


def test_schema_file_matches_feature_order():
    """Test the shipped schema lists the same 26 features in the same order."""
    text = resources.files("malproc_monitor.telemetry").joinpath("feature_schema.yaml").read_text(encoding="utf-8")
    schema = yaml.safe_load(text)
    assert [entry["name"] for entry in schema["features"]] == list(FEATURE_NAMES)
    assert FEATURE_COUNT == 26
    assert len(set(FEATURE_NAMES)) == 26


def test_feature_vector_validation():
    """Test arity, finiteness and sign checks."""
    assert len(make_feature_vector([0.0] * 26)) == 26

    with pytest.raises(InvalidInputError):
        make_feature_vector([0.0] * 25)

    values = [0.0] * 26
    values[0] = math.nan
    with pytest.raises(InvalidInputError):
        make_feature_vector(values)

    values = [0.0] * 26
    values[2] = -1.0
    with pytest.raises(InvalidInputError):
        make_feature_vector(values)

    # priorities may be negative
    values = [0.0] * 26
    values[FEATURE_NAMES.index("process_priority")] = -10.0
    assert make_feature_vector(values)[14] == -10.0


def test_snapshot_validation():
    """Test snapshots reject negative ticks and self-parenting."""
    with pytest.raises(InvalidInputError):
        ProcessSnapshot(10, None, "a", -1, (0.0,) * 26)
    with pytest.raises(InvalidInputError):
        ProcessSnapshot(10, 10, "a", 0, (0.0,) * 26)
    with pytest.raises(InvalidInputError):
        ProcessSnapshot(10, None, "a", 0, [0.0] * 3)

    snapshot = ProcessSnapshot(10, 1, "a", 3, [1.0] * 26)
    assert isinstance(snapshot.features, tuple)
    assert snapshot.as_array().shape == (26,)


def test_trace_validation():
    """Test snapshot ordering and ownership checks."""
    first = ProcessSnapshot(10, None, "a", 2, (0.0,) * 26)
    second = ProcessSnapshot(10, None, "a", 1, (0.0,) * 26)
    with pytest.raises(InvalidInputError):
        ProcessTrace(10, "a", Label.BENIGN, (first, second), 5)

    stranger = ProcessSnapshot(11, None, "a", 3, (0.0,) * 26)
    with pytest.raises(InvalidInputError):
        ProcessTrace(10, "a", Label.BENIGN, (first, stranger), 5)

    trace = ProcessTrace(10, "a", "malicious", (second, first), 5)
    assert trace.label is Label.MALICIOUS
    assert trace.y == 1
    assert trace.final_tick == 2


def test_empty_trace():
    """Test a trace without snapshots."""
    trace = ProcessTrace(10, "a", Label.BENIGN, (), 0)
    assert trace.final_tick is None
    assert trace.feature_matrix().shape == (0, 26)


def test_time_left():
    """Test time left falls from near 1 to 0 over the unkilled duration."""
    trace = build_trace(1, make_rows(4), duration=4)
    np.testing.assert_allclose(trace.time_left(), [0.75, 0.5, 0.25, 0.0])


def test_split_by_label():
    """Test traces are split into benign and malicious."""
    traces = [build_trace(1, make_rows(2)), build_trace(2, make_rows(2), "malicious")]
    benign, malicious = split_by_label(traces)
    assert [t.process_id for t in benign] == [1]
    assert [t.process_id for t in malicious] == [2]


def test_trace_file_round_trip():
    """Test traces survive writing and reading back."""
    traces = [
        build_trace(1, make_rows(3, cpu_user_pct=5.0), app_id="editor"),
        build_trace(2, make_rows(2, io_other_count=900.0), "malicious", app_id="locker", ppid=1),
    ]
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "traces.jsonl"
        assert write_traces(traces, path) == 5

        loaded = read_traces(path, durations={("editor", 1): 10})

    assert [t.key for t in loaded] == [("editor", 1), ("locker", 2)]
    assert loaded[0].unkilled_duration_s == 10
    assert loaded[1].unkilled_duration_s == 2
    assert loaded[1].parent_id == 1
    assert loaded[1].label is Label.MALICIOUS
    np.testing.assert_array_equal(loaded[0].feature_matrix(), traces[0].feature_matrix())


def test_trace_file_not_found():
    """Test reading a missing trace file."""
    with pytest.raises(FileNotFoundError):
        read_traces("/nonexistent/traces.jsonl")


def test_trace_file_wrong_arity_reports_line():
    """Test a record with 25 features is rejected with its line number."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "traces.jsonl"
        good = {"app_id": "a", "pid": 1, "ppid": None, "tick": 1, "label": "benign", "f": [0.0] * 26}
        bad = dict(good, tick=2, f=[0.0] * 25)
        path.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n", encoding="utf-8")

        with pytest.raises(InvalidInputError, match="line 2"):
            read_traces(path)


def test_trace_file_malformed_json():
    """Test a broken line is rejected."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "traces.jsonl"
        path.write_text("{not json\n", encoding="utf-8")

        with pytest.raises(InvalidInputError, match="line 1"):
            read_traces(path)


def test_trace_file_label_change():
    """Test a process whose label flips between lines is rejected."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "traces.jsonl"
        first = {"app_id": "a", "pid": 1, "ppid": None, "tick": 1, "label": "benign", "f": [0.0] * 26}
        second = dict(first, tick=2, label="malicious")
        path.write_text(json.dumps(first) + "\n" + json.dumps(second) + "\n", encoding="utf-8")

        with pytest.raises(InvalidInputError):
            read_traces(path)


def test_compute_stats():
    """Test mean and std over every training snapshot."""
    traces = [
        build_trace(1, make_rows(2, cpu_user_pct=10.0)),
        build_trace(2, make_rows(2, cpu_user_pct=30.0)),
    ]
    stats = compute_stats(traces)
    assert stats.mean[1] == pytest.approx(20.0)
    assert stats.std[1] == pytest.approx(10.0)
    # constant features get std 1
    assert stats.std[0] == 1.0

    values = np.vstack([t.feature_matrix() for t in traces])
    normalized = normalize(values, stats)
    assert normalized[:, 0].tolist() == [0.0] * 4
    np.testing.assert_allclose(denormalize(normalized, stats), values)


def test_compute_stats_without_data():
    """Test stats of an empty training set."""
    with pytest.raises(InvalidInputError, match="no training data"):
        compute_stats([])


def test_stats_validation():
    """Test stats shape and positivity checks."""
    with pytest.raises(InvalidInputError):
        NormalizationStats(mean=np.zeros(3), std=np.ones(3))
    with pytest.raises(InvalidInputError):
        NormalizationStats(mean=np.zeros(26), std=np.zeros(26))

    stats = NormalizationStats(mean=np.arange(26.0), std=np.ones(26))
    assert NormalizationStats.from_dict(stats.to_dict()) == stats
