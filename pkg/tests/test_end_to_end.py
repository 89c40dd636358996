"""Scaled-down end-to-end runs over generated ransomware scenarios."""

import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from malproc_monitor.detectors import ForestDetector, GruDetector, NeverFireDetector, calibrate
from malproc_monitor.metrics import ComparisonTable, build_report, offline_benchmark
from malproc_monitor.models.distillation import distill, split_holdout, train_forest_direct
from malproc_monitor.models.forest import ForestConfig, train_forest
from malproc_monitor.models.gru import GruClassifier
from malproc_monitor.models.hyperparameters import Hyperparameters
from malproc_monitor.models.training import Trainer
from malproc_monitor.simulation import ScenarioConfig, load_library, run_with_detector
from malproc_monitor.simulation.scenario import scenario_suite
from malproc_monitor.telemetry.features import FEATURE_COUNT
from malproc_monitor.telemetry.normalization import NormalizationStats

pytestmark = pytest.mark.slow

HYPERPARAMETERS = Hyperparameters(
    hidden_neurons=16,
    window_size=5,
    epochs=20,
    batch_size=64,
    learning_rate=0.01,
    loss_kind="modified",
    seed=0,
)
FOREST = ForestConfig(n_trees=30, max_depth=12, seed=0)


def suite(seed, count, benign=10):
    config = ScenarioConfig(
        benign_app_count=benign,
        malicious_app_count=1,
        stagger_s=1,
        duration_s=60,
        seed=seed,
        malicious_archetypes=["ransomware"],
    )
    return scenario_suite(config, load_library(None), count)


@pytest.fixture(scope="module")
def pipeline():
    """Generate, train, calibrate and distill once for every test below."""
    training = suite(seed=0, count=6)
    validation = suite(seed=100, count=2)
    test = suite(seed=200, count=20, benign=35)
    traces = [t for s in training for t in s.traces()]

    teacher = Trainer(HYPERPARAMETERS).fit(traces)
    sweep = calibrate(GruDetector(teacher), validation, np.linspace(0.5, 1.0, 11))
    teacher.threshold = sweep.best_threshold

    fit, holdout = split_holdout(traces, 0.2, seed=0)
    student = distill(teacher, fit, FOREST, holdout)
    direct = train_forest_direct(traces, FOREST)
    return {
        "training": training,
        "test": test,
        "traces": traces,
        "teacher": teacher,
        "student": student,
        "direct": direct,
        "fit": fit,
        "holdout": holdout,
    }


def test_student_agrees_with_teacher(pipeline):
    """Test the distilled forest reproduces the calibrated GRU's decisions."""
    assert pipeline["student"].metadata["teacher_agreement"] >= 0.90


def test_distilled_detector_on_test_split(pipeline):
    """Test process accuracy and ransomware damage with kills in the loop."""
    detector = ForestDetector(pipeline["student"], name="distilled")
    runs, modified, baseline = [], 0.0, 0.0
    for scenario in pipeline["test"]:
        result = run_with_detector(scenario, detector)
        never = run_with_detector(scenario, NeverFireDetector())
        runs.append((result.events, scenario.ground_truth()))
        modified += result.total_files_modified
        baseline += never.total_files_modified

    report = build_report("test", "distilled", runs, threshold=detector.threshold)
    assert all(len(s.apps) == 36 and len(s.processes) <= 95 for s in pipeline["test"])
    assert report.accuracy >= 0.90
    assert baseline > 0
    assert modified <= 0.5 * baseline


def test_comparison_table_has_every_variant(pipeline):
    """Test offline, online, distilled and direct rows land in one table."""
    test_traces = [t for s in pipeline["test"] for t in s.traces()]
    table = ComparisonTable()
    table.add(offline_benchmark(pipeline["teacher"], {"test": test_traces}, 0.5, name="offline")[0])
    table.add(offline_benchmark(pipeline["teacher"], {"test": test_traces}, name="offline_best")[0])

    detectors = {
        "online": GruDetector(pipeline["teacher"], name="online", threshold=0.5),
        "online_best": GruDetector(pipeline["teacher"], name="online_best"),
        "distilled": ForestDetector(pipeline["student"], name="distilled"),
        "forest_direct": ForestDetector(pipeline["direct"], name="forest_direct"),
    }
    for name, detector in detectors.items():
        runs = [(run_with_detector(s, detector).events, s.ground_truth()) for s in pipeline["test"]]
        table.add(build_report("test", name, runs, threshold=detector.threshold))

    assert table.has_all_models("test")
    frame = table.to_frame()
    assert frame["accuracy"].between(0.0, 1.0).all()


def test_distillation_is_deterministic(pipeline):
    """Test identical seeds give byte-identical forests and event logs."""
    again = distill(pipeline["teacher"], pipeline["fit"], FOREST, pipeline["holdout"])
    scenario = pipeline["test"][0]

    with tempfile.TemporaryDirectory() as tmpdir:
        first, second = Path(tmpdir) / "a.json", Path(tmpdir) / "b.json"
        pipeline["student"].save(first)
        again.save(second)
        assert first.read_bytes() == second.read_bytes()

        log_a, log_b = Path(tmpdir) / "a.jsonl", Path(tmpdir) / "b.jsonl"
        run_with_detector(scenario, ForestDetector(pipeline["student"])).write_events(log_a)
        run_with_detector(scenario, ForestDetector(again)).write_events(log_b)
        assert log_a.read_bytes() == log_b.read_bytes()


def test_teacher_training_is_deterministic(pipeline):
    """Test retraining with the same seed reproduces the model file."""
    hyperparameters = HYPERPARAMETERS.model_copy(update={"epochs": 2})
    with tempfile.TemporaryDirectory() as tmpdir:
        paths = [Path(tmpdir) / f"gru-{i}.json" for i in range(2)]
        for path in paths:
            Trainer(hyperparameters).fit(pipeline["traces"]).save(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()


def test_forest_faster_than_gru():
    """Test a forest vote per snapshot costs less than a GRU pass per window."""
    rng = np.random.default_rng(0)
    n = 10_000
    X = rng.normal(size=(n, FEATURE_COUNT))
    y = (X[:, 0] + X[:, 1] > 0).astype(np.int64)
    forest = train_forest(X[:2000], y[:2000], ForestConfig(n_trees=50, seed=0))

    stats = NormalizationStats(mean=np.zeros(FEATURE_COUNT), std=np.ones(FEATURE_COUNT))
    gru = GruClassifier.initialize(Hyperparameters(hidden_neurons=128, depth=2, window_size=10), stats)
    windows = rng.normal(size=(n, 10, FEATURE_COUNT))

    started = time.perf_counter()
    forest.predict(X)
    forest_per_snapshot = (time.perf_counter() - started) / n

    started = time.perf_counter()
    gru.predict_windows(windows)
    gru_per_window = (time.perf_counter() - started) / n

    print(f"forest {forest_per_snapshot * 1e6:.2f} us/snapshot, gru {gru_per_window * 1e6:.2f} us/window")
    assert forest_per_snapshot < gru_per_window
