"""Builders for hand-made traces and scenarios."""

from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from malproc_monitor.simulation.archetypes import DamageSpec
from malproc_monitor.simulation.scenario import Scenario, ScenarioApp, ScenarioConfig, ScenarioProcess
from malproc_monitor.telemetry.features import (
    FEATURE_COUNT,
    FEATURE_INDEX,
    Label,
    ProcessSnapshot,
    ProcessTrace,
)

# io_other_count separates the classes in hand-made data.
BENIGN_ACTIVITY = 10.0
MALICIOUS_ACTIVITY = 1000.0

ProcessSpec = Tuple[int, Optional[int], str, str, int, int]


def make_rows(n: int, **features: float) -> np.ndarray:
    """``n`` feature rows with constant values and seconds_since_start = 1..n."""
    rows = np.zeros((n, FEATURE_COUNT))
    for name, value in features.items():
        rows[:, FEATURE_INDEX[name]] = value
    rows[:, FEATURE_INDEX["seconds_since_start"]] = np.arange(1, n + 1)
    return rows


def activity_rows(n: int, label: str, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    level = MALICIOUS_ACTIVITY if label == "malicious" else BENIGN_ACTIVITY
    rows = make_rows(n, io_other_count=level, thread_count=4)
    if rng is not None:
        rows[:, FEATURE_INDEX["io_other_count"]] += rng.uniform(0, level / 10, n)
        rows[:, FEATURE_INDEX["cpu_user_pct"]] = rng.uniform(0, 50, n)
    return rows


def build_trace(
    pid: int,
    rows: np.ndarray,
    label: str = "benign",
    app_id: Optional[str] = None,
    birth: int = 0,
    duration: Optional[int] = None,
    ppid: Optional[int] = None,
) -> ProcessTrace:
    """Trace whose k-th row is the snapshot at tick birth + k + 1."""
    app_id = app_id or f"app-{pid}"
    snapshots = tuple(
        ProcessSnapshot(pid, ppid, app_id, birth + k + 1, tuple(float(v) for v in row))
        for k, row in enumerate(np.asarray(rows))
    )
    return ProcessTrace(
        process_id=pid,
        app_id=app_id,
        label=Label(label),
        snapshots=snapshots,
        unkilled_duration_s=len(snapshots) if duration is None else duration,
        parent_id=ppid,
    )


def separable_traces(
    n_benign: int = 6,
    n_malicious: int = 6,
    length: int = 12,
    seed: int = 0,
) -> list:
    """Benign and malicious traces told apart by io_other_count."""
    rng = np.random.default_rng(seed)
    traces = []
    for i in range(n_benign):
        traces.append(build_trace(2000 + i, activity_rows(length, "benign", rng), "benign"))
    for i in range(n_malicious):
        traces.append(build_trace(3000 + i, activity_rows(length, "malicious", rng), "malicious"))
    return traces


def build_scenario(
    specs: Iterable[ProcessSpec],
    duration_s: Optional[int] = None,
    damage: Optional[Dict[str, DamageSpec]] = None,
) -> Scenario:
    """Scenario from (pid, ppid, app_id, label, birth, end) tuples.

    Malicious processes get io_other_count = 1000, benign ones 10.
    """
    specs: Sequence[ProcessSpec] = list(specs)
    damage = damage or {}
    duration_s = duration_s or max(end for *_, end in specs)
    processes = {}
    for pid, ppid, app_id, label, birth, end in specs:
        rows = activity_rows(end - birth, label)
        processes[pid] = ScenarioProcess(pid, ppid, app_id, Label(label), "hand", birth, end, rows)

    apps = []
    for pid, ppid, app_id, label, birth, _ in specs:
        if any(app.app_id == app_id for app in apps):
            continue
        apps.append(ScenarioApp(app_id, "hand", Label(label), birth, pid, damage.get(app_id)))

    config = ScenarioConfig(
        benign_app_count=min(35, max(1, sum(1 for a in apps if a.label is Label.BENIGN))),
        malicious_app_count=min(2, max(1, sum(1 for a in apps if a.label is Label.MALICIOUS))),
        stagger_s=0,
        duration_s=duration_s,
    )
    return Scenario(config=config, apps=apps, processes=processes)
