"""Scenario generation and persistence.

A scenario is fully scripted: every process of every application has a birth
tick, an unkilled end tick and a feature row for each executed second. A
process born at tick b with unkilled duration D emits snapshots at ticks
b+1 .. b+D; durations are truncated at the scenario end.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..exceptions import ConfigurationError, InvalidInputError
from ..telemetry.features import FEATURE_INDEX, Label, ProcessSnapshot, ProcessTrace
from ..telemetry.traces import read_traces, write_traces
from .archetypes import AppArchetype, ArchetypeLibrary, DamageSpec, ProcessTemplate, generate_features

logger = logging.getLogger("simulator.scenario")

SCENARIO_FORMAT = "malproc-scenario/1"
TRACES_FILE = "traces.jsonl"
GROUND_TRUTH_FILE = "ground_truth.json"
FIRST_PID = 1000


class ScenarioConfig(BaseModel):
    """Shape of one multi-application scenario."""

    benign_app_count: int = Field(default=10, ge=1, le=35)
    malicious_app_count: int = Field(default=1, ge=1, le=2)
    stagger_s: int = Field(default=1, ge=0, description="Seconds between application launches")
    duration_s: int = Field(default=60, ge=1, description="Ticks simulated")
    seed: int = Field(default=0, ge=0)
    benign_archetypes: Optional[List[str]] = Field(default=None, description="Restrict benign draws")
    malicious_archetypes: Optional[List[str]] = Field(default=None, description="Restrict malicious draws")

    @model_validator(mode="after")
    def validate_schedule(self):
        apps = self.benign_app_count + self.malicious_app_count
        if (apps - 1) * self.stagger_s >= self.duration_s:
            raise ValueError(
                f"{apps} launches {self.stagger_s}s apart do not fit in {self.duration_s}s"
            )
        return self

    @property
    def app_count(self) -> int:
        return self.benign_app_count + self.malicious_app_count


@dataclass
class ScenarioProcess:
    """One scripted process; ``features`` has one row per executed second."""

    pid: int
    ppid: Optional[int]
    app_id: str
    label: Label
    template: str
    birth_tick: int
    end_tick: int
    features: np.ndarray

    @property
    def unkilled_duration(self) -> int:
        return self.end_tick - self.birth_tick

    def snapshot_at(self, tick: int) -> ProcessSnapshot:
        return ProcessSnapshot(
            process_id=self.pid,
            parent_id=self.ppid,
            app_id=self.app_id,
            tick=tick,
            features=tuple(float(v) for v in self.features[tick - self.birth_tick - 1]),
        )

    def trace(self) -> ProcessTrace:
        """The unkilled trace of this process."""
        return ProcessTrace(
            process_id=self.pid,
            app_id=self.app_id,
            label=self.label,
            snapshots=tuple(
                self.snapshot_at(tick) for tick in range(self.birth_tick + 1, self.end_tick + 1)
            ),
            unkilled_duration_s=self.unkilled_duration,
            parent_id=self.ppid,
        )


@dataclass
class ScenarioApp:
    app_id: str
    archetype: str
    label: Label
    launch_tick: int
    root_pid: int
    damage: Optional[DamageSpec] = None


@dataclass
class Scenario:
    config: ScenarioConfig
    apps: List[ScenarioApp]
    processes: Dict[int, ScenarioProcess]
    children: Dict[int, List[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.children:
            for process in self.processes.values():
                self.children.setdefault(process.pid, [])
                if process.ppid is not None:
                    self.children.setdefault(process.ppid, []).append(process.pid)

    @property
    def duration_s(self) -> int:
        return self.config.duration_s

    def app(self, app_id: str) -> ScenarioApp:
        for app in self.apps:
            if app.app_id == app_id:
                return app
        raise KeyError(app_id)

    def descendants(self, pid: int) -> List[int]:
        """Every descendant of ``pid`` in the scripted tree, breadth first."""
        found, queue = [], list(self.children.get(pid, []))
        while queue:
            child = queue.pop(0)
            found.append(child)
            queue.extend(self.children.get(child, []))
        return found

    def traces(self) -> List[ProcessTrace]:
        return [self.processes[pid].trace() for pid in sorted(self.processes)]

    def ground_truth(self) -> "GroundTruth":
        return GroundTruth.from_scenario(self)


@dataclass(frozen=True)
class ProcessTruth:
    pid: int
    ppid: Optional[int]
    app_id: str
    label: Label
    birth_tick: int
    end_tick: int

    @property
    def unkilled_duration(self) -> int:
        return self.end_tick - self.birth_tick


@dataclass
class GroundTruth:
    """What the ground-truth sidecar records about a scenario."""

    config: ScenarioConfig
    apps: List[ScenarioApp]
    processes: Dict[int, ProcessTruth]

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "GroundTruth":
        return cls(
            config=scenario.config,
            apps=list(scenario.apps),
            processes={
                pid: ProcessTruth(p.pid, p.ppid, p.app_id, p.label, p.birth_tick, p.end_tick)
                for pid, p in scenario.processes.items()
            },
        )

    def to_document(self) -> Dict:
        return {
            "format": SCENARIO_FORMAT,
            "config": self.config.model_dump(),
            "apps": [
                {
                    "app_id": app.app_id,
                    "archetype": app.archetype,
                    "label": app.label.value,
                    "launch_tick": app.launch_tick,
                    "root_pid": app.root_pid,
                    "damage": app.damage.model_dump() if app.damage else None,
                }
                for app in self.apps
            ],
            "processes": [
                {
                    "pid": p.pid,
                    "ppid": p.ppid,
                    "app_id": p.app_id,
                    "label": p.label.value,
                    "birth_tick": p.birth_tick,
                    "end_tick": p.end_tick,
                    "unkilled_duration_s": p.unkilled_duration,
                }
                for _, p in sorted(self.processes.items())
            ],
        }

    @classmethod
    def from_document(cls, document: Dict) -> "GroundTruth":
        if document.get("format") != SCENARIO_FORMAT:
            raise InvalidInputError(f"Not a scenario sidecar (format {document.get('format')!r})")
        try:
            apps = [
                ScenarioApp(
                    app_id=a["app_id"],
                    archetype=a["archetype"],
                    label=Label(a["label"]),
                    launch_tick=int(a["launch_tick"]),
                    root_pid=int(a["root_pid"]),
                    damage=DamageSpec(**a["damage"]) if a.get("damage") else None,
                )
                for a in document["apps"]
            ]
            processes = {
                int(p["pid"]): ProcessTruth(
                    pid=int(p["pid"]),
                    ppid=None if p["ppid"] is None else int(p["ppid"]),
                    app_id=p["app_id"],
                    label=Label(p["label"]),
                    birth_tick=int(p["birth_tick"]),
                    end_tick=int(p["end_tick"]),
                )
                for p in document["processes"]
            }
            return cls(ScenarioConfig(**document["config"]), apps, processes)
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"Invalid ground-truth sidecar: {e}") from e

    def write(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_document(), fh, indent=2, sort_keys=True)

    @classmethod
    def read(cls, path: Union[str, Path]) -> "GroundTruth":
        path = Path(path)
        if not path.exists():
            raise InvalidInputError(f"Ground-truth sidecar not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                return cls.from_document(json.load(fh))
            except json.JSONDecodeError as e:
                raise InvalidInputError(f"Ground-truth sidecar {path} is not valid JSON: {e}") from e


def _draw_archetypes(
    candidates: List[AppArchetype],
    count: int,
    rng: np.random.Generator,
) -> List[AppArchetype]:
    weights = np.array([a.weight for a in candidates], dtype=np.float64)
    picks = rng.choice(len(candidates), size=count, p=weights / weights.sum())
    return [candidates[i] for i in picks]


def _materialize(
    template: ProcessTemplate,
    app_id: str,
    label: Label,
    ppid: Optional[int],
    birth: int,
    config: ScenarioConfig,
    next_pid: List[int],
    processes: Dict[int, ScenarioProcess],
) -> Optional[int]:
    """Add ``template`` and its subtree; returns the new pid or None when it starts too late."""
    if birth >= config.duration_s:
        return None
    pid = next_pid[0]
    next_pid[0] += 1
    process_rng = np.random.default_rng([config.seed, pid])
    low, high = template.duration_s
    duration = int(process_rng.integers(low, high + 1))
    end = min(birth + duration, config.duration_s)
    features = generate_features(template, end - birth, process_rng)
    processes[pid] = ScenarioProcess(pid, ppid, app_id, label, template.name, birth, end, features)
    for child in template.children:
        _materialize(
            child, app_id, label, pid, birth + child.spawn_offset_s, config, next_pid, processes
        )
    return pid


def _fill_tree_features(scenario: Scenario):
    """Child count and max child pid from the unkilled tree, plus seconds since start."""
    for process in scenario.processes.values():
        children = [scenario.processes[c] for c in scenario.children.get(process.pid, [])]
        for row, tick in enumerate(range(process.birth_tick + 1, process.end_tick + 1)):
            live = [c.pid for c in children if c.birth_tick <= tick <= c.end_tick]
            process.features[row, FEATURE_INDEX["seconds_since_start"]] = tick - process.birth_tick
            process.features[row, FEATURE_INDEX["child_process_count"]] = len(live)
            process.features[row, FEATURE_INDEX["max_process_id"]] = max(live, default=0)


def generate_scenario(config: ScenarioConfig, library: ArchetypeLibrary) -> Scenario:
    """Draw archetypes, stagger their launches and script every process.

    Deterministic for ``config.seed``.
    """
    benign = library.by_label(Label.BENIGN, config.benign_archetypes)
    malicious = library.by_label(Label.MALICIOUS, config.malicious_archetypes)
    if not benign or not malicious:
        raise ConfigurationError("Archetype library needs at least one benign and one malicious archetype")

    rng = np.random.default_rng(config.seed)
    drawn = _draw_archetypes(benign, config.benign_app_count, rng)
    drawn += _draw_archetypes(malicious, config.malicious_app_count, rng)
    order = rng.permutation(len(drawn))

    apps: List[ScenarioApp] = []
    processes: Dict[int, ScenarioProcess] = {}
    next_pid = [FIRST_PID]
    for slot, index in enumerate(order):
        archetype = drawn[index]
        app_id = f"app-{slot:02d}-{archetype.name}"
        launch = slot * config.stagger_s
        root_pid = _materialize(
            archetype.root, app_id, archetype.label, None, launch, config, next_pid, processes
        )
        apps.append(ScenarioApp(app_id, archetype.name, archetype.label, launch, root_pid, archetype.damage))

    scenario = Scenario(config=config, apps=apps, processes=processes)
    _fill_tree_features(scenario)
    logger.info(
        f"Generated scenario seed={config.seed}: {len(apps)} apps, {len(processes)} processes, "
        f"{config.duration_s} ticks"
    )
    return scenario


def write_scenario(scenario: Scenario, directory: Union[str, Path]) -> Tuple[Path, Path]:
    """Write ``traces.jsonl`` and ``ground_truth.json`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    traces_path = directory / TRACES_FILE
    truth_path = directory / GROUND_TRUTH_FILE
    write_traces(scenario.traces(), traces_path)
    scenario.ground_truth().write(truth_path)
    logger.info(f"Wrote scenario to {directory}")
    return traces_path, truth_path


def read_scenario(directory: Union[str, Path]) -> Scenario:
    """Rebuild a replayable scenario from its trace file and sidecar."""
    directory = Path(directory)
    truth = GroundTruth.read(directory / GROUND_TRUTH_FILE)
    durations = {(p.app_id, p.pid): p.unkilled_duration for p in truth.processes.values()}
    traces = {trace.process_id: trace for trace in read_traces(directory / TRACES_FILE, durations)}

    processes: Dict[int, ScenarioProcess] = {}
    for pid, info in sorted(truth.processes.items()):
        trace = traces.get(pid)
        if trace is None or len(trace.snapshots) != info.unkilled_duration:
            have = len(trace.snapshots) if trace is not None else 0
            raise InvalidInputError(
                f"Process {info.app_id}/{pid} has {have} snapshots, sidecar says {info.unkilled_duration}"
            )
        processes[pid] = ScenarioProcess(
            pid=pid,
            ppid=info.ppid,
            app_id=info.app_id,
            label=info.label,
            template="",
            birth_tick=info.birth_tick,
            end_tick=info.end_tick,
            features=trace.feature_matrix(),
        )
    return Scenario(config=truth.config, apps=truth.apps, processes=processes)


def scenario_suite(config: ScenarioConfig, library: ArchetypeLibrary, count: int) -> List[Scenario]:
    """``count`` scenarios with consecutive seeds starting at ``config.seed``."""
    return [
        generate_scenario(config.model_copy(update={"seed": config.seed + i}), library)
        for i in range(count)
    ]


def read_scenarios(path: Union[str, Path]) -> List[Scenario]:
    """Read one scenario directory, or every scenario directory directly below ``path``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scenario path not found: {path}")
    if (path / TRACES_FILE).exists() or (path / GROUND_TRUTH_FILE).exists():
        return [read_scenario(path)]
    directories = sorted(
        d for d in path.iterdir()
        if d.is_dir() and ((d / TRACES_FILE).exists() or (d / GROUND_TRUTH_FILE).exists())
    )
    if not directories:
        raise InvalidInputError(f"No scenarios found under {path}")
    return [read_scenario(d) for d in directories]
