"""Tick-synchronous replay of a scenario with kill cascades and damage accrual."""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Union

from ..decision import OnlineDecider
from ..exceptions import InvalidInputError
from ..metrics import ProcessRecord
from ..telemetry.features import Label, ProcessSnapshot
from .archetypes import DamageSpec
from .scenario import Scenario

logger = logging.getLogger("simulator")


class EventKind(str, Enum):
    SPAWN = "spawn"
    SNAPSHOT = "snapshot"
    KILL = "kill"
    EXIT = "exit"


class KillTrigger(str, Enum):
    DIRECT = "direct"
    CASCADE = "cascade"


@dataclass(frozen=True)
class SimulationEvent:
    tick: int
    kind: EventKind
    pid: int
    app_id: str
    trigger: Optional[KillTrigger] = None
    score: Optional[float] = None

    def to_record(self) -> Dict:
        return {
            "tick": self.tick,
            "kind": self.kind.value,
            "pid": self.pid,
            "app_id": self.app_id,
            "trigger": self.trigger.value if self.trigger else None,
            "score": self.score,
        }

    @classmethod
    def from_record(cls, record: Dict) -> "SimulationEvent":
        return cls(
            tick=int(record["tick"]),
            kind=EventKind(record["kind"]),
            pid=int(record["pid"]),
            app_id=record["app_id"],
            trigger=KillTrigger(record["trigger"]) if record.get("trigger") else None,
            score=record.get("score"),
        )


@dataclass
class ProcessNode:
    pid: int
    ppid: Optional[int]
    app_id: str
    label: Label
    birth_tick: int
    end_tick: int
    killed_at: Optional[int] = None
    spawned: bool = False
    exited: bool = False

    def live_at(self, tick: int) -> bool:
        return self.spawned and not self.exited and self.killed_at is None and tick <= self.end_tick

    @property
    def runtime(self) -> int:
        end = self.end_tick if self.killed_at is None else min(self.killed_at, self.end_tick)
        return max(0, end - self.birth_tick)


@dataclass
class SimulationState:
    scenario: Scenario
    clock: int = -1
    nodes: Dict[int, ProcessNode] = field(default_factory=dict)
    events: List[SimulationEvent] = field(default_factory=list)
    files_modified: Dict[str, float] = field(default_factory=dict)
    damage: Dict[str, DamageSpec] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return self.clock >= self.scenario.duration_s

    def live_pids(self) -> List[int]:
        return [pid for pid, node in sorted(self.nodes.items()) if node.live_at(self.clock)]

    def process_records(self) -> List[ProcessRecord]:
        return [
            ProcessRecord(
                process_id=node.pid,
                app_id=node.app_id,
                label=node.label,
                runtime=node.runtime,
                unkilled_duration=node.end_tick - node.birth_tick,
                killed_at=node.killed_at,
                birth_tick=node.birth_tick,
            )
            for _, node in sorted(self.nodes.items())
        ]


def start(scenario: Scenario) -> SimulationState:
    """Fresh state before tick 0."""
    nodes = {
        pid: ProcessNode(p.pid, p.ppid, p.app_id, p.label, p.birth_tick, p.end_tick)
        for pid, p in sorted(scenario.processes.items())
    }
    damage = {app.app_id: app.damage for app in scenario.apps if app.damage is not None}
    return SimulationState(
        scenario=scenario,
        nodes=nodes,
        files_modified={app_id: 0.0 for app_id in damage},
        damage=damage,
    )


def step(state: SimulationState) -> List[ProcessSnapshot]:
    """Advance one tick and return the snapshots of every live process.

    Processes that ended at the previous tick exit, due processes spawn, and
    live malicious processes past their onset delay accrue damage.
    """
    if state.finished:
        raise InvalidInputError(
            f"Scenario already ran its {state.scenario.duration_s} ticks"
        )
    tick = state.clock + 1
    state.clock = tick

    for pid, node in state.nodes.items():
        if node.spawned and not node.exited and node.killed_at is None and node.end_tick < tick:
            node.exited = True
            state.events.append(SimulationEvent(node.end_tick, EventKind.EXIT, pid, node.app_id))

    for pid, node in state.nodes.items():
        if not node.spawned and node.killed_at is None and node.birth_tick == tick:
            node.spawned = True
            state.events.append(SimulationEvent(tick, EventKind.SPAWN, pid, node.app_id))

    snapshots = []
    for pid, node in state.nodes.items():
        if not node.live_at(tick) or tick <= node.birth_tick:
            continue
        process = state.scenario.processes[pid]
        snapshots.append(process.snapshot_at(tick))
        state.events.append(SimulationEvent(tick, EventKind.SNAPSHOT, pid, node.app_id))
        damage = state.damage.get(node.app_id)
        if damage is not None and tick - node.birth_tick > damage.onset_delay_s:
            state.files_modified[node.app_id] += damage.files_per_second
    return snapshots


def kill(
    state: SimulationState,
    pid: int,
    tick: Optional[int] = None,
    score: Optional[float] = None,
) -> SimulationState:
    """Kill ``pid`` and every descendant at ``tick`` (default: the current clock).

    Descendants not yet spawned are marked killed and never spawn. Killing an
    unknown or no longer live pid only logs a warning.
    """
    tick = state.clock if tick is None else tick
    node = state.nodes.get(pid)
    if node is None or not node.live_at(tick):
        message = f"Kill of pid {pid} at tick {tick} ignored: process is not live"
        state.warnings.append(message)
        logger.warning(message)
        return state

    node.killed_at = tick
    state.events.append(SimulationEvent(tick, EventKind.KILL, pid, node.app_id, KillTrigger.DIRECT, score))
    for child_pid in state.scenario.descendants(pid):
        child = state.nodes[child_pid]
        pending = not child.spawned
        if child.killed_at is not None or child.exited or (not pending and child.end_tick < tick):
            continue
        child.killed_at = tick
        state.events.append(SimulationEvent(tick, EventKind.KILL, child_pid, child.app_id, KillTrigger.CASCADE))
    logger.debug(f"Killed pid {pid} ({node.app_id}) at tick {tick}")
    return state


def finish(state: SimulationState) -> SimulationState:
    """Log exits of processes that ran to their natural end."""
    for pid, node in state.nodes.items():
        if node.spawned and not node.exited and node.killed_at is None and node.end_tick <= state.clock:
            node.exited = True
            state.events.append(SimulationEvent(node.end_tick, EventKind.EXIT, pid, node.app_id))
    return state


def unkilled_damage(scenario: Scenario) -> Dict[str, float]:
    """Files each damaging app would modify if nothing were killed."""
    totals = {app.app_id: 0.0 for app in scenario.apps if app.damage is not None}
    for process in scenario.processes.values():
        if process.app_id in totals:
            damage = scenario.app(process.app_id).damage
            totals[process.app_id] += damage.files_for(process.unkilled_duration)
    return totals


@dataclass
class RunResult:
    """Everything one detector-in-the-loop replay produced."""

    detector: str
    threshold: float
    events: List[SimulationEvent]
    records: List[ProcessRecord]
    files_modified: Dict[str, float]
    baseline_files_modified: Dict[str, float]
    warnings: List[str] = field(default_factory=list)

    @property
    def total_files_modified(self) -> float:
        return float(sum(self.files_modified.values()))

    @property
    def total_baseline_files(self) -> float:
        return float(sum(self.baseline_files_modified.values()))

    @property
    def damage_reduction(self) -> float:
        """Fraction of unkilled-baseline damage prevented."""
        baseline = self.total_baseline_files
        if baseline == 0:
            return 0.0
        return 1.0 - self.total_files_modified / baseline

    def snapshot_events(self) -> List[SimulationEvent]:
        return [e for e in self.events if e.kind is EventKind.SNAPSHOT]

    def kill_events(self) -> List[SimulationEvent]:
        return [e for e in self.events if e.kind is EventKind.KILL]

    def write_events(self, path: Union[str, Path]) -> None:
        write_events(self.events, path)


def write_events(events: List[SimulationEvent], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event.to_record(), sort_keys=True))
            fh.write("\n")


def read_events(path: Union[str, Path]) -> List[SimulationEvent]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Event log not found: {path}")
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                events.append(SimulationEvent.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise InvalidInputError(f"Malformed event at line {line_number}: {e}") from e
    return events


def run_with_detector(
    scenario: Scenario,
    detector,
    threshold: Optional[float] = None,
) -> RunResult:
    """Replay ``scenario`` with ``detector`` killing on online verdicts.

    Per tick: step, score every snapshot, decide, kill (cascading) in pid
    order. All kills of tick t land before tick t+1 is stepped.
    """
    threshold = detector.threshold if threshold is None else threshold
    decider = OnlineDecider(threshold)
    detector.reset()
    state = start(scenario)

    while not state.finished:
        snapshots = step(state)
        tick = state.clock
        scores = detector.score_batch(snapshots) if snapshots else {}
        fired = []
        for pid in sorted(scores):
            verdict = decider.observe(pid, tick, scores[pid])
            if verdict is not None:
                fired.append(verdict)
        for verdict in fired:
            if state.nodes[verdict.process_id].live_at(tick):
                kill(state, verdict.process_id, tick, score=verdict.score)
        for pid, node in state.nodes.items():
            if node.spawned and (node.killed_at == tick or node.end_tick == tick):
                detector.forget(pid)
    finish(state)

    result = RunResult(
        detector=detector.name,
        threshold=float(threshold),
        events=state.events,
        records=state.process_records(),
        files_modified=dict(state.files_modified),
        baseline_files_modified=unkilled_damage(scenario),
        warnings=list(state.warnings),
    )
    kills = len(result.kill_events())
    logger.info(
        f"{detector.name} at θ={threshold:.3f}: {kills} kills, "
        f"{result.total_files_modified:.0f}/{result.total_baseline_files:.0f} files modified"
    )
    return result
