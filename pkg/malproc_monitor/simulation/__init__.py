"""Scenario generator and detector-in-the-loop replay."""

from .archetypes import AppArchetype, ArchetypeLibrary, DamageSpec, ProcessTemplate, load_library
from .engine import (
    EventKind,
    KillTrigger,
    RunResult,
    SimulationEvent,
    SimulationState,
    finish,
    kill,
    read_events,
    run_with_detector,
    start,
    step,
    write_events,
)
from .scenario import (
    GroundTruth,
    Scenario,
    ScenarioConfig,
    generate_scenario,
    read_scenario,
    read_scenarios,
    scenario_suite,
    write_scenario,
)

__all__ = [
    "AppArchetype",
    "ArchetypeLibrary",
    "DamageSpec",
    "ProcessTemplate",
    "load_library",
    "EventKind",
    "KillTrigger",
    "RunResult",
    "SimulationEvent",
    "SimulationState",
    "finish",
    "kill",
    "read_events",
    "run_with_detector",
    "start",
    "step",
    "write_events",
    "GroundTruth",
    "Scenario",
    "ScenarioConfig",
    "generate_scenario",
    "read_scenario",
    "read_scenarios",
    "scenario_suite",
    "write_scenario",
]
