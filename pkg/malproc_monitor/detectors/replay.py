"""Baseline and cached-score detectors."""

from typing import Dict, Mapping, Optional, Sequence

from ..decision import SweepResult, threshold_sweep
from ..metrics import build_report
from ..simulation.engine import run_with_detector, start, step
from ..telemetry.features import ProcessSnapshot
from .base import BaseDetector


class NeverFireDetector(BaseDetector):
    """Scores everything 0: the no-intervention baseline."""

    def __init__(self, name: str = "never-fire", threshold: float = 0.5):
        super().__init__(name, threshold)

    def score_batch(self, snapshots: Sequence[ProcessSnapshot]) -> Dict[int, float]:
        return {s.process_id: 0.0 for s in snapshots}


class PrecomputedDetector(BaseDetector):
    """Serves scores recorded from another detector, keyed by pid and tick.

    Scores of a process depend only on its own history, so one unkilled pass
    serves every threshold of a sweep.
    """

    def __init__(self, scores: Mapping[int, Mapping[int, float]], name: str = "precomputed",
                 threshold: float = 0.5):
        super().__init__(name, threshold)
        self.scores = {pid: dict(by_tick) for pid, by_tick in scores.items()}

    @classmethod
    def record(cls, detector: BaseDetector, scenario) -> "PrecomputedDetector":
        """Replay ``scenario`` without kills and record every score of ``detector``."""
        scores: Dict[int, Dict[int, float]] = {}
        detector.reset()
        state = start(scenario)
        while not state.finished:
            snapshots = step(state)
            for pid, score in detector.score_batch(snapshots).items():
                scores.setdefault(pid, {})[state.clock] = score
            for pid, node in state.nodes.items():
                if node.spawned and node.end_tick == state.clock:
                    detector.forget(pid)
        detector.reset()
        return cls(scores, name=detector.name, threshold=detector.threshold)

    def score_batch(self, snapshots: Sequence[ProcessSnapshot]) -> Dict[int, float]:
        return {s.process_id: self.scores[s.process_id][s.tick] for s in snapshots}


def calibrate(
    detector: BaseDetector,
    scenarios: Sequence,
    grid: Optional[Sequence[float]] = None,
    split: str = "validation",
) -> SweepResult:
    """Sweep θ over validation scenarios with kills in the loop.

    Scores are recorded once per scenario and replayed at every θ.
    """
    recorded = [PrecomputedDetector.record(detector, scenario) for scenario in scenarios]
    truths = [scenario.ground_truth() for scenario in scenarios]

    def validation_run(threshold: float):
        runs = [
            (run_with_detector(scenario, replay, threshold).events, truth)
            for scenario, replay, truth in zip(scenarios, recorded, truths)
        ]
        return build_report(split, detector.name, runs, threshold=threshold)

    return threshold_sweep(validation_run, grid)
