"""Verdicts from window scores: offline mean rule, online first crossing, θ sweep."""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import ConfigurationError, InvalidInputError

logger = logging.getLogger("decision")

SWEEP_COLUMNS = ["threshold", "fpr", "fnr_over_time", "combined"]
DEFAULT_GRID_STEPS = 51


class Decision(str, Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"


class Trigger(str, Enum):
    OFFLINE_MEAN = "offline_mean"
    ONLINE_SINGLE_WINDOW = "online_single_window"


@dataclass(frozen=True)
class ProcessVerdict:
    process_id: Optional[int]
    decision: Decision
    decided_at_tick: Optional[int]
    trigger: Trigger
    score: float = 0.0

    @property
    def is_malicious(self) -> bool:
        return self.decision is Decision.MALICIOUS


def _check_threshold(threshold: float) -> float:
    if not 0.0 <= threshold <= 1.0:
        raise ConfigurationError(f"Decision threshold must lie in [0, 1], got {threshold}")
    return float(threshold)


def offline_verdict(
    scores: Sequence[float],
    threshold: float,
    process_id: Optional[int] = None,
    final_tick: Optional[int] = None,
) -> ProcessVerdict:
    """Malicious iff the mean window score of the complete trace exceeds θ."""
    threshold = _check_threshold(threshold)
    values = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not len(values):
        raise InvalidInputError("offline verdict needs at least one window score")
    mean = float(values.mean())
    return ProcessVerdict(
        process_id=process_id,
        decision=Decision.MALICIOUS if mean > threshold else Decision.BENIGN,
        decided_at_tick=final_tick,
        trigger=Trigger.OFFLINE_MEAN,
        score=mean,
    )


def online_verdict(
    stream: Iterable[Union[float, Tuple[int, float]]],
    threshold: float,
    process_id: Optional[int] = None,
) -> Optional[ProcessVerdict]:
    """First tick whose score exceeds θ, or None when the stream never crosses.

    ``stream`` yields either bare scores (tick = position) or (tick, score) pairs.
    """
    threshold = _check_threshold(threshold)
    for position, item in enumerate(stream):
        tick, score = item if isinstance(item, tuple) else (position, item)
        if score > threshold:
            return ProcessVerdict(
                process_id=process_id,
                decision=Decision.MALICIOUS,
                decided_at_tick=int(tick),
                trigger=Trigger.ONLINE_SINGLE_WINDOW,
                score=float(score),
            )
    return None


class OnlineDecider:
    """Online verdicts for many processes fed one tick at a time.

    A malicious verdict is final: later scores of that process are ignored.
    """

    def __init__(self, threshold: float):
        self.threshold = _check_threshold(threshold)
        self.verdicts: Dict[int, ProcessVerdict] = {}

    def observe(self, process_id: int, tick: int, score: float) -> Optional[ProcessVerdict]:
        """Return a new verdict when this score is the process's first crossing."""
        if process_id in self.verdicts:
            return None
        if score > self.threshold:
            verdict = ProcessVerdict(
                process_id=process_id,
                decision=Decision.MALICIOUS,
                decided_at_tick=tick,
                trigger=Trigger.ONLINE_SINGLE_WINDOW,
                score=float(score),
            )
            self.verdicts[process_id] = verdict
            return verdict
        return None

    def forget(self, process_id: int):
        """Drop a process whose pid may be reused."""
        self.verdicts.pop(process_id, None)


def default_grid(steps: int = DEFAULT_GRID_STEPS) -> np.ndarray:
    """Evenly spaced thresholds over [0.5, 1.0]."""
    if steps < 1:
        raise ConfigurationError("Sweep grid needs at least one step")
    if steps == 1:
        return np.array([0.5])
    return np.linspace(0.5, 1.0, steps)


@dataclass
class SweepResult:
    """One row per threshold plus the selected best threshold."""

    table: pd.DataFrame
    best_threshold: float

    @property
    def best_row(self) -> pd.Series:
        return self.table.loc[self.table["threshold"] == self.best_threshold].iloc[0]

    def to_csv(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.table.to_csv(path, index=False, float_format="%.6f")


def threshold_sweep(
    validation_run: Callable[[float], object],
    grid: Optional[Sequence[float]] = None,
) -> SweepResult:
    """Replay validation at every θ and pick the lowest combined score.

    ``validation_run(θ)`` returns anything with ``fpr`` and ``fnr_over_time``
    attributes (an EvaluationReport). Ties go to the larger θ.
    """
    thresholds = np.asarray(default_grid() if grid is None else grid, dtype=np.float64).reshape(-1)
    if not len(thresholds):
        raise ConfigurationError("Sweep grid must not be empty")
    if np.any(thresholds < 0.5) or np.any(thresholds > 1.0):
        raise ConfigurationError("Sweep thresholds must lie in [0.5, 1.0]")
    thresholds = np.unique(thresholds)

    rows = []
    for threshold in thresholds:
        report = validation_run(float(threshold))
        fpr = float(report.fpr)
        fnr_over_time = float(report.fnr_over_time)
        combined = (fpr + fnr_over_time) / 2.0
        rows.append({
            "threshold": float(threshold),
            "fpr": fpr,
            "fnr_over_time": fnr_over_time,
            "combined": combined,
        })
        logger.debug(f"θ={threshold:.4f}: FPR {fpr:.4f}, FNR over time {fnr_over_time:.4f}")

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    best_combined = table["combined"].min()
    best = float(table.loc[table["combined"] == best_combined, "threshold"].max())
    logger.info(f"Best threshold {best:.4f} (combined {best_combined:.4f})")
    return SweepResult(table=table, best_threshold=best)
