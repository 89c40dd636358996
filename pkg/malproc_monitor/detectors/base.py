"""Base class for online detectors."""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Sequence

from ..exceptions import ConfigurationError
from ..telemetry.features import ProcessSnapshot


class BaseDetector(ABC):
    """Scores the snapshots of one tick, keeping whatever per-process history it needs."""

    def __init__(self, name: str, threshold: float = 0.5):
        """Initialize detector.

        Args:
            name: Label used in logs and reports
            threshold: Decision threshold θ applied to this detector's scores
        """
        self.name = name
        self.threshold = threshold
        self.logger = logging.getLogger(f"detector.{name}")

    @property
    def threshold(self) -> float:
        return self._threshold

    @threshold.setter
    def threshold(self, value: float):
        if not 0.0 <= value <= 1.0:
            raise ConfigurationError(f"Decision threshold must lie in [0, 1], got {value}")
        self._threshold = float(value)

    @abstractmethod
    def score_batch(self, snapshots: Sequence[ProcessSnapshot]) -> Dict[int, float]:
        """Score every snapshot of one tick.

        Args:
            snapshots: At most one snapshot per process, all from the same tick

        Returns:
            Score in [0, 1] per process id
        """
        pass

    def reset(self) -> None:
        """Drop all per-process history."""

    def forget(self, process_id: int) -> None:
        """Drop the history of a process that exited or was killed."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, threshold={self.threshold})"
