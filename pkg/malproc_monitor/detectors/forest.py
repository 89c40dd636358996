"""Snapshot-only forest detector."""

from typing import Dict, Optional, Sequence

import numpy as np

from ..models.forest import ForestClassifier
from ..telemetry.features import ProcessSnapshot
from .base import BaseDetector


class ForestDetector(BaseDetector):
    """Stateless: every score is the forest's 0/1 vote on the newest raw snapshot."""

    def __init__(self, forest: ForestClassifier, name: str = "forest", threshold: Optional[float] = None):
        super().__init__(name, forest.threshold if threshold is None else threshold)
        self.forest = forest

    def score_batch(self, snapshots: Sequence[ProcessSnapshot]) -> Dict[int, float]:
        if not snapshots:
            return {}
        predictions = self.forest.predict(np.stack([s.as_array() for s in snapshots]))
        return {s.process_id: float(p) for s, p in zip(snapshots, predictions)}
