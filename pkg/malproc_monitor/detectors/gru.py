"""Windowed GRU detector."""

from collections import deque
from typing import Deque, Dict, Optional, Sequence

import numpy as np

from ..models.gru import GruClassifier, pad_window
from ..telemetry.features import ProcessSnapshot
from ..telemetry.normalization import normalize
from .base import BaseDetector


class GruDetector(BaseDetector):
    """Keeps the last window_size normalized rows of every process."""

    def __init__(self, model: GruClassifier, name: str = "gru", threshold: Optional[float] = None):
        super().__init__(name, model.threshold if threshold is None else threshold)
        self.model = model
        self._history: Dict[int, Deque[np.ndarray]] = {}

    def reset(self) -> None:
        self._history.clear()

    def forget(self, process_id: int) -> None:
        self._history.pop(process_id, None)

    def score_batch(self, snapshots: Sequence[ProcessSnapshot]) -> Dict[int, float]:
        if not snapshots:
            return {}
        window_size = self.model.window_size
        windows = []
        for snapshot in snapshots:
            history = self._history.setdefault(snapshot.process_id, deque(maxlen=window_size))
            history.append(normalize(snapshot.as_array(), self.model.stats))
            windows.append(pad_window(np.asarray(history), window_size))
        scores = self.model.predict_windows(np.stack(windows))
        return {s.process_id: float(score) for s, score in zip(snapshots, scores)}
