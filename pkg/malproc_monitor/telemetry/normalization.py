"""Feature normalization using training-split statistics."""

from dataclasses import dataclass
from typing import Any, Dict, Iterable

import numpy as np

from ..exceptions import InvalidInputError
from .features import FEATURE_COUNT, ProcessTrace


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature mean and (guarded) population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != (FEATURE_COUNT,) or std.shape != (FEATURE_COUNT,):
            raise InvalidInputError(
                f"Normalization stats need {FEATURE_COUNT} means and stds, "
                f"got {mean.shape} and {std.shape}"
            )
        if np.any(std <= 0):
            raise InvalidInputError("Normalization std entries must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormalizationStats":
        return cls(mean=np.asarray(data["mean"]), std=np.asarray(data["std"]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NormalizationStats):
            return NotImplemented
        return bool(np.array_equal(self.mean, other.mean) and np.array_equal(self.std, other.std))


def compute_stats(training_traces: Iterable[ProcessTrace]) -> NormalizationStats:
    """Compute μ and σ over every snapshot of every training trace.

    Zero-variance features get σ = 1 so they stay at 0 after centering.
    """
    matrices = [trace.feature_matrix() for trace in training_traces]
    matrices = [m for m in matrices if len(m)]
    if not matrices:
        raise InvalidInputError("no training data")

    data = np.concatenate(matrices, axis=0)
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    std[std == 0] = 1.0
    return NormalizationStats(mean=mean, std=std)


def normalize(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """(v - μ) / σ; accepts a single vector or a stack of them."""
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


def denormalize(values: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * stats.std + stats.mean
