"""Distilling a calibrated GRU into a snapshot-only forest."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InvalidInputError
from ..telemetry.features import ProcessTrace
from .forest import ForestClassifier, ForestConfig, train_forest
from .gru import GruClassifier

logger = logging.getLogger("model.distillation")


@dataclass
class SnapshotDataset:
    """Raw snapshot features with one 0/1 label each."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def subsample(self, fraction: Optional[float], seed: int) -> "SnapshotDataset":
        if fraction is None or fraction >= 1.0 or not len(self):
            return self
        rng = np.random.default_rng([seed, 2])
        keep = np.sort(rng.choice(len(self), size=max(1, int(round(fraction * len(self)))), replace=False))
        return SnapshotDataset(self.features[keep], self.labels[keep])


def _stack(traces: Sequence[ProcessTrace], labels: Sequence[np.ndarray]) -> SnapshotDataset:
    rows = [t.feature_matrix() for t in traces if t.snapshots]
    if not rows:
        return SnapshotDataset(np.zeros((0, 0)), np.zeros(0, dtype=np.int64))
    return SnapshotDataset(np.concatenate(rows), np.concatenate(list(labels)).astype(np.int64))


def teacher_label(teacher: GruClassifier, traces: Sequence[ProcessTrace]) -> SnapshotDataset:
    """Pair each window's newest raw snapshot with the teacher's decision (score > θ)."""
    labels = [
        (teacher.score_trace(trace) > teacher.threshold).astype(np.int64)
        for trace in traces
        if trace.snapshots
    ]
    dataset = _stack(traces, labels)
    logger.debug(f"Teacher labeled {int(dataset.labels.sum())}/{len(dataset)} snapshots malicious")
    return dataset


def ground_truth_labels(traces: Sequence[ProcessTrace]) -> SnapshotDataset:
    """Every snapshot labeled with its application's ground truth."""
    labels = [np.full(len(trace.snapshots), trace.y) for trace in traces if trace.snapshots]
    return _stack(traces, labels)


def agreement(
    student: ForestClassifier,
    teacher: GruClassifier,
    traces: Sequence[ProcessTrace],
) -> float:
    """Share of snapshots where student and teacher decisions match."""
    reference = teacher_label(teacher, traces)
    if not len(reference):
        raise InvalidInputError("No held-out snapshots to measure agreement on")
    return float(np.mean(student.predict(reference.features) == reference.labels))


def distill(
    teacher: GruClassifier,
    training_traces: Sequence[ProcessTrace],
    config: Optional[ForestConfig] = None,
    holdout_traces: Optional[Sequence[ProcessTrace]] = None,
) -> ForestClassifier:
    """Train a forest on the teacher's thresholded decisions.

    Teacher-student agreement on ``holdout_traces`` is stored in the forest
    metadata.
    """
    config = config or ForestConfig()
    dataset = teacher_label(teacher, training_traces).subsample(config.subsample, config.seed)
    if not len(dataset):
        raise InvalidInputError("No training snapshots to distill from")
    if len(np.unique(dataset.labels)) < 2:
        logger.warning("Teacher decisions hold a single class; training a constant student")
        config = config.model_copy(update={"allow_single_class": True})

    student = train_forest(dataset.features, dataset.labels, config)
    student.metadata.update({
        "kind": "distilled",
        "teacher_threshold": teacher.threshold,
        "training_snapshots": len(dataset),
        "teacher_positive_rate": float(dataset.labels.mean()),
    })
    if holdout_traces:
        score = agreement(student, teacher, holdout_traces)
        student.metadata["teacher_agreement"] = score
        logger.info(f"Student agrees with teacher on {score:.2%} of held-out snapshots")
    return student


def train_forest_direct(
    training_traces: Sequence[ProcessTrace],
    config: Optional[ForestConfig] = None,
) -> ForestClassifier:
    """Baseline forest trained on ground-truth application labels."""
    config = config or ForestConfig()
    dataset = ground_truth_labels(training_traces).subsample(config.subsample, config.seed)
    if not len(dataset):
        raise InvalidInputError("No training snapshots")
    forest = train_forest(dataset.features, dataset.labels, config)
    forest.metadata.update({"kind": "direct", "training_snapshots": len(dataset)})
    return forest


def split_holdout(
    traces: Sequence[ProcessTrace],
    fraction: float,
    seed: int,
) -> Tuple[list, list]:
    """Split traces into (training, held-out) by whole process."""
    if not 0.0 <= fraction < 1.0:
        raise InvalidInputError("Holdout fraction must lie in [0, 1)")
    order = np.random.default_rng([seed, 3]).permutation(len(traces))
    cut = int(round(len(traces) * (1.0 - fraction)))
    return [traces[i] for i in sorted(order[:cut])], [traces[i] for i in sorted(order[cut:])]
