"""Class-balanced window sampling and Adam training of the GRU classifier."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..exceptions import InvalidInputError
from ..telemetry.features import ProcessTrace
from ..telemetry.normalization import NormalizationStats, compute_stats, normalize
from .gru import GruClassifier, build_windows
from .hyperparameters import Hyperparameters
from .losses import LossFunction
from .optim import AdamState, adam_step

logger = logging.getLogger("model.training")


@dataclass
class WindowSet:
    """Windows with their labels and normalized time left."""

    windows: np.ndarray
    labels: np.ndarray
    time_left: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, indices: np.ndarray) -> "WindowSet":
        return WindowSet(self.windows[indices], self.labels[indices], self.time_left[indices])

    @classmethod
    def concatenate(cls, parts: Sequence["WindowSet"]) -> "WindowSet":
        return cls(
            np.concatenate([p.windows for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.time_left for p in parts]),
        )


def build_window_set(
    traces: Sequence[ProcessTrace],
    stats: NormalizationStats,
    window_size: int,
) -> WindowSet:
    """One window per snapshot of every trace."""
    windows, labels, time_left = [], [], []
    for trace in traces:
        if not trace.snapshots:
            continue
        windows.append(build_windows(normalize(trace.feature_matrix(), stats), window_size))
        labels.append(np.full(len(trace.snapshots), float(trace.y)))
        time_left.append(trace.time_left())
    if not windows:
        return WindowSet(np.zeros((0, window_size, stats.mean.shape[0])), np.zeros(0), np.zeros(0))
    return WindowSet(np.concatenate(windows), np.concatenate(labels), np.concatenate(time_left))


def balance_classes(
    window_set: WindowSet,
    rng: np.random.Generator,
    cap: Optional[int] = None,
) -> WindowSet:
    """Draw ``cap`` windows per class; default cap is the smaller class size.

    Sampling is without replacement unless the cap exceeds the class size.
    """
    benign = np.flatnonzero(window_set.labels == 0)
    malicious = np.flatnonzero(window_set.labels == 1)
    if not len(benign) or not len(malicious):
        raise InvalidInputError(
            f"Training data needs both classes, got {len(benign)} benign and "
            f"{len(malicious)} malicious windows"
        )
    per_class = cap if cap is not None else min(len(benign), len(malicious))
    chosen = []
    for indices in (benign, malicious):
        replace = per_class > len(indices)
        chosen.append(rng.choice(indices, size=per_class, replace=replace))
    return window_set.take(np.concatenate(chosen))


class Trainer:
    """Minimizes the configured loss over a balanced window set with Adam.

    ``history`` holds the mean training loss of every epoch.
    """

    def __init__(self, hyperparameters: Hyperparameters, stats: Optional[NormalizationStats] = None):
        self.hyperparameters = hyperparameters
        self.stats = stats
        self.loss = LossFunction(
            kind=hyperparameters.loss_kind,
            variant=hyperparameters.loss_variant,
            rounding=hyperparameters.rounding,
            sharpness=hyperparameters.sharpness,
        )
        self.history: List[float] = []
        self.model: Optional[GruClassifier] = None

    def fit(self, traces: Sequence[ProcessTrace]) -> GruClassifier:
        hp = self.hyperparameters
        stats = self.stats if self.stats is not None else compute_stats(traces)
        self.stats = stats

        all_windows = build_window_set(traces, stats, hp.window_size)
        rng = np.random.default_rng([hp.seed, 1])
        data = balance_classes(all_windows, rng, hp.class_cap)
        logger.info(
            f"Training on {len(data)} balanced windows ({len(all_windows)} available), "
            f"{hp.depth}x{hp.hidden_neurons} GRU, window {hp.window_size}, {self.loss}"
        )

        model = GruClassifier.initialize(hp, stats)
        adam = AdamState.for_params(model.params, hp.beta1, hp.beta2, hp.epsilon)
        self.history = []

        for epoch in range(hp.epochs):
            order = rng.permutation(len(data))
            total = 0.0
            for start in range(0, len(order), hp.batch_size):
                batch = data.take(order[start:start + hp.batch_size])
                cache = model.forward(batch.windows, training=True, rng=rng)
                total += self.loss.value(cache.scores, batch.labels, batch.time_left) * len(batch)
                d_scores = self.loss.grad(cache.scores, batch.labels, batch.time_left)
                grads = model.backward(cache, d_scores)
                adam_step(model.params, grads, adam, hp.learning_rate)
            self.history.append(total / len(data))
            logger.debug(f"Epoch {epoch + 1}/{hp.epochs}: loss {self.history[-1]:.6f}")

        if self.history:
            logger.info(f"Finished training, final loss {self.history[-1]:.6f}")
        self.model = model
        return model


def train(
    traces: Sequence[ProcessTrace],
    hyperparameters: Hyperparameters,
    stats: Optional[NormalizationStats] = None,
) -> GruClassifier:
    """Train a GRU classifier with θ = 0.5."""
    return Trainer(hyperparameters, stats).fit(traces)
