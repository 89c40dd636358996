"""Windowed GRU classifier implemented with numpy.

Per step and layer::

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_h x + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * h~

Stacked layers feed h' upward, the score is sigmoid(w . h_final + b).
Dropout is applied to the outputs of non-final layers during training only.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..exceptions import ConfigurationError, InvalidInputError
from ..telemetry.features import FEATURE_COUNT, ProcessTrace
from ..telemetry.normalization import NormalizationStats, normalize
from .hyperparameters import Hyperparameters

logger = logging.getLogger("model.gru")

FORMAT_TAG = "malproc-gru/1"
GATES = ("z", "r", "h")
# Logits are clipped so scores stay strictly inside (0, 1).
LOGIT_LIMIT = 30.0
SCORE_CHUNK = 4096

Params = Dict[str, np.ndarray]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def build_windows(rows: np.ndarray, window_size: int) -> np.ndarray:
    """Every window of ``rows`` ending at each position, front-zero-padded.

    Returns an array of shape (n_rows, window_size, n_features) ordered
    oldest to newest within each window.
    """
    rows = np.asarray(rows, dtype=np.float64)
    n, width = rows.shape
    padded = np.concatenate([np.zeros((window_size - 1, width)), rows], axis=0)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (window_size, width))
    return np.ascontiguousarray(windows[:n, 0])


def pad_window(rows: np.ndarray, window_size: int) -> np.ndarray:
    """Most recent ``window_size`` rows, zero-padded at the front."""
    rows = np.asarray(rows, dtype=np.float64)[-window_size:]
    if len(rows) == window_size:
        return rows
    pad = np.zeros((window_size - len(rows), rows.shape[1] if rows.ndim == 2 else FEATURE_COUNT))
    return np.concatenate([pad, rows.reshape(-1, pad.shape[1])], axis=0)


@dataclass
class ForwardCache:
    """Intermediate values kept for backpropagation."""

    inputs: List[np.ndarray]
    steps: List[List[Tuple[np.ndarray, ...]]]
    masks: List[Optional[np.ndarray]]
    h_final: np.ndarray
    scores: np.ndarray
    clipped: np.ndarray


class GruClassifier:
    """GRU weights plus normalization stats, window size and decision threshold."""

    def __init__(
        self,
        params: Params,
        hyperparameters: Hyperparameters,
        stats: NormalizationStats,
        threshold: float = 0.5,
        input_size: int = FEATURE_COUNT,
    ):
        if not 0.0 <= threshold <= 1.0:
            raise ConfigurationError(f"Decision threshold must lie in [0, 1], got {threshold}")
        self.params = params
        self.hyperparameters = hyperparameters
        self.stats = stats
        self.threshold = float(threshold)
        self.input_size = input_size
        self._check_shapes()

    @classmethod
    def initialize(
        cls,
        hyperparameters: Hyperparameters,
        stats: NormalizationStats,
        input_size: int = FEATURE_COUNT,
        rng: Optional[np.random.Generator] = None,
    ) -> "GruClassifier":
        """Uniform(-1/sqrt(H), 1/sqrt(H)) initialization, seeded from the hyperparameters."""
        rng = rng if rng is not None else np.random.default_rng(hyperparameters.seed)
        hidden = hyperparameters.hidden_neurons
        bound = 1.0 / np.sqrt(hidden)
        params: Params = {}
        for layer in range(hyperparameters.depth):
            fan_in = input_size if layer == 0 else hidden
            for gate in GATES:
                params[f"gru{layer}.W_{gate}"] = rng.uniform(-bound, bound, (hidden, fan_in))
                params[f"gru{layer}.U_{gate}"] = rng.uniform(-bound, bound, (hidden, hidden))
                params[f"gru{layer}.b_{gate}"] = rng.uniform(-bound, bound, hidden)
        params["out.w"] = rng.uniform(-bound, bound, hidden)
        params["out.b"] = rng.uniform(-bound, bound, 1)
        return cls(params, hyperparameters, stats, threshold=0.5, input_size=input_size)

    @property
    def hidden_size(self) -> int:
        return int(self.params["out.w"].shape[0])

    @property
    def depth(self) -> int:
        return sum(1 for name in self.params if name.endswith(".W_z"))

    @property
    def window_size(self) -> int:
        return self.hyperparameters.window_size

    def _check_shapes(self):
        hidden = self.hidden_size
        depth = self.depth
        if depth != self.hyperparameters.depth or hidden != self.hyperparameters.hidden_neurons:
            raise ConfigurationError(
                f"Parameters describe depth {depth} x {hidden} units but hyperparameters "
                f"say {self.hyperparameters.depth} x {self.hyperparameters.hidden_neurons}"
            )
        for layer in range(depth):
            fan_in = self.input_size if layer == 0 else hidden
            for gate in GATES:
                expected = {
                    f"gru{layer}.W_{gate}": (hidden, fan_in),
                    f"gru{layer}.U_{gate}": (hidden, hidden),
                    f"gru{layer}.b_{gate}": (hidden,),
                }
                for name, shape in expected.items():
                    if name not in self.params or self.params[name].shape != shape:
                        actual = self.params[name].shape if name in self.params else None
                        raise ConfigurationError(f"Parameter {name} has shape {actual}, expected {shape}")
        if self.params["out.b"].shape != (1,):
            raise ConfigurationError("Output bias must have shape (1,)")

    def copy(self) -> "GruClassifier":
        return GruClassifier(
            {name: value.copy() for name, value in self.params.items()},
            self.hyperparameters.model_copy(),
            self.stats,
            self.threshold,
            self.input_size,
        )

    # Forward / backward

    def forward(
        self,
        windows: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> ForwardCache:
        """Score a batch of normalized windows of shape (B, window_size, input_size)."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 2:
            windows = windows[None]
        if windows.ndim != 3 or windows.shape[1:] != (self.window_size, self.input_size):
            raise ConfigurationError(
                f"Expected windows of shape (B, {self.window_size}, {self.input_size}), "
                f"got {windows.shape}"
            )
        batch, steps, _ = windows.shape
        hidden = self.hidden_size
        rate = self.hyperparameters.dropout_rate
        use_dropout = training and rate > 0
        if use_dropout and rng is None:
            raise ConfigurationError("Dropout during training needs a random generator")

        layer_input = windows
        inputs, all_steps, masks = [], [], []
        for layer in range(self.depth):
            p = self.params
            W = {g: p[f"gru{layer}.W_{g}"] for g in GATES}
            U = {g: p[f"gru{layer}.U_{g}"] for g in GATES}
            b = {g: p[f"gru{layer}.b_{g}"] for g in GATES}
            projected = {g: layer_input @ W[g].T + b[g] for g in GATES}

            h = np.zeros((batch, hidden))
            outputs = np.empty((batch, steps, hidden))
            step_cache = []
            for s in range(steps):
                z = _sigmoid(projected["z"][:, s] + h @ U["z"].T)
                r = _sigmoid(projected["r"][:, s] + h @ U["r"].T)
                rh = r * h
                c = np.tanh(projected["h"][:, s] + rh @ U["h"].T)
                step_cache.append((h, z, r, rh, c))
                h = (1.0 - z) * h + z * c
                outputs[:, s] = h

            inputs.append(layer_input)
            all_steps.append(step_cache)
            last_layer = layer == self.depth - 1
            if use_dropout and not last_layer:
                mask = (rng.random(outputs.shape) >= rate) / (1.0 - rate)
                masks.append(mask)
                layer_input = outputs * mask
            else:
                masks.append(None)
                layer_input = outputs

        h_final = layer_input[:, -1]
        logits = h_final @ self.params["out.w"] + self.params["out.b"][0]
        clipped = np.abs(logits) >= LOGIT_LIMIT
        scores = _sigmoid(np.clip(logits, -LOGIT_LIMIT, LOGIT_LIMIT))
        return ForwardCache(inputs, all_steps, masks, h_final, scores, clipped)

    def backward(self, cache: ForwardCache, d_scores: np.ndarray) -> Params:
        """Gradients of a loss w.r.t. every parameter given dL/dscore per window."""
        p = self.params
        grads: Params = {name: np.zeros_like(value) for name, value in p.items()}
        scores = cache.scores
        d_logits = np.asarray(d_scores, dtype=np.float64) * scores * (1.0 - scores)
        d_logits = np.where(cache.clipped, 0.0, d_logits)

        grads["out.w"] = cache.h_final.T @ d_logits
        grads["out.b"] = np.array([d_logits.sum()])

        batch, steps = cache.inputs[0].shape[:2]
        hidden = self.hidden_size
        d_outputs = np.zeros((batch, steps, hidden))
        d_outputs[:, -1] = np.outer(d_logits, p["out.w"])

        for layer in reversed(range(self.depth)):
            if cache.masks[layer] is not None:
                d_outputs = d_outputs * cache.masks[layer]
            U = {g: p[f"gru{layer}.U_{g}"] for g in GATES}
            W = {g: p[f"gru{layer}.W_{g}"] for g in GATES}
            layer_input = cache.inputs[layer]
            d_pre = {g: np.empty((batch, steps, hidden)) for g in GATES}

            d_h_next = np.zeros((batch, hidden))
            for s in reversed(range(steps)):
                h_prev, z, r, rh, c = cache.steps[layer][s]
                d_h = d_outputs[:, s] + d_h_next
                d_z = d_h * (c - h_prev)
                d_c = d_h * z
                d_h_prev = d_h * (1.0 - z)

                d_ac = d_c * (1.0 - c * c)
                grads[f"gru{layer}.U_h"] += d_ac.T @ rh
                d_rh = d_ac @ U["h"]
                d_r = d_rh * h_prev
                d_h_prev += d_rh * r

                d_az = d_z * z * (1.0 - z)
                d_ar = d_r * r * (1.0 - r)
                grads[f"gru{layer}.U_z"] += d_az.T @ h_prev
                grads[f"gru{layer}.U_r"] += d_ar.T @ h_prev
                d_h_prev += d_az @ U["z"] + d_ar @ U["r"]

                d_pre["z"][:, s] = d_az
                d_pre["r"][:, s] = d_ar
                d_pre["h"][:, s] = d_ac
                d_h_next = d_h_prev

            d_inputs = np.zeros_like(layer_input)
            for g in GATES:
                grads[f"gru{layer}.W_{g}"] += np.einsum("bsh,bsd->hd", d_pre[g], layer_input)
                grads[f"gru{layer}.b_{g}"] += d_pre[g].sum(axis=(0, 1))
                d_inputs += d_pre[g] @ W[g]
            d_outputs = d_inputs
        return grads

    # Inference helpers

    def predict_windows(self, windows: np.ndarray) -> np.ndarray:
        """Scores for normalized windows, evaluated in chunks."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 2:
            windows = windows[None]
        if not len(windows):
            return np.zeros(0)
        return np.concatenate([
            self.forward(windows[i:i + SCORE_CHUNK]).scores
            for i in range(0, len(windows), SCORE_CHUNK)
        ])

    def predict_window(self, window: np.ndarray) -> float:
        return float(self.forward(window).scores[0])

    def trace_windows(self, trace: ProcessTrace) -> np.ndarray:
        """Normalized windows ending at every snapshot of ``trace``."""
        rows = normalize(trace.feature_matrix(), self.stats)
        return build_windows(rows, self.window_size)

    def score_trace(self, trace: ProcessTrace) -> np.ndarray:
        """One score per snapshot, each from the window ending at that snapshot."""
        if not trace.snapshots:
            return np.zeros(0)
        return self.predict_windows(self.trace_windows(trace))

    # Serialization

    def to_document(self) -> Dict[str, Any]:
        return {
            "format": FORMAT_TAG,
            "hyperparameters": self.hyperparameters.model_dump(),
            "input_size": self.input_size,
            "threshold": self.threshold,
            "normalization": self.stats.to_dict(),
            "parameters": {
                name: {"shape": list(value.shape), "data": value.ravel(order="C").tolist()}
                for name, value in self.params.items()
            },
        }

    @classmethod
    def from_document(cls, document: Dict[str, Any]) -> "GruClassifier":
        if document.get("format") != FORMAT_TAG:
            raise InvalidInputError(
                f"Not a GRU model document (format {document.get('format')!r}, expected {FORMAT_TAG!r})"
            )
        try:
            params = {
                name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
                for name, entry in document["parameters"].items()
            }
            return cls(
                params,
                Hyperparameters(**document["hyperparameters"]),
                NormalizationStats.from_dict(document["normalization"]),
                threshold=document["threshold"],
                input_size=document["input_size"],
            )
        except (KeyError, ValueError, TypeError) as e:
            raise InvalidInputError(f"Invalid GRU model document: {e}") from e

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_document(), fh, sort_keys=True)
        logger.info(f"Saved GRU model to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GruClassifier":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Model file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                document = json.load(fh)
            except json.JSONDecodeError as e:
                raise InvalidInputError(f"Model file {path} is not valid JSON: {e}") from e
        return cls.from_document(document)


def gru_forward(model: GruClassifier, window: np.ndarray) -> float:
    """Score one normalized window in [0, 1]."""
    return model.predict_window(window)


predict_window = gru_forward
