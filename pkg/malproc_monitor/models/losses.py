"""Training losses: plain MSE and the kill-aware loss.

The kill-aware loss, per sample, with prediction p, label y and normalized
time left t::

    default: (p - y)^2 + round(p) * (1 - t) + y / (t + 1)
    literal: (p - t)^2 + round(p) * (1 - t) + y / (t + 1)
    prose:   (p - y)^2 + (1 - y) * round(p) * c_fp + y * round(p) / (t + 1)

averaged over the batch. The last default/literal term does not depend on p
and contributes no gradient; it is kept so loss values stay comparable.

round(p) is not differentiable. ``rounding`` selects how it is treated:

- ``straight_through``: value uses round(p), gradient treats it as identity
- ``sigmoid``: round(p) is replaced by sigmoid(k * (p - 0.5)) in value and gradient
- ``identity``: round(p) is replaced by p in value and gradient; its gradient
  equals the straight-through gradient, which makes it the finite-difference
  reference for that mode
"""

from typing import Tuple

import numpy as np

from ..exceptions import InvalidInputError

LOSS_KINDS = ("mse", "modified")
VARIANTS = ("default", "literal", "prose")
ROUNDING_MODES = ("straight_through", "sigmoid", "identity")

FALSE_POSITIVE_COST = 1.0
DEFAULT_SHARPNESS = 50.0


def _as_batch(*arrays) -> Tuple[np.ndarray, ...]:
    batch = tuple(np.asarray(a, dtype=np.float64).reshape(-1) for a in arrays)
    sizes = {len(a) for a in batch}
    if len(sizes) != 1:
        raise InvalidInputError(f"Loss inputs must have equal lengths, got {sorted(sizes)}")
    if not len(batch[0]):
        raise InvalidInputError("Loss of an empty batch is undefined")
    return batch


def mse_loss(predictions, labels) -> float:
    """Mean of (p_i - y_i)^2."""
    p, y = _as_batch(predictions, labels)
    return float(np.mean((p - y) ** 2))


def mse_loss_grad(predictions, labels) -> np.ndarray:
    """dL/dp for :func:`mse_loss`."""
    p, y = _as_batch(predictions, labels)
    return 2.0 * (p - y) / len(p)


def _rounded(p: np.ndarray, rounding: str, sharpness: float) -> Tuple[np.ndarray, np.ndarray]:
    """Return (value, derivative) used in place of round(p)."""
    if rounding == "straight_through":
        # np.round is half-to-even; 0.5 rounds down which matches the strict ">" decision rule
        return np.round(p), np.ones_like(p)
    if rounding == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-sharpness * (p - 0.5)))
        return s, sharpness * s * (1.0 - s)
    if rounding == "identity":
        return p, np.ones_like(p)
    raise InvalidInputError(f"Unknown rounding mode: {rounding}")


def _check_modified_inputs(predictions, labels, time_left, variant):
    if variant not in VARIANTS:
        raise InvalidInputError(f"Unknown loss variant: {variant}")
    p, y, t = _as_batch(predictions, labels, time_left)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise InvalidInputError("time_left values must lie in [0, 1]")
    return p, y, t


def modified_loss(
    predictions,
    labels,
    time_left,
    variant: str = "default",
    rounding: str = "straight_through",
    sharpness: float = DEFAULT_SHARPNESS,
    false_positive_cost: float = FALSE_POSITIVE_COST,
) -> float:
    """Kill-aware loss value, see module docstring."""
    p, y, t = _check_modified_inputs(predictions, labels, time_left, variant)
    r, _ = _rounded(p, rounding, sharpness)

    if variant == "default":
        per_sample = (p - y) ** 2 + r * (1.0 - t) + y / (t + 1.0)
    elif variant == "literal":
        per_sample = (p - t) ** 2 + r * (1.0 - t) + y / (t + 1.0)
    else:
        per_sample = (p - y) ** 2 + (1.0 - y) * r * false_positive_cost + y * r / (t + 1.0)
    return float(np.mean(per_sample))


def modified_loss_grad(
    predictions,
    labels,
    time_left,
    variant: str = "default",
    rounding: str = "straight_through",
    sharpness: float = DEFAULT_SHARPNESS,
    false_positive_cost: float = FALSE_POSITIVE_COST,
) -> np.ndarray:
    """dL/dp for :func:`modified_loss`."""
    p, y, t = _check_modified_inputs(predictions, labels, time_left, variant)
    _, dr = _rounded(p, rounding, sharpness)

    if variant == "default":
        grad = 2.0 * (p - y) + dr * (1.0 - t)
    elif variant == "literal":
        grad = 2.0 * (p - t) + dr * (1.0 - t)
    else:
        grad = 2.0 * (p - y) + dr * ((1.0 - y) * false_positive_cost + y / (t + 1.0))
    return grad / len(p)


class LossFunction:
    """Bundles the configured loss so training code can call value/grad uniformly."""

    def __init__(
        self,
        kind: str = "mse",
        variant: str = "default",
        rounding: str = "straight_through",
        sharpness: float = DEFAULT_SHARPNESS,
    ):
        if kind not in LOSS_KINDS:
            raise InvalidInputError(f"Unknown loss kind: {kind}")
        if variant not in VARIANTS:
            raise InvalidInputError(f"Unknown loss variant: {variant}")
        if rounding not in ROUNDING_MODES:
            raise InvalidInputError(f"Unknown rounding mode: {rounding}")
        self.kind = kind
        self.variant = variant
        self.rounding = rounding
        self.sharpness = sharpness

    def value(self, predictions, labels, time_left) -> float:
        if self.kind == "mse":
            return mse_loss(predictions, labels)
        return modified_loss(
            predictions, labels, time_left, self.variant, self.rounding, self.sharpness
        )

    def grad(self, predictions, labels, time_left) -> np.ndarray:
        if self.kind == "mse":
            return mse_loss_grad(predictions, labels)
        return modified_loss_grad(
            predictions, labels, time_left, self.variant, self.rounding, self.sharpness
        )

    def __repr__(self) -> str:
        return f"LossFunction(kind={self.kind!r}, variant={self.variant!r}, rounding={self.rounding!r})"
