"""Hyperparameters of the recurrent model and the random-search space."""

from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from .losses import LOSS_KINDS, ROUNDING_MODES, VARIANTS

DROPOUT_CHOICES: Tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


def _is_dropout_choice(value: float) -> bool:
    return any(abs(value - choice) < 1e-9 for choice in DROPOUT_CHOICES)


class Hyperparameters(BaseModel):
    """Configuration of one GRU training run.

    Bounds here are sanity limits that admit desk-scale models, such as a
    handful of hidden units or any batch size; the published search ranges
    live in :class:`SearchSpace` and every sampled configuration stays inside them.
    """

    hidden_neurons: int = Field(default=64, ge=1, description="GRU units per layer")
    depth: int = Field(default=1, ge=1, le=3, description="Stacked GRU layers")
    batch_size: int = Field(default=64, ge=1, description="Windows per Adam step")
    epochs: int = Field(default=10, ge=0, le=200, description="Passes over the sampled windows")
    dropout_rate: float = Field(default=0.0, description="Dropout between stacked layers")
    window_size: int = Field(default=5, ge=1, le=30, description="Snapshots visible per window")
    loss_kind: str = Field(default="mse", description="mse or modified")
    loss_variant: str = Field(default="default", description="Variant of the modified loss")
    rounding: str = Field(default="straight_through", description="Treatment of round(p)")
    sharpness: float = Field(default=50.0, gt=0, description="Slope of the sigmoid rounding surrogate")
    learning_rate: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    epsilon: float = Field(default=1e-8, gt=0)
    class_cap: Optional[int] = Field(default=None, ge=1, description="Windows per class; default min(class sizes)")
    seed: int = Field(default=0, ge=0, description="Seed for initialization, sampling and shuffling")

    @field_validator("dropout_rate")
    @classmethod
    def validate_dropout(cls, v):
        if not _is_dropout_choice(v):
            raise ValueError(f"dropout_rate must be one of {DROPOUT_CHOICES}")
        return round(v, 1)

    @field_validator("loss_kind")
    @classmethod
    def validate_loss_kind(cls, v):
        if v not in LOSS_KINDS:
            raise ValueError(f"loss_kind must be one of {LOSS_KINDS}")
        return v

    @field_validator("loss_variant")
    @classmethod
    def validate_variant(cls, v):
        if v not in VARIANTS:
            raise ValueError(f"loss_variant must be one of {VARIANTS}")
        return v

    @field_validator("rounding")
    @classmethod
    def validate_rounding(cls, v):
        if v not in ROUNDING_MODES:
            raise ValueError(f"rounding must be one of {ROUNDING_MODES}")
        return v


class SearchSpace(BaseModel):
    """Random-search ranges; defaults are the published search space."""

    hidden_neurons: Tuple[int, int] = (50, 5000)
    depth: List[int] = [1, 2, 3]
    batch_size: List[int] = [64, 128, 256]
    epochs: Tuple[int, int] = (1, 200)
    dropout_rate: List[float] = list(DROPOUT_CHOICES)
    window_size: Tuple[int, int] = (1, 30)

    @model_validator(mode="after")
    def validate_ranges(self):
        for name in ("hidden_neurons", "epochs", "window_size"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name} range is empty: [{low}, {high}]")
        if not self.depth or not self.batch_size or not self.dropout_rate:
            raise ValueError("Choice lists in the search space must not be empty")
        if not all(_is_dropout_choice(d) for d in self.dropout_rate):
            raise ValueError(f"dropout choices must be drawn from {DROPOUT_CHOICES}")
        return self

    def sample(self, rng: np.random.Generator, base: Hyperparameters) -> Hyperparameters:
        """Draw one configuration uniformly; non-searched fields come from ``base``."""
        drawn = {
            "hidden_neurons": int(rng.integers(self.hidden_neurons[0], self.hidden_neurons[1] + 1)),
            "depth": int(rng.choice(self.depth)),
            "batch_size": int(rng.choice(self.batch_size)),
            "epochs": int(rng.integers(self.epochs[0], self.epochs[1] + 1)),
            "dropout_rate": float(rng.choice(self.dropout_rate)),
            "window_size": int(rng.integers(self.window_size[0], self.window_size[1] + 1)),
            "seed": int(rng.integers(0, 2**31 - 1)),
        }
        return base.model_copy(update=drawn)

    def contains(self, hp: Hyperparameters) -> bool:
        return (
            self.hidden_neurons[0] <= hp.hidden_neurons <= self.hidden_neurons[1]
            and hp.depth in self.depth
            and hp.batch_size in self.batch_size
            and self.epochs[0] <= hp.epochs <= self.epochs[1]
            and any(abs(hp.dropout_rate - d) < 1e-9 for d in self.dropout_rate)
            and self.window_size[0] <= hp.window_size <= self.window_size[1]
        )
