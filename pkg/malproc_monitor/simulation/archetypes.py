"""Application archetypes: process-tree templates and feature generators.

Archetypes are configuration data. The library is a YAML document with a
top-level ``archetypes`` list; a default library ships with the package.
"""

import logging
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..exceptions import ConfigurationError
from ..telemetry.features import FEATURE_INDEX, FEATURE_NAMES, Label, SIGNED_FEATURES

logger = logging.getLogger("simulator.archetypes")

DEFAULT_LIBRARY = "archetypes.yaml"

# Filled in by the simulator from the process tree and the clock.
DERIVED_FEATURES = frozenset({"seconds_since_start", "child_process_count", "max_process_id"})


def _check_feature_names(values: Dict[str, float]) -> Dict[str, float]:
    unknown = set(values) - set(FEATURE_NAMES)
    if unknown:
        raise ValueError(f"Unknown features: {sorted(unknown)}")
    derived = set(values) & DERIVED_FEATURES
    if derived:
        raise ValueError(f"Features {sorted(derived)} are derived by the simulator")
    return values


class FeatureProfile(BaseModel):
    """Per-feature baseline, Gaussian jitter (std) and linear drift per second."""

    base: Dict[str, float] = Field(default_factory=dict)
    jitter: Dict[str, float] = Field(default_factory=dict)
    drift: Dict[str, float] = Field(default_factory=dict)

    @field_validator("base", "jitter", "drift")
    @classmethod
    def validate_names(cls, v):
        return _check_feature_names(v)

    @field_validator("jitter")
    @classmethod
    def validate_jitter(cls, v):
        if any(std < 0 for std in v.values()):
            raise ValueError("jitter must be >= 0")
        return v


class BurstSpec(BaseModel):
    """Scripted bursts adding ``add`` to features for ``length_s`` seconds every ``every_s``."""

    start_s: int = Field(default=1, ge=1, description="Executed second of the first burst")
    every_s: int = Field(default=10, ge=1)
    length_s: int = Field(default=1, ge=1)
    probability: float = Field(default=1.0, ge=0.0, le=1.0, description="Chance each burst fires")
    add: Dict[str, float] = Field(default_factory=dict)

    @field_validator("add")
    @classmethod
    def validate_names(cls, v):
        return _check_feature_names(v)


class DamageSpec(BaseModel):
    """Files modified per executed second once the payload has triggered."""

    onset_delay_s: int = Field(default=0, ge=0)
    files_per_second: float = Field(default=0.0, ge=0.0)

    def files_for(self, executed_seconds: int) -> float:
        return self.files_per_second * max(0, executed_seconds - self.onset_delay_s)


class ProcessTemplate(BaseModel):
    """One process of an application and the children it spawns."""

    name: str
    duration_s: Tuple[int, int] = Field(default=(30, 60), description="Unkilled duration range")
    spawn_offset_s: int = Field(default=0, ge=0, description="Seconds after the parent's birth")
    profile: FeatureProfile = Field(default_factory=FeatureProfile)
    bursts: List[BurstSpec] = Field(default_factory=list)
    children: List["ProcessTemplate"] = Field(default_factory=list)

    @field_validator("duration_s")
    @classmethod
    def validate_duration(cls, v):
        low, high = v
        if low <= 0 or high < low:
            raise ValueError(f"duration_s must be a positive range, got {v}")
        return v

    def count(self) -> int:
        return 1 + sum(child.count() for child in self.children)


class AppArchetype(BaseModel):
    """A labeled application template."""

    name: str
    label: Label
    weight: float = Field(default=1.0, gt=0, description="Relative draw weight")
    root: ProcessTemplate
    damage: Optional[DamageSpec] = None


class ArchetypeLibrary(BaseModel):
    archetypes: List[AppArchetype]

    @model_validator(mode="after")
    def validate_library(self):
        if not self.archetypes:
            raise ValueError("Archetype library is empty")
        names = [a.name for a in self.archetypes]
        if len(names) != len(set(names)):
            raise ValueError("Archetype names must be unique")
        return self

    def by_label(self, label: Label, names: Optional[List[str]] = None) -> List[AppArchetype]:
        chosen = [a for a in self.archetypes if a.label is label]
        if names is not None:
            chosen = [a for a in chosen if a.name in names]
        return chosen

    def get(self, name: str) -> AppArchetype:
        for archetype in self.archetypes:
            if archetype.name == name:
                return archetype
        raise ConfigurationError(f"Unknown archetype: {name}")


def default_library_text() -> str:
    return resources.files(__package__).joinpath(DEFAULT_LIBRARY).read_text(encoding="utf-8")


def load_library(path: Optional[Union[str, Path]] = None) -> ArchetypeLibrary:
    """Load and validate an archetype library; the packaged default when ``path`` is None."""
    if path is None:
        text = default_library_text()
        source = "<default library>"
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Archetype library not found: {path}")
        text = path.read_text(encoding="utf-8")
        source = str(path)

    try:
        data = yaml.safe_load(text) or {}
        library = ArchetypeLibrary(**data)
    except (yaml.YAMLError, ValidationError, TypeError) as e:
        raise ConfigurationError(f"Invalid archetype library {source}: {e}") from e
    logger.debug(f"Loaded {len(library.archetypes)} archetypes from {source}")
    return library


def generate_features(
    template: ProcessTemplate,
    duration: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Feature rows for executed seconds 1..duration, derived features left at 0."""
    seconds = np.arange(1, duration + 1, dtype=np.float64)
    rows = np.zeros((duration, len(FEATURE_NAMES)), dtype=np.float64)
    profile = template.profile
    for name, value in profile.base.items():
        rows[:, FEATURE_INDEX[name]] = value
    for name, rate in profile.drift.items():
        rows[:, FEATURE_INDEX[name]] += rate * seconds
    for name, std in profile.jitter.items():
        rows[:, FEATURE_INDEX[name]] += rng.normal(0.0, std, duration)

    for burst in template.bursts:
        for start in range(burst.start_s, duration + 1, burst.every_s):
            if rng.random() >= burst.probability:
                continue
            stop = min(start + burst.length_s - 1, duration)
            for name, value in burst.add.items():
                rows[start - 1:stop, FEATURE_INDEX[name]] += value

    unsigned = [i for i, name in enumerate(FEATURE_NAMES) if name not in SIGNED_FEATURES]
    rows[:, unsigned] = np.maximum(rows[:, unsigned], 0.0)
    return rows
