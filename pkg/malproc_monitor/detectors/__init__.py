"""Online detectors scoring one tick of snapshots at a time."""

from .base import BaseDetector
from .forest import ForestDetector
from .gru import GruDetector
from .registry import DetectorRegistry, load_detector, registry
from .replay import NeverFireDetector, PrecomputedDetector, calibrate

__all__ = [
    "BaseDetector",
    "DetectorRegistry",
    "ForestDetector",
    "GruDetector",
    "NeverFireDetector",
    "PrecomputedDetector",
    "load_detector",
    "registry",
    "calibrate",
]
