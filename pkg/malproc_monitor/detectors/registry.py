"""Detector registry: maps model-file format tags to detector factories."""

import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from ..exceptions import InvalidInputError
from ..models import forest as forest_model
from ..models import gru as gru_model
from .base import BaseDetector
from .forest import ForestDetector
from .gru import GruDetector

DetectorFactory = Callable[[dict, str, Optional[float]], BaseDetector]


def _gru_factory(document: dict, name: str, threshold: Optional[float]) -> BaseDetector:
    return GruDetector(gru_model.GruClassifier.from_document(document), name, threshold)


def _forest_factory(document: dict, name: str, threshold: Optional[float]) -> BaseDetector:
    return ForestDetector(forest_model.ForestClassifier.from_document(document), name, threshold)


class DetectorRegistry:
    """Registry of detector factories keyed by model format tag."""

    def __init__(self):
        self._factories: Dict[str, DetectorFactory] = {}
        self.logger = logging.getLogger("detector.registry")

    def register(self, format_tag: str, factory: DetectorFactory) -> None:
        """Register a factory.

        Args:
            format_tag: Value of the ``format`` key of model documents
            factory: Builds a detector from a parsed document, a name and an optional θ
        """
        if not callable(factory):
            raise ValueError(f"Detector factory must be callable: {factory}")
        self._factories[format_tag] = factory
        self.logger.debug(f"Registered detector format: {format_tag}")

    def create(self, document: dict, name: str, threshold: Optional[float] = None) -> BaseDetector:
        format_tag = document.get("format")
        if format_tag not in self._factories:
            known = ", ".join(self.list_formats())
            raise InvalidInputError(f"No detector registered for model format {format_tag!r}; known: {known}")
        return self._factories[format_tag](document, name, threshold)

    def load(self, path: Union[str, Path], name: Optional[str] = None,
             threshold: Optional[float] = None) -> BaseDetector:
        """Build a detector from a model file, optionally overriding its θ."""
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Model file not found: {path}")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                document = json.load(fh)
            except json.JSONDecodeError as e:
                raise InvalidInputError(f"Model file {path} is not valid JSON: {e}") from e
        detector = self.create(document, name or path.stem, threshold)
        self.logger.info(f"Loaded {detector}")
        return detector

    def list_formats(self) -> List[str]:
        return list(self._factories.keys())


# Global registry instance
registry = DetectorRegistry()
registry.register(gru_model.FORMAT_TAG, _gru_factory)
registry.register(forest_model.FORMAT_TAG, _forest_factory)


def load_detector(path: Union[str, Path], threshold: Optional[float] = None,
                  name: Optional[str] = None) -> BaseDetector:
    return registry.load(path, name=name, threshold=threshold)
