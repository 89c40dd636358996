"""Configuration management for malproc monitor."""

from .config import (
    Config,
    DistillConfig,
    MonitorSettings,
    NotificationConfig,
    PathsConfig,
    RunConfig,
    SearchConfig,
    SweepConfig,
)

__all__ = [
    "Config",
    "DistillConfig",
    "MonitorSettings",
    "NotificationConfig",
    "PathsConfig",
    "RunConfig",
    "SearchConfig",
    "SweepConfig",
]
