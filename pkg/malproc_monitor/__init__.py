"""Malproc Monitor - run-time detection and automated killing of malicious processes."""

__version__ = "0.1.0"

from .config import Config, RunConfig
from .monitor import ProcessMonitor

__all__ = ["Config", "RunConfig", "ProcessMonitor"]
