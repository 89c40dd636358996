"""Kill alerts for the live monitor."""

from .base import BaseNotifier, KillAlert
from .telegram import TelegramNotifier, escape_markdown

__all__ = ["BaseNotifier", "KillAlert", "TelegramNotifier", "escape_markdown"]
