"""Base notification system."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from ..decision import ProcessVerdict


@dataclass
class KillAlert:
    """A flagged process and what the monitor did about it."""

    title: str
    message: str
    process_id: int
    process_name: str
    score: float
    threshold: float
    enforced: bool
    tree_size: int = 1
    host: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


class BaseNotifier(ABC):
    """Base class for all notification systems."""

    def __init__(self, config: Dict[str, Any]):
        """Initialize notifier.

        Args:
            config: Notifier configuration
        """
        self.config = config
        self.enabled = config.get("enabled", True)
        self.logger = logging.getLogger(f"notifier.{self.__class__.__name__.lower()}")

    @abstractmethod
    async def send_notification(self, alert: KillAlert) -> bool:
        """Send an alert.

        Returns:
            True if the alert was delivered
        """
        pass

    def is_enabled(self) -> bool:
        """Check if this notifier is enabled."""
        return self.enabled

    def create_alert(
        self,
        verdict: ProcessVerdict,
        process_name: str,
        threshold: float,
        enforced: bool,
        tree_size: int = 1,
        host: Optional[str] = None,
    ) -> KillAlert:
        """Build an alert from an online verdict."""
        action = "Killed" if enforced else "Would kill"
        title = f"🛑 {action}: {process_name} (pid {verdict.process_id})"

        message_parts = [
            f"⚙️ **Process**: {process_name}",
            f"🔢 **PID**: {verdict.process_id}",
            f"📈 **Score**: {verdict.score:.3f} (θ = {threshold:.3f})",
            f"🌳 **Tree size**: {tree_size}",
        ]
        if host:
            message_parts.append(f"🖥️ **Host**: {host}")
        message_parts.extend([
            "",
            "⚡ *Enforced*" if enforced else "👀 *Dry run, nothing was terminated*",
        ])

        return KillAlert(
            title=title,
            message="\n".join(message_parts),
            process_id=int(verdict.process_id),
            process_name=process_name,
            score=float(verdict.score),
            threshold=float(threshold),
            enforced=enforced,
            tree_size=tree_size,
            host=host,
            metadata={"tick": verdict.decided_at_tick},
        )
