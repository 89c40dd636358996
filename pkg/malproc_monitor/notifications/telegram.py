"""Telegram kill alerts."""

from typing import Any, Dict

from telegram import Bot
from telegram.error import TelegramError

from .base import BaseNotifier, KillAlert

_MARKDOWN_SPECIALS = "_*[]()~`>#+-=|{}.!"


def escape_markdown(text: str) -> str:
    """Escape MarkdownV2 special characters."""
    if not text:
        return ""
    return "".join(f"\\{char}" if char in _MARKDOWN_SPECIALS else char for char in text)


class TelegramNotifier(BaseNotifier):
    """Sends kill alerts to one Telegram chat."""

    def __init__(self, config: Dict[str, Any]):
        """Initialize Telegram notifier.

        Args:
            config: Telegram configuration containing bot_token and chat_id
        """
        super().__init__(config)

        self.bot_token = config.get("bot_token")
        self.chat_id = config.get("chat_id")
        self.bot = None

        if not self.bot_token or not self.chat_id:
            self.logger.error("Telegram bot_token and chat_id are required")
            self.enabled = False
            return

        try:
            self.bot = Bot(token=self.bot_token)
        except Exception as e:
            self.logger.error(f"Failed to initialize Telegram bot: {e}")
            self.enabled = False

    async def send_notification(self, alert: KillAlert) -> bool:
        if not self.is_enabled():
            self.logger.warning("Telegram notifier is disabled")
            return False

        try:
            await self.bot.send_message(
                chat_id=self.chat_id,
                text=self.format_alert(alert),
                parse_mode="MarkdownV2",
            )
            self.logger.info(f"Telegram alert sent for pid {alert.process_id}")
            return True
        except TelegramError as e:
            self.logger.error(f"Failed to send Telegram message: {e}")
            return False
        except Exception as e:
            self.logger.error(f"Unexpected error sending Telegram message: {e}")
            return False

    @staticmethod
    def format_alert(alert: KillAlert) -> str:
        """Render an alert as MarkdownV2."""
        headline = "Process tree killed" if alert.enforced else "Malicious process flagged \\(dry run\\)"
        lines = [
            f"🛑 *{headline}*",
            "",
            f"⚙️ *Process*: {escape_markdown(alert.process_name)}",
            f"🔢 *PID*: {alert.process_id}",
            f"📈 *Score*: {escape_markdown(f'{alert.score:.3f}')} "
            f"\\(θ \\= {escape_markdown(f'{alert.threshold:.3f}')}\\)",
            f"🌳 *Tree size*: {alert.tree_size}",
        ]
        if alert.host:
            lines.append(f"🖥️ *Host*: {escape_markdown(alert.host)}")
        lines.extend(["", "_malproc monitor_"])
        return "\n".join(lines)

    async def test_connection(self) -> bool:
        """Check the bot token with get_me."""
        if not self.is_enabled():
            return False

        try:
            bot_info = await self.bot.get_me()
            self.logger.info(f"Telegram bot connected: @{bot_info.username}")
            return True
        except Exception as e:
            self.logger.error(f"Telegram connection test failed: {e}")
            return False
