"""Tests for kill alerts."""

import asyncio
from types import SimpleNamespace
from unittest.mock import AsyncMock, patch

from telegram.error import TelegramError

from malproc_monitor.decision import Decision, ProcessVerdict, Trigger
from malproc_monitor.notifications import TelegramNotifier, escape_markdown

VERDICT = ProcessVerdict(4321, Decision.MALICIOUS, 17, Trigger.ONLINE_SINGLE_WINDOW, 0.97)
CONFIG = {"bot_token": "123:abc", "chat_id": "42", "enabled": True}


def test_escape_markdown():
    """Test MarkdownV2 special characters are escaped."""
    assert escape_markdown("a.b-c(d)") == "a\\.b\\-c\\(d\\)"
    assert escape_markdown("") == ""


def test_missing_credentials_disable_notifier():
    """Test a notifier without token or chat id is disabled."""
    notifier = TelegramNotifier({"enabled": True})
    assert not notifier.is_enabled()
    assert asyncio.run(notifier.send_notification(None)) is False


def test_create_alert():
    """Test alerts carry the verdict and the action taken."""
    with patch("malproc_monitor.notifications.telegram.Bot"):
        notifier = TelegramNotifier(CONFIG)

    dry = notifier.create_alert(VERDICT, "locker.exe", 0.9, enforced=False)
    assert dry.title.startswith("🛑 Would kill: locker.exe")
    assert dry.process_id == 4321
    assert dry.metadata == {"tick": 17}

    enforced = notifier.create_alert(VERDICT, "locker.exe", 0.9, enforced=True, tree_size=3, host="box")
    assert enforced.title.startswith("🛑 Killed")
    assert "box" in enforced.message

    text = TelegramNotifier.format_alert(enforced)
    assert "locker\\.exe" in text
    assert "*Tree size*: 3" in text


def test_send_notification():
    """Test the bot receives a MarkdownV2 message."""
    with patch("malproc_monitor.notifications.telegram.Bot") as bot_class:
        bot = bot_class.return_value
        bot.send_message = AsyncMock()
        notifier = TelegramNotifier(CONFIG)
        alert = notifier.create_alert(VERDICT, "locker", 0.9, enforced=True)

        assert asyncio.run(notifier.send_notification(alert)) is True

    _, kwargs = bot.send_message.call_args
    assert kwargs["chat_id"] == "42"
    assert kwargs["parse_mode"] == "MarkdownV2"


def test_send_failure_returns_false():
    """Test Telegram errors are logged, not raised."""
    with patch("malproc_monitor.notifications.telegram.Bot") as bot_class:
        bot_class.return_value.send_message = AsyncMock(side_effect=TelegramError("down"))
        notifier = TelegramNotifier(CONFIG)
        alert = notifier.create_alert(VERDICT, "locker", 0.9, enforced=False)

        assert asyncio.run(notifier.send_notification(alert)) is False


def test_connection_check():
    """Test get_me is used to check the token."""
    with patch("malproc_monitor.notifications.telegram.Bot") as bot_class:
        bot_class.return_value.get_me = AsyncMock(return_value=SimpleNamespace(username="malproc_bot"))
        notifier = TelegramNotifier(CONFIG)

        assert asyncio.run(notifier.test_connection()) is True
