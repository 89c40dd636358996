"""Tests for configuration system."""

import tempfile
from pathlib import Path
from unittest.mock import patch

import pytest
import yaml

from malproc_monitor.config import Config, MonitorSettings, RunConfig, SearchConfig, SweepConfig
from malproc_monitor.simulation.scenario import ScenarioConfig


def test_run_config_defaults():
    """Test RunConfig defaults."""
    config = RunConfig()
    assert config.threshold is None
    assert config.monitor.enforce is False
    assert config.monitor.period_s == 1.0
    assert config.scenario.benign_app_count == 10
    assert config.training.loss_kind == "mse"
    assert config.search.space.hidden_neurons == (50, 5000)


def test_config_validation():
    """Test validation of out-of-range values."""
    with pytest.raises(ValueError):
        RunConfig(threshold=1.5)

    with pytest.raises(ValueError):
        SearchConfig(objective="accuracy")

    with pytest.raises(ValueError):
        SweepConfig(grid=[0.2, 0.9])

    with pytest.raises(ValueError):
        MonitorSettings(threshold=-0.1)

    with pytest.raises(ValueError):
        ScenarioConfig(benign_app_count=36)

    # 31 launches one second apart do not fit into 20 ticks
    with pytest.raises(ValueError):
        ScenarioConfig(benign_app_count=30, malicious_app_count=1, stagger_s=1, duration_s=20)


def test_log_level_normalized():
    """Test log level is upper-cased and checked."""
    assert RunConfig(log_level="debug").log_level == "DEBUG"
    with pytest.raises(ValueError):
        RunConfig(log_level="chatty")


def test_config_creation():
    """Test configuration file creation."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = Path(tmpdir) / "test_config.yaml"
        config_manager = Config(str(config_path))

        # Create example config
        example_config = config_manager.create_example_config()
        assert example_config.scenario.benign_app_count == 20
        assert example_config.training.loss_kind == "modified"
        assert example_config.monitor.enforce is False

        # Save and load
        config_manager.save(example_config)
        assert config_path.exists()

        loaded_config = config_manager.load()
        assert loaded_config.training == example_config.training
        assert loaded_config.search.space.hidden_neurons == (16, 64)
        assert loaded_config.distill.forest.n_trees == 50
        assert loaded_config.monitor.event_log == "reports/monitor.jsonl"


def test_saved_config_is_plain_yaml():
    """Test the saved file loads with safe_load (no python tuples)."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = Path(tmpdir) / "malproc.yaml"
        config_manager = Config(str(config_path))
        config_manager.save(config_manager.create_example_config())

        with open(config_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
        assert data["search"]["space"]["window_size"] == [2, 10]


def test_config_file_not_found():
    """Test behavior when config file doesn't exist."""
    config_manager = Config("/nonexistent/config.yaml")

    with pytest.raises(FileNotFoundError):
        config_manager.load()

    # get() falls back to defaults
    assert config_manager.get() == RunConfig()


def test_invalid_yaml_value_rejected():
    """Test a bad value in the file raises a validation error."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = Path(tmpdir) / "bad.yaml"
        config_path.write_text("threshold: 3\n", encoding="utf-8")

        with pytest.raises(ValueError):
            Config(str(config_path)).load()


def test_telegram_from_environment():
    """Test Telegram credentials are filled from the environment."""
    env = {"MALPROC_TELEGRAM_TOKEN": "123:abc", "MALPROC_TELEGRAM_CHAT_ID": "42"}
    with patch.dict("os.environ", env):
        config = Config("/nonexistent/config.yaml").get()

    telegram = config.notifications.telegram
    assert telegram["bot_token"] == "123:abc"
    assert telegram["chat_id"] == "42"
    assert telegram["enabled"] is True


def test_file_credentials_win_over_environment():
    """Test values in the file are not overwritten by the environment."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = Path(tmpdir) / "malproc.yaml"
        config_path.write_text(
            "notifications:\n  telegram:\n    bot_token: file-token\n    chat_id: '7'\n    enabled: false\n",
            encoding="utf-8",
        )
        env = {"MALPROC_TELEGRAM_TOKEN": "env-token", "MALPROC_TELEGRAM_CHAT_ID": "42"}
        with patch.dict("os.environ", env):
            config = Config(str(config_path)).load()

    assert config.notifications.telegram["bot_token"] == "file-token"
    assert config.notifications.telegram["enabled"] is False
