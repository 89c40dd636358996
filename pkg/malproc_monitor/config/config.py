"""Configuration management for malproc monitor."""

import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

from ..models.forest import ForestConfig
from ..models.hyperparameters import Hyperparameters, SearchSpace
from ..simulation.scenario import ScenarioConfig


class PathsConfig(BaseModel):
    """Where artifacts are read from and written to."""

    data_dir: str = Field(default="data", description="Scenario directories")
    models_dir: str = Field(default="models", description="Serialized models")
    reports_dir: str = Field(default="reports", description="Sweep tables, reports, event logs")
    archetypes: Optional[str] = Field(default=None, description="Archetype library; packaged default if unset")


class SearchConfig(BaseModel):
    """Random hyperparameter search."""

    space: SearchSpace = Field(default_factory=SearchSpace)
    n_trials: int = Field(default=10, ge=1)
    objective: str = Field(default="online", description="offline or online")

    @field_validator("objective")
    @classmethod
    def validate_objective(cls, v):
        if v not in ("offline", "online"):
            raise ValueError("objective must be 'offline' or 'online'")
        return v


class SweepConfig(BaseModel):
    """Threshold sweep grid: explicit values or evenly spaced steps over [0.5, 1]."""

    steps: int = Field(default=51, ge=1)
    grid: Optional[List[float]] = Field(default=None)

    @field_validator("grid")
    @classmethod
    def validate_grid(cls, v):
        if v is not None:
            if not v:
                raise ValueError("grid must not be empty")
            if any(not 0.5 <= t <= 1.0 for t in v):
                raise ValueError("grid thresholds must lie in [0.5, 1.0]")
        return v


class DistillConfig(BaseModel):
    """Student training on teacher decisions."""

    forest: ForestConfig = Field(default_factory=ForestConfig)
    holdout_fraction: float = Field(default=0.2, ge=0.0, lt=1.0, description="Traces held out for agreement")


class MonitorSettings(BaseModel):
    """Live host monitor."""

    enforce: bool = Field(default=False, description="Actually terminate flagged process trees")
    period_s: float = Field(default=1.0, gt=0, description="Sampling period in seconds")
    threshold: Optional[float] = Field(default=None, description="Override the model's θ")
    allowlist: Optional[str] = Field(default=None, description="File of process names or pids never killed")
    event_log: Optional[str] = Field(default=None, description="Line-delimited monitor event log")
    high_priority: bool = Field(default=True, description="Ask the OS for a higher scheduling priority")
    kill_timeout_s: float = Field(default=3.0, gt=0, description="Wait for terminated processes before SIGKILL")

    @field_validator("threshold")
    @classmethod
    def validate_threshold(cls, v):
        if v is not None and not 0.0 <= v <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        return v


class NotificationConfig(BaseModel):
    """Configuration for kill alerts."""

    telegram: Optional[Dict[str, Any]] = Field(default=None, description="Telegram notification config")


class RunConfig(BaseModel):
    """Main configuration."""

    paths: PathsConfig = Field(default_factory=PathsConfig)
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    training: Hyperparameters = Field(default_factory=Hyperparameters)
    search: SearchConfig = Field(default_factory=SearchConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    monitor: MonitorSettings = Field(default_factory=MonitorSettings)
    notifications: NotificationConfig = Field(default_factory=NotificationConfig)
    threshold: Optional[float] = Field(
        default=None, ge=0.0, le=1.0, description="θ for models that pin none; unset keeps each model's stored θ"
    )
    seed: int = Field(default=0, ge=0)
    log_level: str = Field(default="INFO", description="Logging level")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        if v.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"Unknown log level: {v}")
        return v.upper()


class Config:
    """Configuration manager for malproc monitor."""

    def __init__(self, config_path: Optional[str] = None):
        """Initialize configuration manager.

        Args:
            config_path: Path to configuration file. If None, looks for default locations.
        """
        load_dotenv()
        self.config_path = self._find_config_path(config_path)
        self._config: Optional[RunConfig] = None

    def _find_config_path(self, config_path: Optional[str]) -> Path:
        """Find configuration file path."""
        if config_path:
            return Path(config_path)

        possible_paths = [
            Path.cwd() / "malproc.yaml",
            Path.cwd() / "malproc.yml",
            Path.home() / ".malproc-monitor" / "config.yaml",
            Path.home() / ".config" / "malproc-monitor" / "config.yaml",
        ]

        for path in possible_paths:
            if path.exists():
                return path

        return Path.cwd() / "malproc.yaml"

    @property
    def exists(self) -> bool:
        return self.config_path.exists()

    def load(self) -> RunConfig:
        """Load configuration from file."""
        if not self.config_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {self.config_path}")

        with open(self.config_path, "r", encoding="utf-8") as f:
            config_data = yaml.safe_load(f) or {}

        self._config = RunConfig(**config_data)
        self._apply_env(self._config)
        return self._config

    def save(self, config: RunConfig) -> None:
        """Save configuration to file."""
        self.config_path.parent.mkdir(parents=True, exist_ok=True)

        with open(self.config_path, "w", encoding="utf-8") as f:
            yaml.dump(config.model_dump(mode="json"), f, default_flow_style=False, indent=2, sort_keys=False)

        self._config = config

    def get(self) -> RunConfig:
        """Get current configuration; defaults when no file exists."""
        if self._config is None:
            if self.config_path.exists():
                self._config = self.load()
            else:
                self._config = RunConfig()
                self._apply_env(self._config)
        return self._config

    def _apply_env(self, config: RunConfig) -> None:
        """Fill Telegram credentials from the environment when the file leaves them out."""
        token = self.get_env_var("MALPROC_TELEGRAM_TOKEN")
        chat_id = self.get_env_var("MALPROC_TELEGRAM_CHAT_ID")
        if token and chat_id:
            telegram = dict(config.notifications.telegram or {})
            telegram.setdefault("bot_token", token)
            telegram.setdefault("chat_id", chat_id)
            telegram.setdefault("enabled", True)
            config.notifications.telegram = telegram

    def create_example_config(self) -> RunConfig:
        """Create an example configuration."""
        return RunConfig(
            paths=PathsConfig(data_dir="data", models_dir="models", reports_dir="reports"),
            scenario=ScenarioConfig(benign_app_count=20, malicious_app_count=1, stagger_s=1, duration_s=60),
            training=Hyperparameters(
                hidden_neurons=32,
                depth=1,
                batch_size=64,
                epochs=20,
                window_size=5,
                loss_kind="modified",
            ),
            search=SearchConfig(
                space=SearchSpace(hidden_neurons=(16, 64), epochs=(5, 30), window_size=(2, 10)),
                n_trials=5,
                objective="online",
            ),
            sweep=SweepConfig(steps=51),
            distill=DistillConfig(forest=ForestConfig(n_trees=50)),
            monitor=MonitorSettings(enforce=False, allowlist="allowlist.txt", event_log="reports/monitor.jsonl"),
            notifications=NotificationConfig(
                telegram={
                    "bot_token": "YOUR_BOT_TOKEN",
                    "chat_id": "YOUR_CHAT_ID",
                    "enabled": False,
                }
            ),
            log_level="INFO",
        )

    @staticmethod
    def get_env_var(key: str, default: Optional[str] = None) -> Optional[str]:
        """Get environment variable value."""
        return os.getenv(key, default)
