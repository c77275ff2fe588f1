"""
Runtime configuration for risforge.

Scenario physics lives in scenario files; this module only holds settings
of the tool itself (parallelism, logging) and optional overrides of a
scenario's analysis section.
"""
import os
import json
from pathlib import Path
from typing import Optional
from pydantic import BaseModel, Field, field_validator

__version__ = "1.0.0"

# Default configuration path
CONFIG_PATH = os.path.expanduser("~/.config/risforge/config.json")

class RisforgeConfig(BaseModel):
    """Configuration model for risforge."""
    threads: int = Field(
        default=1,
        ge=1,
        description="Maximum number of worker threads"
    )
    log_enabled: bool = Field(
        default=True,
        description="Whether to write the rotating log file"
    )
    log_level: str = Field(
        default="WARNING",
        description="Level for console and file logging"
    )
    log_retention_days: int = Field(
        default=30,
        ge=1,
        description="Number of days to keep logs"
    )
    rank_tau: Optional[float] = Field(
        default=None,
        gt=0.0,
        lt=1.0,
        description="Rank-proxy threshold; overrides the scenario analysis section when set"
    )
    icdf_level: Optional[float] = Field(
        default=None,
        gt=0.0,
        lt=1.0,
        description="EE coverage level; overrides the scenario analysis section when set"
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level name."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR"]
        v = v.upper()
        if v not in valid_levels:
            raise ValueError(f"Log level must be one of: {', '.join(valid_levels)}")
        return v

    @classmethod
    def load_config(cls, config_path: Optional[str | Path] = None) -> "RisforgeConfig":
        """Load configuration from file and environment variables."""
        config_path = Path(config_path or CONFIG_PATH)
        config_data = {}

        # Load from file if exists
        if config_path.exists():
            with open(config_path) as f:
                config_data = json.load(f)

        # Override with environment variables if set
        env_mapping = {
            "RISFORGE_THREADS": "threads",
            "RISFORGE_LOG_ENABLED": "log_enabled",
            "RISFORGE_LOG_LEVEL": "log_level",
            "RISFORGE_LOG_RETENTION_DAYS": "log_retention_days",
            "RISFORGE_RANK_TAU": "rank_tau",
            "RISFORGE_ICDF_LEVEL": "icdf_level",
        }

        for env_var, config_key in env_mapping.items():
            if env_value := os.getenv(env_var):
                if config_key in ["threads", "log_retention_days"]:
                    config_data[config_key] = int(env_value)
                elif config_key in ["rank_tau", "icdf_level"]:
                    config_data[config_key] = float(env_value)
                elif config_key == "log_enabled":
                    config_data[config_key] = env_value.lower() == "true"
                else:
                    config_data[config_key] = env_value

        return cls(**config_data)

    def save_config(self, config_path: Optional[str | Path] = None):
        """Save configuration to file."""
        config_path = Path(config_path or CONFIG_PATH)
        config_path.parent.mkdir(parents=True, exist_ok=True)

        # Create backup if file exists
        if config_path.exists():
            backup_path = config_path.with_suffix(".json.bak")
            config_path.replace(backup_path)

        config_data = self.model_dump()
        with open(config_path, "w") as f:
            json.dump(config_data, f, indent=4)

    @classmethod
    def create_default_config(cls, config_path: Optional[str | Path] = None):
        """Create default configuration file."""
        config = cls()
        config.save_config(config_path)

    def worker_count(self, n_cells: int) -> int:
        """Threads to use for ``n_cells`` independent work items."""
        return max(1, min(self.threads, n_cells))
