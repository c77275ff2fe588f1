"""
Tests for configuration management.
"""
import os
import json
import pytest
from unittest.mock import patch
from config import RisforgeConfig

@pytest.fixture
def temp_config_dir(tmp_path):
    """Create a temporary config directory."""
    config_dir = tmp_path / "config"
    config_dir.mkdir()
    return config_dir

def test_default_config():
    """Test default configuration values."""
    config = RisforgeConfig()
    assert config.threads == 1
    assert config.log_enabled is True
    assert config.log_level == "WARNING"
    assert config.log_retention_days == 30
    assert config.rank_tau is None
    assert config.icdf_level is None

def test_config_validation():
    """Test configuration validation."""
    with pytest.raises(ValueError) as exc_info:
        RisforgeConfig(log_level="verbose")
    assert "Log level must be one of" in str(exc_info.value)

    with pytest.raises(ValueError) as exc_info:
        RisforgeConfig(threads=0)
    assert "greater than or equal to 1" in str(exc_info.value)

    with pytest.raises(ValueError):
        RisforgeConfig(icdf_level=1.0)

    with pytest.raises(ValueError):
        RisforgeConfig(rank_tau=0.0)

def test_log_level_normalized():
    assert RisforgeConfig(log_level="debug").log_level == "DEBUG"

def test_load_config_from_file(temp_config_dir):
    """Test loading configuration from file."""
    config_file = temp_config_dir / "config.json"
    with open(config_file, "w") as f:
        json.dump({"threads": 4, "log_enabled": False, "icdf_level": 0.5}, f)

    config = RisforgeConfig.load_config(config_file)
    assert config.threads == 4
    assert config.log_enabled is False
    assert config.icdf_level == 0.5
    assert config.rank_tau is None

def test_load_config_from_env(temp_config_dir):
    """Test environment variables override the file."""
    config_file = temp_config_dir / "config.json"
    with open(config_file, "w") as f:
        json.dump({"threads": 4}, f)

    with patch.dict(os.environ, {
        "RISFORGE_THREADS": "8",
        "RISFORGE_LOG_ENABLED": "false",
        "RISFORGE_LOG_LEVEL": "info",
        "RISFORGE_LOG_RETENTION_DAYS": "15",
        "RISFORGE_RANK_TAU": "0.2",
        "RISFORGE_ICDF_LEVEL": "0.9",
    }):
        config = RisforgeConfig.load_config(config_file)
    assert config.threads == 8
    assert config.log_enabled is False
    assert config.log_level == "INFO"
    assert config.log_retention_days == 15
    assert config.rank_tau == 0.2
    assert config.icdf_level == 0.9

def test_save_config(temp_config_dir):
    """Test saving configuration to file."""
    config_file = temp_config_dir / "nested" / "config.json"
    RisforgeConfig(threads=3, log_level="ERROR").save_config(config_file)

    with open(config_file) as f:
        saved_data = json.load(f)
    assert saved_data["threads"] == 3
    assert saved_data["log_level"] == "ERROR"

def test_save_config_keeps_backup(temp_config_dir):
    """Test the previous file is kept as a .bak."""
    config_file = temp_config_dir / "config.json"
    RisforgeConfig(threads=2).save_config(config_file)
    RisforgeConfig(threads=5).save_config(config_file)

    with open(temp_config_dir / "config.json.bak") as f:
        assert json.load(f)["threads"] == 2
    assert RisforgeConfig.load_config(config_file).threads == 5

def test_create_default_config(temp_config_dir):
    """Test creating default configuration file."""
    config_file = temp_config_dir / "default.json"
    RisforgeConfig.create_default_config(config_file)

    with open(config_file) as f:
        saved_data = json.load(f)
    assert saved_data == RisforgeConfig().model_dump()

def test_default_path_is_patched(tmp_path):
    """Without an explicit path the (test-isolated) default location is used."""
    RisforgeConfig(threads=6).save_config()
    assert RisforgeConfig.load_config().threads == 6
    assert (tmp_path / "risforge" / "config.json").exists()

def test_config_file_not_found(temp_config_dir):
    """Test handling of missing configuration file."""
    config = RisforgeConfig.load_config(temp_config_dir / "nonexistent.json")
    assert config == RisforgeConfig()

def test_config_file_corrupted(temp_config_dir):
    """Test handling of a configuration file with invalid values."""
    config_file = temp_config_dir / "corrupted.json"
    with open(config_file, "w") as f:
        f.write('{"threads": -2}')

    with pytest.raises(ValueError):
        RisforgeConfig.load_config(config_file)

@pytest.mark.parametrize("threads,cells,expected", [(1, 10, 1), (4, 10, 4), (8, 3, 3), (4, 0, 1)])
def test_worker_count(threads, cells, expected):
    assert RisforgeConfig(threads=threads).worker_count(cells) == expected
