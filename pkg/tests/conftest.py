"""
Shared test fixtures.
"""
import copy
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from geometry_channel import RisPanel, Vec3

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

MINIMAL_SCENARIO = {
    "description": "one panel, one UE",
    "geometry": {
        "carrier_frequency_hz": 3.5e9,
        "seed": 7,
        "bs": {"position_m": [0.0, 10.0, 3.0], "n_antennas": 2},
        "ue": {"position_m": [1.0, 2.0, 1.0], "n_antennas": 2},
        "scatterers": {"count": 0, "gain_db": -10.0},
        "panels": [
            {"id": "P1", "center_m": [0.0, 0.0, 2.0], "normal": [0, 1, 0], "rows": 2, "cols": 2,
             "lna_gain_db": 10.0, "phase_bits": 1, "element_noise_power_w": 1e-12}
        ]
    },
    "system": {"p_t_w": 1.0, "sigma_v2_w": 1e-12, "bandwidth_hz": 1e6},
    "power": {"upsilon_bs": 3.0, "p_c_bs_w": 6.0, "upsilon_lna": 3.0, "p_ps_w": 1e-6, "p_s_aris_w": 0.48},
}


def gain_db(c):
    """LNA gain in dB giving field gain ``c``."""
    return 20.0 * math.log10(c)


@pytest.fixture
def make_panel():
    """Factory for RIS panels with test-friendly defaults."""
    def _make(id="P1", rows=1, cols=1, c=1.0, bits=1, noise=0.0, spacing=0.05,
              normal=(0.0, 1.0, 0.0), center=(0.0, 0.0, 0.0)):
        return RisPanel(
            id=id,
            center=Vec3.model_validate(center),
            normal=Vec3.model_validate(normal),
            rows=rows,
            cols=cols,
            spacing=spacing,
            lna_gain_db=gain_db(c),
            phase_bits=bits,
            element_noise_power=noise,
        )
    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scenario_data():
    """A fresh copy of the minimal scenario document."""
    return copy.deepcopy(MINIMAL_SCENARIO)


@pytest.fixture
def scenario_file(tmp_path, scenario_data):
    """Minimal scenario written to a temporary .scn file."""
    path = tmp_path / "minimal.scn"
    with open(path, "w") as f:
        json.dump(scenario_data, f)
    return path


@pytest.fixture
def bundled():
    """Path of a bundled scenario by stem."""
    return lambda name: SCENARIO_DIR / f"{name}.scn"


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Keep tests away from the user's config directory and environment."""
    for var in list(os.environ):
        if var.startswith("RISFORGE_"):
            monkeypatch.delenv(var, raising=False)
    monkeypatch.setattr("config.CONFIG_PATH", str(tmp_path / "risforge" / "config.json"))


@pytest.fixture(autouse=True)
def reset_logging():
    """Drop handlers installed by cli.setup_logging after each test."""
    root = logging.getLogger()
    level = root.level
    yield
    root.setLevel(level)
    for handler in list(root.handlers):
        if getattr(handler, "_risforge", False):
            root.removeHandler(handler)
            handler.close()
