"""Shared fixtures: packaged scenario path and a fresh simulated desktop."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from cola.environment import load_scenario


@pytest.fixture(scope="session")
def gaia_scenario_path() -> Path:
    return Path(resources.files("cola") / "scenarios" / "gaia_case_1.json")


@pytest.fixture()
def gaia_env(gaia_scenario_path):
    return load_scenario(gaia_scenario_path)
