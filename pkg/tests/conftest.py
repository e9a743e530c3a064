"""
Shared fixtures.
"""

import os

import pytest

from workbench import config
from workbench.config import reset_settings


@pytest.fixture
def isolated_settings(tmp_path, monkeypatch):
    """Point config.yaml at a temp file, run from an empty directory, clear SDL_ env."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(config, "CONFIG_PATH", tmp_path / "config.yaml")
    for name in list(os.environ):
        if name.upper().startswith("SDL_"):
            monkeypatch.delenv(name)
    reset_settings()
    yield tmp_path
    reset_settings()
