"""Shared fixtures."""
import json
from pathlib import Path

import pytest

from src.distributions import StdNormal, Uniform


@pytest.fixture
def uniform():
    return Uniform()


@pytest.fixture
def normal():
    return StdNormal()


@pytest.fixture
def write_config(tmp_path: Path):
    """Write a run configuration dictionary to a JSON file and return its path."""

    def _write(data: dict, name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
