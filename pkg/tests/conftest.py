"""
Shared fixtures
"""

import pytest

from app.config import settings
from models.field import Grid2D, Partition


@pytest.fixture(autouse=True)
def output_dir(tmp_path, monkeypatch):
    out = tmp_path / "output"
    monkeypatch.setattr(settings, "output_dir", out)
    return out


@pytest.fixture
def grid64() -> Grid2D:
    return Grid2D(m=64)


@pytest.fixture
def partition() -> Partition:
    return Partition.build(0.25)
