"""Shared fixtures and the acceptance summary printed at the end of a session."""

from __future__ import annotations

import numpy as np
import pytest

from levykernel.frozen import SpatialGrid
from levykernel.model import LevyTypeModel, model_from_dict

ACCEPTANCE_LINES: list[str] = []


def power_model(alpha: float = 1.0, **modulation) -> LevyTypeModel:
    spec = {"base": {"dim": 1, "family": "power", "alpha": alpha, "scale": 1.0}}
    spec["modulation"] = {"lam": min(1.0, alpha), **modulation}
    return model_from_dict(spec)


@pytest.fixture(scope="session")
def cauchy():
    """Symmetric 1-stable model with density |u|^{-2}; its symbol is π|ξ|."""
    return power_model(1.0)


@pytest.fixture(scope="session")
def modulated():
    return power_model(1.0, kind="holder", amp=0.4, b1=1.0, b2=1.4, b3=0.4, lam=0.5)


@pytest.fixture(scope="session")
def grid_1d():
    return SpatialGrid(dim=1, R=16.0, N=1024, oversample=32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
