from __future__ import annotations

import numpy as np
import pytest

from certunlearn.glm import LossFamily, ModelSpec, Regularizer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def logistic_spec():
    return ModelSpec(LossFamily.LOGISTIC, Regularizer(1.0))


@pytest.fixture
def squared_spec():
    return ModelSpec(LossFamily.SQUARED, Regularizer(1.0))


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(LINES, key=lambda k: int(k.split("-")[1])):
            terminalreporter.write_line(LINES[key])
