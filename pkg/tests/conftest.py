import numpy as np
import pytest

from flowabs import DynamicalSystem, FlowConfig, HyperRect, StateSpace, VectorField


@pytest.fixture
def square():
    return StateSpace.box((-1, 1), (-1, 1))


@pytest.fixture
def radial(square):
    return DynamicalSystem(VectorField.radial_contraction(), square, FlowConfig(1e-3, 5.0))


@pytest.fixture
def quadrants():
    return [HyperRect([-1, -1], [0, 0]), HyperRect([0, -1], [1, 0]),
            HyperRect([-1, 0], [0, 1]), HyperRect([0, 0], [1, 1])]


@pytest.fixture
def circle():
    space = StateSpace.torus((0, 2 * np.pi))
    return DynamicalSystem(VectorField.gradient_circle(), space, FlowConfig(1e-2, 100.0))


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
