import numpy as np
import pytest

from qmslab import models


@pytest.fixture(scope="session")
def dephasing():
    return models.builtin("dephasing(0.5)")


@pytest.fixture(scope="session")
def amplitude_damping():
    return models.builtin("amplitude_damping(1)")


@pytest.fixture(scope="session")
def thermal_qubit():
    return models.builtin("thermal_qubit(2,1)")


@pytest.fixture(scope="session")
def unitary_qubit():
    return models.builtin("unitary(1)")


@pytest.fixture(scope="session")
def three_state_chain():
    return models.builtin("three_state_chain")


@pytest.fixture(scope="session")
def all_builtins(dephasing, amplitude_damping, thermal_qubit, unitary_qubit,
                 three_state_chain):
    return [dephasing, amplitude_damping, thermal_qubit, unitary_qubit,
            three_state_chain]


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
