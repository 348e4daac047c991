import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ejmnet.circuit import (
    DEFAULT_THETAS,
    TwoQubitUnitary,
    check_unitary,
    circuit_network_distribution,
    diagram,
    ejm_circuit,
    gate,
    verify_batch,
    verify_circuit,
)
from ejmnet.errors import UsageError
from ejmnet.quantum import network_distribution

thetas = st.floats(min_value=0.0, max_value=np.pi / 2)


def test_phase_zero_is_identity():
    assert np.allclose(gate("R0", 0).u, np.eye(4))
    assert np.allclose(gate("R1", 0).u, np.eye(4))


def test_controlled_phase_trivial_at_bell_endpoint():
    assert np.allclose(gate("CR", np.pi / 2 - np.pi / 2).u, np.eye(4))


@pytest.mark.parametrize("name", ["H0", "H1"])
def test_hadamard_involution(name):
    h = gate(name).u
    assert np.allclose(h @ h, np.eye(4))


def test_hadamard_is_pauli_sum():
    x = np.array([[0, 1], [1, 0]])
    z = np.diag([1, -1])
    assert np.allclose(gate("H0").u, np.kron((x + z) / np.sqrt(2), np.eye(2)))


def test_cnot_wiring():
    cnot = gate("CNOT", control=0).u
    assert np.allclose(cnot @ np.eye(4)[2], np.eye(4)[3])  # |10> -> |11>
    swapped = gate("CNOT", control=1).u
    assert np.allclose(swapped @ np.eye(4)[1], np.eye(4)[3])  # |01> -> |11>


def test_unknown_gate():
    with pytest.raises(UsageError):
        gate("SWAP")


def test_non_unitary_rejected():
    with pytest.raises(UsageError):
        TwoQubitUnitary(np.ones((4, 4)))


@given(thetas)
def test_circuit_is_unitary(theta):
    u = ejm_circuit(theta).u
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)


def test_bell_endpoint_has_no_controlled_phase():
    u = ejm_circuit(np.pi / 2).u
    steps = [gate("CNOT"), gate("H0"), gate("R0", np.pi / 2), gate("R1", np.pi / 2), gate("H0"), gate("H1")]
    ref = np.eye(4)
    for g in steps:
        ref = g.u @ ref
    assert np.allclose(u, ref)


@pytest.mark.parametrize("theta", [0.0, np.pi / 2])
def test_endpoints_pass(theta):
    v = verify_circuit(theta)
    assert v.passed and v.max_infidelity < 1e-10


def test_theta_zero_permutation_frozen():
    v = verify_circuit(0.0)
    assert v.permutation == {1: 2, 2: 0, 3: 1, 4: 3}
    assert v.control == 0
    assert v.to_dict()["permutation"] == {"1": "10", "2": "00", "3": "01", "4": "11"}


def test_identity_fails():
    v = check_unitary(0.0, np.eye(4))
    assert not v.passed and v.max_infidelity > 0.1


def test_batch_uniform_over_default_grid():
    batch = verify_batch()
    assert len(batch.verdicts) == len(DEFAULT_THETAS) == 21
    assert batch.uniform_permutation and batch.passed


@pytest.mark.parametrize("theta", [0.0, 0.3, np.pi / 4, np.pi / 2])
@pytest.mark.parametrize("settings", ["pauli", "rotated"])
def test_circuit_readout_reproduces_network_statistics(theta, settings):
    a = circuit_network_distribution(theta, 0.9, 0.6, settings, settings)
    b = network_distribution(theta, 0.9, 0.6, settings, settings)
    assert a.linf(b) < 1e-10


def test_diagram_mentions_gates():
    text = diagram()
    assert "[H]" in text and "R(pi/2-theta)" in text
