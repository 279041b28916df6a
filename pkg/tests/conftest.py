import numpy as np
import pytest

from randbench.sim import PAULI_X, PAULI_Y, PAULI_Z, matrix_exponential_rotation


def dense_rotation(axis: str, signed_angle: float) -> np.ndarray:
    return matrix_exponential_rotation(axis, signed_angle)


def dense_run_one_qubit(pulses) -> np.ndarray:
    """Statevector through the ideal pulses by direct matrix exponentials."""
    psi = np.array([1.0, 0.0], dtype=complex)
    for p in pulses:
        rot = p.rotation()
        if rot is None:
            continue
        psi = dense_rotation(rot.axis, rot.signed_angle) @ psi
    return psi


def bloch_of(psi: np.ndarray) -> np.ndarray:
    rho = np.outer(psi, psi.conj())
    return np.array([np.trace(rho @ s).real for s in (PAULI_X, PAULI_Y, PAULI_Z)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":").rstrip("abcd"))):
            terminalreporter.write_line(line)
