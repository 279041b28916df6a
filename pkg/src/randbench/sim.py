"""Exact one- and two-qubit simulation in the Pauli-transfer representation.

One-qubit states are Bloch vectors; two-qubit states are density matrices.
Channels are real Pauli-transfer matrices (PTMs) acting on the extended
coherence vector ``v_P = Tr(P rho)``, ``P`` running over the normalized-free
Pauli basis ``I, X, Y, Z`` (tensor products for two qubits, qubit 0 first).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

EXACT_TOL = 1e-12
POSITIVITY_TOL = 1e-10

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z)

AXES = ("x", "y", "z")
AXIS_VECTORS = {
    "x": np.array([1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
    "z": np.array([0.0, 0.0, 1.0]),
}


class SimulationError(ValueError):
    """Invalid parameters or mismatched dimensions."""


@lru_cache(maxsize=None)
def pauli_basis(n_qubits: int) -> tuple[np.ndarray, ...]:
    """Tensor-product Pauli basis for ``n_qubits`` (qubit 0 is the leftmost factor)."""
    out = []
    for letters in itertools.product(range(4), repeat=n_qubits):
        m = np.array([[1.0 + 0j]])
        for a in letters:
            m = np.kron(m, PAULIS[a])
        out.append(m)
    return tuple(out)


def _n_qubits(dim: int) -> int:
    if dim == 2:
        return 1
    if dim == 4:
        return 2
    raise SimulationError(f"unsupported Hilbert-space dimension {dim}")


# --------------------------------------------------------------------------
# States
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BlochState:
    """One-qubit state as a Bloch vector; ``|0>`` is ``(0, 0, 1)``."""

    rx: float
    ry: float
    rz: float

    def __post_init__(self):
        if self.rx**2 + self.ry**2 + self.rz**2 > 1 + EXACT_TOL:
            raise SimulationError("Bloch vector longer than 1")

    @classmethod
    def zero(cls) -> "BlochState":
        return cls(0.0, 0.0, 1.0)

    @classmethod
    def from_vector(cls, v) -> "BlochState":
        v = np.asarray(v, dtype=float)
        if v.shape == (4,):
            v = v[1:]
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz])

    @property
    def extended(self) -> np.ndarray:
        """The PTM-space vector ``(1, rx, ry, rz)``."""
        return np.array([1.0, self.rx, self.ry, self.rz])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def to_density(self) -> "DensityMatrix":
        rho = 0.5 * (PAULI_I + self.rx * PAULI_X + self.ry * PAULI_Y + self.rz * PAULI_Z)
        return DensityMatrix(rho)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix on one or two qubits."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise SimulationError("density matrix must be square")
        _n_qubits(m.shape[0])
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.dim)

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        rho = np.zeros((d, d), dtype=complex)
        rho[0, 0] = 1.0
        return cls(rho)

    @classmethod
    def from_statevector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_pauli_vector(cls, v) -> "DensityMatrix":
        v = np.asarray(v, dtype=float)
        n = _n_qubits(int(round(np.sqrt(v.size))))
        d = 2**n
        rho = sum(c * p for c, p in zip(v, pauli_basis(n))) / d
        return cls(rho)

    def pauli_vector(self) -> np.ndarray:
        """Coherence vector ``Tr(P rho)`` over the Pauli basis."""
        return np.array([np.trace(p @ self.entries).real for p in pauli_basis(self.n_qubits)])

    def is_valid(self, tol: float = POSITIVITY_TOL) -> bool:
        m = self.entries
        if not np.allclose(m, m.conj().T, atol=tol):
            return False
        if abs(np.trace(m) - 1) > tol:
            return False
        return float(np.linalg.eigvalsh(m).min()) >= -tol


def random_pure_state(rng: np.random.Generator, n_qubits: int = 1) -> np.ndarray:
    """Haar-random state vector."""
    d = 2**n_qubits
    psi = rng.normal(size=d) + 1j * rng.normal(size=d)
    return psi / np.linalg.norm(psi)


# --------------------------------------------------------------------------
# Channels
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Channel:
    """Trace-preserving map as a Pauli-transfer matrix, with its unitary when it has one."""

    ptm: np.ndarray
    unitary: np.ndarray | None = field(default=None)

    def __post_init__(self):
        ptm = np.asarray(self.ptm, dtype=float).copy()
        if ptm.ndim != 2 or ptm.shape[0] != ptm.shape[1] or ptm.shape[0] not in (4, 16):
            raise SimulationError(f"PTM must be 4x4 or 16x16, got {ptm.shape}")
        ptm.setflags(write=False)
        object.__setattr__(self, "ptm", ptm)
        if self.unitary is not None:
            u = np.asarray(self.unitary, dtype=complex).copy()
            u.setflags(write=False)
            object.__setattr__(self, "unitary", u)

    @property
    def dim(self) -> int:
        return 2 if self.ptm.shape[0] == 4 else 4

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.dim)

    def then(self, other: "Channel") -> "Channel":
        """Channel that applies ``self`` first and ``other`` second."""
        if other.dim != self.dim:
            raise SimulationError("cannot compose channels of different dimension")
        u = None
        if self.unitary is not None and other.unitary is not None:
            u = other.unitary @ self.unitary
        return Channel(other.ptm @ self.ptm, u)

    def is_pauli_channel(self, tol: float = EXACT_TOL) -> bool:
        off = self.ptm - np.diag(np.diag(self.ptm))
        return bool(np.abs(off).max() <= tol)

    def is_trace_preserving(self, tol: float = EXACT_TOL) -> bool:
        top = np.zeros(self.ptm.shape[0])
        top[0] = 1.0
        return bool(np.abs(self.ptm[0] - top).max() <= tol)

    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ij |i><j| (x) Lambda(|i><j|)``, trace ``dim``."""
        d = self.dim
        basis = pauli_basis(self.n_qubits)
        out = np.zeros((d * d, d * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                coeff = np.array([np.trace(p @ e) for p in basis])
                img_coeff = self.ptm @ coeff
                img = sum(c * p for c, p in zip(img_coeff, basis)) / d
                out += np.kron(e, img)
        return out

    def min_choi_eigenvalue(self) -> float:
        c = self.choi()
        return float(np.linalg.eigvalsh(0.5 * (c + c.conj().T)).min())

    def is_completely_positive(self, tol: float = POSITIVITY_TOL) -> bool:
        return self.min_choi_eigenvalue() >= -tol

    def kraus(self, tol: float = POSITIVITY_TOL) -> list[np.ndarray]:
        """Kraus operators from the Choi eigendecomposition (CP channels only)."""
        d = self.dim
        w, v = np.linalg.eigh(0.5 * (self.choi() + self.choi().conj().T))
        if w.min() < -tol:
            raise SimulationError("channel is not completely positive")
        ops = []
        for val, vec in zip(w, v.T):
            if val > tol:
                # vec indexes (input i, output k); Kraus[k, i]
                ops.append(np.sqrt(val) * vec.reshape(d, d).T)
        return ops


def ptm_from_unitary(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    n = _n_qubits(u.shape[0])
    basis = pauli_basis(n)
    d = u.shape[0]
    udag = u.conj().T
    return np.array(
        [[np.trace(p @ u @ q @ udag).real / d for q in basis] for p in basis]
    )


def ptm_from_kraus(kraus_ops: Sequence[np.ndarray]) -> np.ndarray:
    d = kraus_ops[0].shape[0]
    basis = pauli_basis(_n_qubits(d))
    out = np.zeros((d * d, d * d))
    for i, p in enumerate(basis):
        for j, q in enumerate(basis):
            img = sum(k @ q @ k.conj().T for k in kraus_ops)
            out[i, j] = np.trace(p @ img).real / d
    return out


def unitary_channel(u: np.ndarray) -> Channel:
    return Channel(ptm_from_unitary(u), u)


def identity_channel(dim: int = 2) -> Channel:
    return Channel(np.eye(dim * dim), np.eye(dim, dtype=complex))


def rotation_matrix_3d(n, theta: float) -> np.ndarray:
    """Rodrigues rotation of Bloch vectors by ``theta`` about unit vector ``n``."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    k = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + np.sin(theta) * k + (1 - np.cos(theta)) * (k @ k)


def su2(n, theta: float) -> np.ndarray:
    """``exp(-i theta n.sigma / 2)``."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    ns = n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z
    return np.cos(theta / 2) * PAULI_I - 1j * np.sin(theta / 2) * ns


def axis_rotation_channel(n, theta: float) -> Channel:
    ptm = np.eye(4)
    ptm[1:, 1:] = rotation_matrix_3d(n, theta)
    return Channel(ptm, su2(n, theta))


@dataclass(frozen=True)
class Rotation:
    """Major-axis rotation ``exp(-+ i sigma_axis angle/2)``; sign ``+1`` is right-handed."""

    axis: str
    angle: float
    sign: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise SimulationError(f"invalid rotation axis {self.axis!r}")
        if self.sign not in (1, -1):
            raise SimulationError("rotation sign must be +1 or -1")

    @property
    def signed_angle(self) -> float:
        return self.sign * self.angle

    def channel(self) -> Channel:
        return rotation_unitary(self.axis, self.angle, self.sign)


def rotation_unitary(axis: str, angle: float, sign: int = 1) -> Channel:
    """Unitary channel of ``exp(-sign * i sigma_axis angle / 2)``."""
    if axis not in AXES:
        raise SimulationError(f"invalid rotation axis {axis!r}")
    if sign not in (1, -1, "+", "-"):
        raise SimulationError(f"invalid rotation sign {sign!r}")
    if not 0 < angle <= 2 * np.pi + EXACT_TOL:
        raise SimulationError("rotation angle must lie in (0, 2*pi]")
    s = 1 if sign in (1, "+") else -1
    return axis_rotation_channel(AXIS_VECTORS[axis], s * angle)


def depolarizing_channel(d: float, dim: int = 2) -> Channel:
    """``rho -> (1-d) rho + d I/dim``."""
    if not 0.0 <= d <= 1.0:
        raise SimulationError(f"depolarizing probability {d} outside [0, 1]")
    diag = np.full(dim * dim, 1.0 - d)
    diag[0] = 1.0
    return Channel(np.diag(diag))


def dephasing_channel(coherence_factor: float) -> Channel:
    """Scale the transverse Bloch components by ``coherence_factor``."""
    if not 0.0 <= coherence_factor <= 1.0:
        raise SimulationError("coherence factor outside [0, 1]")
    return Channel(np.diag([1.0, coherence_factor, coherence_factor, 1.0]))


def bit_flip_channel(q: float) -> Channel:
    if not 0.0 <= q <= 1.0:
        raise SimulationError(f"flip probability {q} outside [0, 1]")
    return Channel(np.diag([1.0, 1.0, 1.0 - 2 * q, 1.0 - 2 * q]))


def embed_one_qubit(channel: Channel, qubit: int) -> Channel:
    """Lift a one-qubit channel to act on ``qubit`` of a two-qubit register."""
    if channel.dim != 2:
        raise SimulationError("only one-qubit channels can be embedded")
    if qubit not in (0, 1):
        raise SimulationError(f"qubit index {qubit} out of range")
    eye = identity_channel(2)
    parts = (channel, eye) if qubit == 0 else (eye, channel)
    return tensor(*parts)


def tensor(a: Channel, b: Channel) -> Channel:
    if a.dim != 2 or b.dim != 2:
        raise SimulationError("tensor products are limited to two qubits")
    u = None
    if a.unitary is not None and b.unitary is not None:
        u = np.kron(a.unitary, b.unitary)
    return Channel(np.kron(a.ptm, b.ptm), u)


CNOT_01 = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CNOT_10 = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)
CZ_GATE = np.diag([1, 1, 1, -1]).astype(complex)


def cnot_channel(control: int, target: int) -> Channel:
    if (control, target) == (0, 1):
        return unitary_channel(CNOT_01)
    if (control, target) == (1, 0):
        return unitary_channel(CNOT_10)
    raise SimulationError(f"invalid CNOT qubits ({control}, {target})")


def cz_channel() -> Channel:
    return unitary_channel(CZ_GATE)


# --------------------------------------------------------------------------
# Application and measurement
# --------------------------------------------------------------------------


def apply_channel(state, channel: Channel):
    """Apply ``channel`` to a :class:`BlochState` or :class:`DensityMatrix`."""
    if isinstance(state, BlochState):
        if channel.dim != 2:
            raise SimulationError("one-qubit state given a two-qubit channel")
        out = channel.ptm @ state.extended
        return BlochState.from_vector(out)
    if isinstance(state, DensityMatrix):
        if channel.dim != state.dim:
            raise SimulationError("state and channel dimensions differ")
        return DensityMatrix.from_pauli_vector(channel.ptm @ state.pauli_vector())
    raise SimulationError(f"unsupported state type {type(state).__name__}")


def measure_z_prob(state):
    """Probability of ``|1>`` for one qubit; the computational-basis distribution otherwise."""
    if isinstance(state, BlochState):
        return (1.0 - state.rz) / 2.0
    if isinstance(state, DensityMatrix):
        if state.n_qubits == 1:
            return float(state.entries[1, 1].real)
        p = np.clip(np.diag(state.entries).real, 0.0, None)
        return p / p.sum()
    raise SimulationError(f"unsupported state type {type(state).__name__}")


def z_distribution_from_pauli_vector(v: np.ndarray) -> np.ndarray:
    """Computational-basis probabilities from a two-qubit coherence vector.

    Only the ``II, IZ, ZI, ZZ`` components contribute.
    """
    ii, iz, zi, zz = v[0], v[3], v[12], v[15]
    p = np.empty(4)
    for idx, (b0, b1) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        s0 = 1 - 2 * b0
        s1 = 1 - 2 * b1
        p[idx] = (ii + s1 * iz + s0 * zi + s0 * s1 * zz) / 4.0
    return np.clip(p, 0.0, 1.0)


# --------------------------------------------------------------------------
# Twirling and the Clifford group
# --------------------------------------------------------------------------


def twirl(channel: Channel, unitary_set: Iterable[Channel]) -> Channel:
    """Average of ``U^dagger o channel o U`` over ``unitary_set``."""
    members = list(unitary_set)
    if not members:
        raise SimulationError("twirl needs a non-empty unitary set")
    acc = np.zeros_like(channel.ptm)
    for u in members:
        if u.unitary is None:
            raise SimulationError("twirl set must contain unitary channels")
        # unitary PTMs are orthogonal, so the inverse is the transpose
        acc += u.ptm.T @ channel.ptm @ u.ptm
    return Channel(acc / len(members))


def pauli_group_channels(n_qubits: int = 1) -> list[Channel]:
    """The ``4**n`` Pauli conjugations."""
    return [unitary_channel(p) for p in pauli_basis(n_qubits)]


@lru_cache(maxsize=1)
def _clifford_unitaries() -> tuple[np.ndarray, ...]:
    gens = [su2(AXIS_VECTORS["x"], np.pi / 2), su2(AXIS_VECTORS["y"], np.pi / 2)]
    found: dict[bytes, np.ndarray] = {}
    frontier = [np.eye(2, dtype=complex)]
    key = lambda u: np.rint(ptm_from_unitary(u)).astype(np.int8).tobytes()  # noqa: E731
    found[key(frontier[0])] = frontier[0]
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                w = g @ u
                k = key(w)
                if k not in found:
                    found[k] = w
                    nxt.append(w)
        frontier = nxt
    return tuple(found.values())


def clifford_group_channels() -> list[Channel]:
    """The 24 one-qubit Clifford operations, generated by x and y quarter turns."""
    return [unitary_channel(u) for u in _clifford_unitaries()]


def random_channel(rng: np.random.Generator, dim: int = 2, rank: int | None = None) -> Channel:
    """Random CPTP map from a Gaussian Stinespring isometry."""
    rank = rank or dim * dim
    g = rng.normal(size=(rank * dim, dim)) + 1j * rng.normal(size=(rank * dim, dim))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    kraus_ops = [q[k * dim : (k + 1) * dim, :] for k in range(rank)]
    return Channel(ptm_from_kraus(kraus_ops))


def matrix_exponential_rotation(axis: str, signed_angle: float) -> np.ndarray:
    """Independent check path: ``expm(-i angle sigma/2)`` via scipy."""
    sigma = {"x": PAULI_X, "y": PAULI_Y, "z": PAULI_Z}[axis]
    return scipy.linalg.expm(-0.5j * signed_angle * sigma)


def average_gate_fidelity(channel: Channel, target: Channel) -> float:
    """Average fidelity of ``channel`` to the unitary ``target`` over pure inputs."""
    d = channel.dim
    error = Channel(target.ptm.T @ channel.ptm)
    f_pro = np.trace(error.ptm) / d**2
    return float((d * f_pro + 1) / (d + 1))
