"""Noiseless Clifford bookkeeping: one-qubit Pauli frames and n-qubit stabilizer tableaus.

Everything here is exact integer arithmetic; no amplitudes are simulated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sim import AXES, Rotation

_LETTERS = "IXYZ"
_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


class StabilizerError(ValueError):
    pass


def quarter_turns(rotation: Rotation) -> int:
    """Signed number of quarter turns (mod 4); raises for non-Clifford angles."""
    k = rotation.angle / (np.pi / 2)
    kr = round(k)
    if abs(k - kr) > 1e-9:
        raise StabilizerError(f"angle {rotation.angle} is not a multiple of pi/2")
    return (rotation.sign * kr) % 4


def _cross(a: tuple[int, int, int], b: tuple[int, int, int]) -> tuple[int, int, int]:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _rotate_signed_axis(vec: tuple[int, int, int], rotation: Rotation) -> tuple[int, int, int]:
    q = quarter_turns(rotation)
    a = [0, 0, 0]
    a[_AXIS_INDEX[rotation.axis]] = 1
    a = tuple(a)
    for _ in range(q):
        if _cross(a, vec) == (0, 0, 0):
            break
        vec = _cross(a, vec)
    return vec


def _axis_to_vec(axis: str, sign: int) -> tuple[int, int, int]:
    v = [0, 0, 0]
    v[_AXIS_INDEX[axis]] = sign
    return tuple(v)


def _vec_to_axis(vec: tuple[int, int, int]) -> tuple[str, int]:
    for i, c in enumerate(vec):
        if c:
            return AXES[i], int(c)
    raise StabilizerError("zero vector has no axis")


# --------------------------------------------------------------------------
# One-qubit Pauli frame
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PauliFrame1Q:
    """The signed Pauli operator that stabilizes the ideal one-qubit state."""

    axis: str = "z"
    sign: int = 1

    def __post_init__(self):
        if self.axis not in AXES or self.sign not in (1, -1):
            raise StabilizerError(f"invalid frame ({self.axis}, {self.sign})")

    @property
    def bloch(self) -> np.ndarray:
        v = np.zeros(3)
        v[_AXIS_INDEX[self.axis]] = self.sign
        return v

    @property
    def z_outcome(self) -> int | None:
        """Deterministic sigma_z outcome bit, or None off the z axis."""
        if self.axis != "z":
            return None
        return 0 if self.sign == 1 else 1


def frame_apply(frame: PauliFrame1Q, rotation: Rotation | None) -> PauliFrame1Q:
    """Frame after ``rotation``; ``None`` is the identity pulse."""
    if rotation is None:
        return frame
    vec = _rotate_signed_axis(_axis_to_vec(frame.axis, frame.sign), rotation)
    return PauliFrame1Q(*_vec_to_axis(vec))


# --------------------------------------------------------------------------
# Pauli products
# --------------------------------------------------------------------------

# (phase power of i, letter) for letter_a * letter_b
_MUL = {}
for _a in _LETTERS:
    for _b in _LETTERS:
        if _a == "I":
            _MUL[_a, _b] = (0, _b)
        elif _b == "I":
            _MUL[_a, _b] = (0, _a)
        elif _a == _b:
            _MUL[_a, _b] = (0, "I")
        else:
            _c = ({"X", "Y", "Z"} - {_a, _b}).pop()
            cyclic = (_a + _b) in ("XY", "YZ", "ZX")
            _MUL[_a, _b] = (1 if cyclic else 3, _c)


@dataclass(frozen=True)
class PauliProduct:
    """Signed tensor product of Pauli letters, qubit 0 first (e.g. ``-XZ``)."""

    letters: str
    sign: int = 1

    def __post_init__(self):
        if not self.letters or any(c not in _LETTERS for c in self.letters):
            raise StabilizerError(f"invalid Pauli letters {self.letters!r}")
        if self.sign not in (1, -1):
            raise StabilizerError("Pauli product sign must be +1 or -1")

    @classmethod
    def parse(cls, text: str) -> "PauliProduct":
        sign = 1
        if text[0] in "+-":
            sign = -1 if text[0] == "-" else 1
            text = text[1:]
        return cls(text, sign)

    def __str__(self) -> str:
        return ("+" if self.sign == 1 else "-") + self.letters

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.letters) if c != "I")

    @property
    def is_identity(self) -> bool:
        return not self.support

    def bits(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.array([c in "XY" for c in self.letters], dtype=np.uint8)
        z = np.array([c in "ZY" for c in self.letters], dtype=np.uint8)
        return x, z

    def matrix(self) -> np.ndarray:
        from .sim import PAULIS

        m = np.array([[1.0 + 0j]])
        for c in self.letters:
            m = np.kron(m, PAULIS[_LETTERS.index(c)])
        return self.sign * m

    def commutes_with(self, other: "PauliProduct") -> bool:
        anti = sum(
            1
            for a, b in zip(self.letters, other.letters)
            if a != "I" and b != "I" and a != b
        )
        return anti % 2 == 0

    def __mul__(self, other: "PauliProduct") -> "PauliProduct":
        if self.n != other.n:
            raise StabilizerError("Pauli products act on different qubit counts")
        power = 0
        out = []
        for a, b in zip(self.letters, other.letters):
            p, c = _MUL[a, b]
            power += p
            out.append(c)
        power %= 4
        if power % 2:
            raise StabilizerError("product of anticommuting Paulis is not Hermitian")
        sign = self.sign * other.sign * (-1 if power == 2 else 1)
        return PauliProduct("".join(out), sign)


def _from_bits(x, z, sign: int) -> PauliProduct:
    letters = "".join(
        "Y" if (xi and zi) else "X" if xi else "Z" if zi else "I" for xi, zi in zip(x, z)
    )
    return PauliProduct(letters, sign)


# --------------------------------------------------------------------------
# Clifford gates and the tableau
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CliffordGate:
    """``rot`` (one qubit, with a :class:`Rotation`), ``cnot`` or ``cz``."""

    name: str
    qubits: tuple[int, ...]
    rotation: Rotation | None = None

    def __post_init__(self):
        if self.name == "rot":
            if len(self.qubits) != 1 or self.rotation is None:
                raise StabilizerError("rot gates take one qubit and a rotation")
        elif self.name in ("cnot", "cz"):
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise StabilizerError(f"{self.name} needs two distinct qubits")
        else:
            raise StabilizerError(f"unknown Clifford gate {self.name!r}")

    @classmethod
    def rot(cls, qubit: int, axis: str, angle: float, sign: int = 1) -> "CliffordGate":
        return cls("rot", (qubit,), Rotation(axis, angle, sign))

    @classmethod
    def cnot(cls, control: int, target: int) -> "CliffordGate":
        return cls("cnot", (control, target))

    @classmethod
    def cz(cls, a: int, b: int) -> "CliffordGate":
        return cls("cz", (a, b))


def conjugate(product: PauliProduct, gate: CliffordGate) -> PauliProduct:
    """``U P U^dagger`` for the Clifford unitary ``U`` of ``gate``."""
    if max(gate.qubits) >= product.n or min(gate.qubits) < 0:
        raise StabilizerError(f"gate qubits {gate.qubits} out of range for {product.n} qubits")
    if gate.name == "rot":
        q = gate.qubits[0]
        letter = product.letters[q]
        if letter == "I":
            return product
        vec = _rotate_signed_axis(_axis_to_vec(letter.lower(), 1), gate.rotation)
        axis, s = _vec_to_axis(vec)
        letters = product.letters[:q] + axis.upper() + product.letters[q + 1 :]
        return PauliProduct(letters, product.sign * s)
    x, z = product.bits()
    x = x.copy()
    z = z.copy()
    r = 0 if product.sign == 1 else 1
    a, b = gate.qubits
    if gate.name == "cnot":
        r ^= int(x[a] & z[b] & (x[b] ^ z[a] ^ 1))
        x[b] ^= x[a]
        z[a] ^= z[b]
    else:
        r ^= int(x[a] & x[b] & (z[a] ^ z[b]))
        z[a] ^= x[b]
        z[b] ^= x[a]
    return _from_bits(x, z, -1 if r else 1)


@dataclass(frozen=True)
class Tableau:
    """Stabilizer generators of an n-qubit stabilizer state."""

    generators: tuple[PauliProduct, ...]

    @classmethod
    def zero_state(cls, n: int) -> "Tableau":
        gens = tuple(PauliProduct("I" * q + "Z" + "I" * (n - q - 1)) for q in range(n))
        return cls(gens)

    @property
    def n(self) -> int:
        return len(self.generators)

    def bit_matrix(self) -> np.ndarray:
        rows = []
        for g in self.generators:
            x, z = g.bits()
            rows.append(np.concatenate([x, z]))
        return np.array(rows, dtype=np.uint8)

    def is_valid(self) -> bool:
        gens = self.generators
        if any(g.n != self.n for g in gens):
            return False
        for i in range(len(gens)):
            for j in range(i + 1, len(gens)):
                if not gens[i].commutes_with(gens[j]):
                    return False
        return gf2_rank(self.bit_matrix()) == self.n

    def element(self, mask: int) -> PauliProduct:
        """Group element ``prod_i g_i^{b_i}`` for the bits ``b`` of ``mask``."""
        out = PauliProduct("I" * self.n)
        for i, g in enumerate(self.generators):
            if mask >> i & 1:
                out = out * g
        return out

    def elements(self) -> list[PauliProduct]:
        return [self.element(m) for m in range(1, 2**self.n)]

    def decompose(self, product: PauliProduct) -> int | None:
        """Mask of generators whose product equals ``product`` up to sign, else None."""
        target = np.concatenate(product.bits())
        sol = gf2_solve(self.bit_matrix().T, target)
        if sol is None:
            return None
        return int(sum(int(b) << i for i, b in enumerate(sol)))

    def stabilizes(self, product: PauliProduct) -> bool:
        mask = self.decompose(product)
        if mask is None:
            return False
        return self.element(mask) == product

    def measurement_sign(self, product: PauliProduct) -> int | None:
        """Deterministic eigenvalue of ``product`` (ignoring its sign), or None if random."""
        unsigned = PauliProduct(product.letters, 1)
        mask = self.decompose(unsigned)
        if mask is None:
            return None
        return self.element(mask).sign


def tableau_apply(tableau: Tableau, gate: CliffordGate) -> Tableau:
    return Tableau(tuple(conjugate(g, gate) for g in tableau.generators))


def gf2_rank(m: np.ndarray) -> int:
    m = (np.array(m, dtype=np.uint8) & 1).copy()
    rank = 0
    rows, cols = m.shape
    for c in range(cols):
        pivot = next((r for r in range(rank, rows) if m[r, c]), None)
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for r in range(rows):
            if r != rank and m[r, c]:
                m[r] ^= m[rank]
        rank += 1
    return rank


def gf2_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
    """Solve ``a x = b`` over GF(2); None if inconsistent."""
    a = (np.array(a, dtype=np.uint8) & 1)
    b = (np.array(b, dtype=np.uint8) & 1)
    rows, cols = a.shape
    aug = np.concatenate([a, b[:, None]], axis=1)
    pivots = []
    rank = 0
    for c in range(cols):
        pivot = next((r for r in range(rank, rows) if aug[r, c]), None)
        if pivot is None:
            continue
        aug[[rank, pivot]] = aug[[pivot, rank]]
        for r in range(rows):
            if r != rank and aug[r, c]:
                aug[r] ^= aug[rank]
        pivots.append(c)
        rank += 1
    if np.any(aug[rank:, -1]):
        return None
    x = np.zeros(cols, dtype=np.uint8)
    for r, c in enumerate(pivots):
        x[c] = aug[r, -1]
    return x


def sample_stabilizing_pauli(tableau: Tableau, rng: np.random.Generator) -> PauliProduct:
    """Uniformly random non-identity element of the stabilizer group."""
    mask = int(rng.integers(1, 2**tableau.n))
    return tableau.element(mask)


@dataclass(frozen=True)
class Localization:
    """Per-qubit pulses turning a Pauli product into a signed Z product."""

    rotations: tuple[Rotation | None, ...]
    product: PauliProduct

    @property
    def support(self) -> tuple[int, ...]:
        return self.product.support


def localize_to_z(product: PauliProduct, rng: np.random.Generator) -> Localization:
    """Pick one random-sign quarter turn per X/Y qubit so that ``product`` becomes ``+-Z..Z``.

    X letters are rotated about y and Y letters about x; Z and I qubits get no pulse.
    """
    if product.is_identity:
        raise StabilizerError("cannot localize the identity")
    rotations: list[Rotation | None] = []
    out = product
    for q, letter in enumerate(product.letters):
        if letter in "IZ":
            rotations.append(None)
            continue
        axis = "y" if letter == "X" else "x"
        rot = Rotation(axis, np.pi / 2, 1 if rng.random() < 0.5 else -1)
        rotations.append(rot)
        out = conjugate(out, CliffordGate("rot", (q,), rot))
    return Localization(tuple(rotations), out)


def parity(outcome_bits: Sequence[int], support: Sequence[int]) -> int:
    """XOR of ``outcome_bits`` over ``support``."""
    if len(support) == 0:
        raise StabilizerError("parity needs a non-empty support")
    p = 0
    for q in support:
        p ^= int(outcome_bits[q]) & 1
    return p
