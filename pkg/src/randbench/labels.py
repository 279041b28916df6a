"""Gate labels shared by the protocol, noise compiler and record files.

Token grammar (``@q`` suffix only on multi-qubit registers)::

    G+x   computational pi/2 pulse       P-y   Pauli pi pulse
    I+    identity Pauli pulse (b = 0)   R+z   closing pi/2 pulse
    CX01  CNOT with control 0, target 1
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .sim import Rotation

KINDS = ("computational", "pauli", "identity", "closing", "cnot")
_PREFIX = {"computational": "G", "pauli": "P", "identity": "I", "closing": "R"}
_KIND_OF = {v: k for k, v in _PREFIX.items()}
_TOKEN = re.compile(r"^(?:([GPIR])([+-])([xyz]?)|CX([0-9])([0-9]))(?:@([0-9]+))?$")


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class GateLabel:
    kind: str
    axis: str = ""
    sign: int = 1
    qubits: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LabelError(f"unknown gate kind {self.kind!r}")
        if self.sign not in (1, -1):
            raise LabelError("sign must be +1 or -1")
        if self.kind == "computational" and self.axis not in ("x", "y"):
            raise LabelError("computational gates rotate about x or y")
        if self.kind in ("pauli", "closing") and self.axis not in ("x", "y", "z"):
            raise LabelError(f"{self.kind} pulses need an x, y or z axis")
        if self.kind == "identity" and self.axis:
            raise LabelError("identity pulses have no axis")
        if self.kind == "cnot":
            if len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]:
                raise LabelError("CNOT needs distinct control and target")
        elif len(self.qubits) != 1:
            raise LabelError("one-qubit pulses act on exactly one qubit")

    @property
    def angle(self) -> float:
        if self.kind in ("computational", "closing"):
            return np.pi / 2
        if self.kind == "pauli":
            return np.pi
        return 0.0

    @property
    def is_pauli_slot(self) -> bool:
        return self.kind in ("pauli", "identity")

    @property
    def qubit(self) -> int:
        return self.qubits[0]

    def rotation(self) -> Rotation | None:
        if self.kind in ("identity", "cnot"):
            return None
        return Rotation(self.axis, self.angle, self.sign)

    def on(self, qubit: int) -> "GateLabel":
        return GateLabel(self.kind, self.axis, self.sign, (qubit,))

    def token(self, multi: bool = False) -> str:
        if self.kind == "cnot":
            return f"CX{self.qubits[0]}{self.qubits[1]}"
        core = f"{_PREFIX[self.kind]}{'+' if self.sign == 1 else '-'}{self.axis}"
        return f"{core}@{self.qubit}" if multi else core

    @classmethod
    def parse(cls, token: str) -> "GateLabel":
        m = _TOKEN.match(token)
        if not m:
            raise LabelError(f"malformed gate token {token!r}")
        prefix, sign, axis, c, t, q = m.groups()
        if prefix is None:
            return cls("cnot", "", 1, (int(c), int(t)))
        return cls(_KIND_OF[prefix], axis, 1 if sign == "+" else -1, (int(q or 0),))

    def __str__(self) -> str:
        return self.token(multi=self.kind != "cnot" and self.qubit != 0)


def _one_qubit_labels() -> tuple[GateLabel, ...]:
    out = [GateLabel("identity", "", s) for s in (1, -1)]
    out += [GateLabel("pauli", a, s) for a in "xyz" for s in (1, -1)]
    out += [GateLabel("computational", a, s) for a in "xy" for s in (1, -1)]
    out += [GateLabel("closing", a, s) for a in "xyz" for s in (1, -1)]
    return tuple(out)


# Code table for the propagation kernel; order is part of no file format.
ONE_QUBIT_LABELS = _one_qubit_labels()
LABEL_CODE = {lab: i for i, lab in enumerate(ONE_QUBIT_LABELS)}
