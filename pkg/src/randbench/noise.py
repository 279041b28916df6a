"""Declarative per-operation noise models compiled into channels.

Times are in microseconds, rates in 1/us and detunings in rad/us. A z-axis
pulse is a frame change: it gets no over-rotation or amplitude error but
still sits through a delay of ``t_z`` per quarter turn, during which dephasing
and detuning act.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .labels import ONE_QUBIT_LABELS, GateLabel
from .sim import (
    AXIS_VECTORS,
    Channel,
    axis_rotation_channel,
    bit_flip_channel,
    cnot_channel,
    depolarizing_channel,
    dephasing_channel,
    embed_one_qubit,
    identity_channel,
)

WAVEFORMS = ("constant", "sinusoidal")
_PROBABILITIES = ("depol_per_gate", "depol_per_pauli", "depol_2q", "prep_flip", "meas_flip")
_NONNEGATIVE = (
    "dephasing_rate",
    "detuning_amplitude",
    "detuning_frequency",
    "amplitude_fluctuation",
    "spont_rate",
    "t_pi2",
    "t_pi",
    "t_z",
)
_COHERENT = ("overrotation", "axis_tilt", "detuning_amplitude", "amplitude_fluctuation")


class NoiseModelError(ValueError):
    pass


class UnsupportedModelError(NoiseModelError):
    """The requested analytic quantity does not exist for this model."""


@dataclass(frozen=True)
class NoiseModel:
    depol_per_gate: float = 0.0
    depol_per_pauli: float = 0.0
    depol_2q: float = 0.0
    overrotation: float = 0.0
    axis_tilt: float = 0.0
    dephasing_rate: float = 0.0
    detuning_amplitude: float = 0.0
    detuning_waveform: str = "constant"
    detuning_frequency: float = 6e-5  # 60 Hz
    amplitude_fluctuation: float = 0.0
    spont_rate: float = 0.0
    prep_flip: float = 0.0
    meas_flip: float = 0.0
    t_pi2: float = 1.0
    t_pi: float = 2.0
    t_z: float = 1.0
    identity_takes_time: bool = False

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "NoiseModel":
        return replace(self, **changes)

    @property
    def is_context_dependent(self) -> bool:
        return self.detuning_amplitude > 0 or self.amplitude_fluctuation > 0

    @property
    def is_depolarizing_only(self) -> bool:
        return all(getattr(self, name) == 0 for name in _COHERENT) and (
            self.dephasing_rate == 0 and self.spont_rate == 0
        )

    @property
    def is_memoryless(self) -> bool:
        """False when quasi-static sampling correlates errors across pulses."""
        return not self.is_context_dependent

    def duration(self, label: GateLabel) -> float:
        if label.kind == "identity":
            return self.t_pi if self.identity_takes_time else 0.0
        if label.kind == "cnot":
            return 0.0
        quarter = 2 if label.kind == "pauli" else 1
        if label.axis == "z":
            return self.t_z * quarter
        return self.t_pi if quarter == 2 else self.t_pi2

    def mean_step_duration(self) -> float:
        """Mean duration of one randomized computational gate (pi/2 pulse plus Pauli pulse)."""
        pauli = [lab for lab in ONE_QUBIT_LABELS if lab.is_pauli_slot]
        comp = [lab for lab in ONE_QUBIT_LABELS if lab.kind == "computational"]
        return float(
            np.mean([self.duration(lab) for lab in comp])
            + np.mean([self.duration(lab) for lab in pauli])
        )


@dataclass(frozen=True)
class ExperimentContext:
    """Quasi-static values held fixed for one batch of repetitions."""

    detuning: float = 0.0
    amplitude_factor: float = 1.0
    stream_id: int = 0
    detuning_phase: float = 0.0

    def summary(self) -> dict:
        return {
            "detuning": round(self.detuning, 12),
            "amplitude_factor": round(self.amplitude_factor, 12),
        }


IDEAL_CONTEXT = ExperimentContext()


def sample_context(noise: NoiseModel, rng: np.random.Generator, stream_id: int = 0) -> ExperimentContext:
    """Draw the slow parameters for one batch.

    Constant waveform: detuning ~ Normal(0, amplitude). Sinusoidal waveform:
    ``amplitude * sin(phase)`` with a uniform phase, i.e. the line-frequency
    field at an unsynchronized start time (held fixed over one sequence).
    """
    detuning = 0.0
    phase = 0.0
    if noise.detuning_amplitude > 0:
        if noise.detuning_waveform == "constant":
            detuning = float(rng.normal(0.0, noise.detuning_amplitude))
        else:
            phase = float(rng.uniform(0.0, 2 * np.pi))
            detuning = noise.detuning_amplitude * np.sin(phase)
    amp = 1.0
    if noise.amplitude_fluctuation > 0:
        amp = float(1.0 + rng.normal(0.0, noise.amplitude_fluctuation))
    return ExperimentContext(detuning, amp, stream_id, phase)


def _pulse_axis(axis: str, tilt: float) -> np.ndarray:
    base = AXIS_VECTORS[axis]
    return np.cos(tilt) * base + np.sin(tilt) * AXIS_VECTORS["z"]


def driven_rotation(axis_vector, signed_angle: float, duration: float, detuning: float) -> Channel:
    """Exact rotation under a resonant drive plus a static detuning for ``duration``."""
    if duration <= 0:
        if signed_angle == 0:
            return identity_channel(2)
        return axis_rotation_channel(axis_vector, signed_angle)
    omega = (signed_angle / duration) * np.asarray(axis_vector, dtype=float)
    omega = omega + detuning * AXIS_VECTORS["z"]
    rate = float(np.linalg.norm(omega))
    if rate == 0:
        return identity_channel(2)
    return axis_rotation_channel(omega / rate, rate * duration)


def _dissipation(noise: NoiseModel, duration: float, beam_on: bool) -> Channel | None:
    out = None
    if noise.dephasing_rate > 0 and duration > 0:
        out = dephasing_channel(np.exp(-noise.dephasing_rate * duration))
    if beam_on and noise.spont_rate > 0 and duration > 0:
        sp = depolarizing_channel(1.0 - np.exp(-noise.spont_rate * duration))
        out = sp if out is None else out.then(sp)
    return out


def channel_for(label: GateLabel, noise: NoiseModel, context: ExperimentContext = IDEAL_CONTEXT) -> Channel:
    """Noisy channel of a one-qubit pulse: unitary error, dissipation, then depolarization."""
    if label.kind == "cnot":
        raise NoiseModelError("use two_qubit_channel_for CNOT labels")
    t = noise.duration(label)
    if label.kind == "identity":
        chan = driven_rotation(AXIS_VECTORS["x"], 0.0, t, context.detuning)
        beam = False
    elif label.axis == "z":
        # frame change plus a free-precession delay; both are z rotations
        chan = axis_rotation_channel(AXIS_VECTORS["z"], label.sign * label.angle)
        if t > 0 and context.detuning != 0:
            chan = chan.then(axis_rotation_channel(AXIS_VECTORS["z"], context.detuning * t))
        beam = False
    else:
        angle = label.angle * context.amplitude_factor + noise.overrotation
        chan = driven_rotation(
            _pulse_axis(label.axis, noise.axis_tilt), label.sign * angle, t, context.detuning
        )
        beam = True
    diss = _dissipation(noise, t, beam)
    if diss is not None:
        chan = chan.then(diss)
    d = noise.depol_per_pauli if label.is_pauli_slot else noise.depol_per_gate
    if d > 0:
        chan = chan.then(depolarizing_channel(d))
    return chan


def two_qubit_channel_for(
    label: GateLabel, noise: NoiseModel, context: ExperimentContext = IDEAL_CONTEXT
) -> Channel:
    """Channel on the two-qubit register; CNOTs carry ``depol_2q``."""
    if label.kind == "cnot":
        chan = cnot_channel(*label.qubits)
        if noise.depol_2q > 0:
            chan = chan.then(depolarizing_channel(noise.depol_2q, dim=4))
        return chan
    return embed_one_qubit(channel_for(label.on(0), noise, context), label.qubit)


def compile_one_qubit_table(noise: NoiseModel, context: ExperimentContext = IDEAL_CONTEXT) -> np.ndarray:
    """PTMs for every one-qubit label, indexed by :data:`labels.LABEL_CODE`."""
    return np.stack([channel_for(lab, noise, context).ptm for lab in ONE_QUBIT_LABELS])


def spam_channels(noise: NoiseModel) -> tuple[Channel, Channel]:
    """(preparation, measurement) bit-flip channels around ideal |0> prep and sigma_z readout."""
    return bit_flip_channel(noise.prep_flip), bit_flip_channel(noise.meas_flip)


def effective_dif(noise: NoiseModel) -> float:
    """Combined depolarization of preparation, first Pauli pulse and measurement.

    A bit flip with probability q on a sigma_z eigenstate (or just before a
    sigma_z readout) acts like depolarization with probability 2q.
    """
    if not noise.is_depolarizing_only:
        raise UnsupportedModelError("no closed-form d_if for models with coherent or time-based noise")
    return 1.0 - (1 - 2 * noise.prep_flip) * (1 - noise.depol_per_pauli) * (1 - 2 * noise.meas_flip)


def effective_d(noise: NoiseModel) -> float:
    """Depolarization of one randomized computational gate for depolarizing-only models."""
    if not noise.is_depolarizing_only:
        raise UnsupportedModelError("no closed-form d for models with coherent or time-based noise")
    return 1.0 - (1 - noise.depol_per_gate) * (1 - noise.depol_per_pauli)


def validate(noise: NoiseModel) -> list[str]:
    """Range and complete-positivity violations; empty means the model is usable."""
    problems = []
    for name in _PROBABILITIES:
        v = getattr(noise, name)
        if not 0.0 <= v <= 1.0:
            problems.append(f"{name}={v} outside [0, 1]")
    for name in _NONNEGATIVE:
        v = getattr(noise, name)
        if not v >= 0.0:
            problems.append(f"{name}={v} must be >= 0")
    if noise.detuning_waveform not in WAVEFORMS:
        problems.append(f"detuning_waveform={noise.detuning_waveform!r} not in {WAVEFORMS}")
    if problems:
        return problems
    contexts = [IDEAL_CONTEXT]
    if noise.detuning_amplitude > 0 or noise.amplitude_fluctuation > 0:
        contexts.append(
            ExperimentContext(noise.detuning_amplitude, 1.0 + noise.amplitude_fluctuation)
        )
    for ctx in contexts:
        for lab in ONE_QUBIT_LABELS:
            try:
                chan = channel_for(lab, noise, ctx)
            except ValueError as exc:
                problems.append(f"{lab.token()}: {exc}")
                continue
            if not chan.is_trace_preserving(1e-10):
                problems.append(f"{lab.token()}: channel not trace preserving")
            if not chan.is_completely_positive():
                problems.append(f"{lab.token()}: channel not completely positive")
    return problems
