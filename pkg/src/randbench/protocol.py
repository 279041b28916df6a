"""Randomized benchmarking sequences: generation, assembly and noisy execution.

Length convention: the fit regressor ``length`` counts the gate slots that
carry gate noise. For one qubit that is the ``l_k`` computational pulses plus
the closing pulse (``l_k + 1``); for two qubits it is the ``l_k`` CNOT steps,
the closing layer being one-qubit pulses only. Preparation, the first Pauli
pulse and measurement are absorbed into ``d_if`` by the fit.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import kernels
from .labels import LABEL_CODE, GateLabel
from .noise import (
    IDEAL_CONTEXT,
    ExperimentContext,
    NoiseModel,
    compile_one_qubit_table,
    sample_context,
    two_qubit_channel_for,
)
from .sim import Rotation, z_distribution_from_pauli_vector
from .stabilizer import (
    CliffordGate,
    PauliFrame1Q,
    PauliProduct,
    Tableau,
    frame_apply,
    localize_to_z,
    parity,
    sample_stabilizing_pauli,
    tableau_apply,
)

DEFAULT_LENGTHS = (2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 24, 32, 40, 48, 64, 80, 96)
DEFAULT_N_G = 4
DEFAULT_N_P = 8
DEFAULT_N_E = 8160
DEFAULT_BATCHES = 4


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkPlan:
    lengths: tuple[int, ...] = DEFAULT_LENGTHS
    n_sequences: int = DEFAULT_N_G
    n_randomizations: int = DEFAULT_N_P
    n_shots: int = DEFAULT_N_E
    n_qubits: int = 1
    seed: int = 0
    batches: int = DEFAULT_BATCHES

    def __post_init__(self):
        lengths = tuple(int(v) for v in self.lengths)
        object.__setattr__(self, "lengths", lengths)
        if not lengths or lengths[0] < 1 or any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ProtocolError("lengths must be strictly increasing and >= 1")
        for name in ("n_sequences", "n_randomizations", "n_shots", "batches"):
            if getattr(self, name) < 1:
                raise ProtocolError(f"{name} must be >= 1")
        if self.n_qubits not in (1, 2):
            raise ProtocolError("only one- and two-qubit benchmarks are supported")

    @property
    def n_specs(self) -> int:
        return self.n_sequences * len(self.lengths) * self.n_randomizations


@dataclass(frozen=True)
class SequenceSpec:
    """One fully assembled pulse sequence and its noiseless outcome.

    ``expected`` is the sigma_z outcome bit (one qubit) or the parity of the
    outcomes on ``support`` (two qubits).
    """

    j: int
    k: int
    l_k: int
    m: int
    pulses: tuple[GateLabel, ...]
    expected: int
    support: tuple[int, ...] = (0,)
    n_qubits: int = 1
    closing_eigenstate: int = 0

    @property
    def length(self) -> int:
        return self.l_k + 1 if self.n_qubits == 1 else self.l_k

    @property
    def index(self) -> tuple[int, int, int]:
        return (self.j, self.k, self.m)

    def codes(self) -> np.ndarray:
        return np.array([LABEL_CODE[p] for p in self.pulses], dtype=np.int32)


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def sample_computational_gates(count: int, rng: np.random.Generator, qubit: int = 0) -> list[GateLabel]:
    """i.i.d. pi/2 pulses, uniform over {x, y} x {+, -}."""
    if count < 1:
        raise ProtocolError("count must be >= 1")
    draws = rng.integers(0, 4, size=count)
    return [GateLabel("computational", "xy"[d // 2], int(1 - 2 * (d % 2)), (qubit,)) for d in draws]


def sample_pauli_pulses(count: int, rng: np.random.Generator, qubit: int = 0) -> list[GateLabel]:
    """i.i.d. Pauli pulses, uniform over {0, x, y, z} x {+, -}."""
    if count < 1:
        raise ProtocolError("count must be >= 1")
    draws = rng.integers(0, 8, size=count)
    out = []
    for d in draws:
        axis = "0xyz"[d // 2]
        sign = int(1 - 2 * (d % 2))
        if axis == "0":
            out.append(GateLabel("identity", "", sign, (qubit,)))
        else:
            out.append(GateLabel("pauli", axis, sign, (qubit,)))
    return out


def sample_two_qubit_steps(count: int, rng: np.random.Generator) -> list[tuple[GateLabel, ...]]:
    """Steps of a random pi/2 pulse on each qubit followed by a CNOT of random orientation."""
    if count < 1:
        raise ProtocolError("count must be >= 1")
    steps = []
    for _ in range(count):
        g0 = sample_computational_gates(1, rng, 0)[0]
        g1 = sample_computational_gates(1, rng, 1)[0]
        cx = GateLabel("cnot", "", 1, (0, 1) if rng.random() < 0.5 else (1, 0))
        steps.append((g0, g1, cx))
    return steps


def sample_pauli_layers(count: int, rng: np.random.Generator, n_qubits: int) -> list[tuple[GateLabel, ...]]:
    layers = [sample_pauli_pulses(count, rng, q) for q in range(n_qubits)]
    return [tuple(layer[i] for layer in layers) for i in range(count)]


def ideal_frame(pulses: Sequence[GateLabel], frame: PauliFrame1Q | None = None) -> PauliFrame1Q:
    frame = frame or PauliFrame1Q()
    for p in pulses:
        frame = frame_apply(frame, p.rotation())
    return frame


def closing_gate(frame: PauliFrame1Q, rng: np.random.Generator) -> tuple[GateLabel, int]:
    """Random one of the two pi/2 pulses that take ``frame`` to a sigma_z eigenstate.

    Returns the pulse and the outcome bit it produces.
    """
    candidates = []
    for axis in "xyz":
        for sign in (1, -1):
            after = frame_apply(frame, Rotation(axis, math.pi / 2, sign))
            if after.axis == "z":
                candidates.append((GateLabel("closing", axis, sign), after.z_outcome))
    if len(candidates) != 2:
        raise AssertionError(f"expected 2 closing candidates, found {len(candidates)}")
    return candidates[int(rng.integers(0, 2))]


def assemble_sequence(
    gates: Sequence[GateLabel],
    l_k: int,
    pauli_pulses: Sequence[GateLabel],
    closing: GateLabel,
    *,
    indices: tuple[int, int, int] = (0, 0, 0),
    closing_eigenstate: int | None = None,
) -> SequenceSpec:
    """Interleave ``P_1 G_1 P_2 ... G_l P_{l+1} R P_{l+2}`` and record the ideal outcome."""
    if len(gates) < l_k:
        raise ProtocolError(f"need {l_k} computational gates, got {len(gates)}")
    if len(pauli_pulses) != l_k + 2:
        raise ProtocolError(f"need {l_k + 2} Pauli pulses, got {len(pauli_pulses)}")
    pulses = []
    for i in range(l_k):
        pulses.append(pauli_pulses[i])
        pulses.append(gates[i])
    pulses += [pauli_pulses[l_k], closing, pauli_pulses[l_k + 1]]
    final = ideal_frame(pulses)
    if final.axis != "z":
        raise ProtocolError("closing pulse does not end in a sigma_z eigenstate")
    if closing_eigenstate is None:
        closing_eigenstate = ideal_frame(list(gates[:l_k]) + [closing]).z_outcome
    j, k, m = indices
    return SequenceSpec(j, k, l_k, m, tuple(pulses), final.z_outcome, (0,), 1, closing_eigenstate)


def _clifford_gate(label: GateLabel) -> CliffordGate | None:
    if label.kind == "cnot":
        return CliffordGate.cnot(*label.qubits)
    rot = label.rotation()
    if rot is None:
        return None
    return CliffordGate("rot", label.qubits, rot)


def ideal_tableau(pulses: Sequence[GateLabel], n_qubits: int) -> Tableau:
    tab = Tableau.zero_state(n_qubits)
    for p in pulses:
        g = _clifford_gate(p)
        if g is not None:
            tab = tableau_apply(tab, g)
    return tab


def two_qubit_closing(tableau: Tableau, rng: np.random.Generator) -> tuple[list[GateLabel], PauliProduct]:
    """Localization pulses for a random stabilizer; returns them with the signed Z product."""
    product = sample_stabilizing_pauli(tableau, rng)
    loc = localize_to_z(product, rng)
    pulses = [
        GateLabel("closing", rot.axis, rot.sign, (q,))
        for q, rot in enumerate(loc.rotations)
        if rot is not None
    ]
    return pulses, loc.product


def assemble_two_qubit_sequence(
    steps: Sequence[tuple[GateLabel, ...]],
    l_k: int,
    pauli_layers: Sequence[tuple[GateLabel, ...]],
    closing: Sequence[GateLabel],
    support: tuple[int, ...],
    *,
    indices: tuple[int, int, int] = (0, 0, 0),
    closing_eigenstate: int = 0,
) -> SequenceSpec:
    if len(steps) < l_k or len(pauli_layers) != l_k + 2:
        raise ProtocolError("step or Pauli layer count does not match l_k")
    pulses: list[GateLabel] = []
    for i in range(l_k):
        pulses += pauli_layers[i]
        pulses += steps[i]
    pulses += pauli_layers[l_k]
    pulses += closing
    pulses += pauli_layers[l_k + 1]
    n = len(pauli_layers[0])
    tab = ideal_tableau(pulses, n)
    letters = "".join("Z" if q in support else "I" for q in range(n))
    sign = tab.measurement_sign(PauliProduct(letters))
    if sign is None:
        raise ProtocolError("localized product is not deterministic on the final state")
    j, k, m = indices
    return SequenceSpec(
        j, k, l_k, m, tuple(pulses), 0 if sign == 1 else 1, tuple(support), n, closing_eigenstate
    )


def plan_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0, stream)))


def sequence_rng(seed: int, index: int) -> np.random.Generator:
    """Independent execution stream for the spec at position ``index`` in the plan."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))


def generate_plan(plan: BenchmarkPlan, rng: np.random.Generator | None = None) -> list[SequenceSpec]:
    """All ``N_G * N_l * N_P`` sequences, ordered by (j, k, m)."""
    rng = rng if rng is not None else plan_rng(plan.seed)
    l_max = plan.lengths[-1]
    specs = []
    for j in range(plan.n_sequences):
        if plan.n_qubits == 1:
            gates = sample_computational_gates(l_max, rng)
        else:
            steps = sample_two_qubit_steps(l_max, rng)
        for k, l_k in enumerate(plan.lengths):
            if plan.n_qubits == 1:
                frame = ideal_frame(gates[:l_k])
                closing, eigen = closing_gate(frame, rng)
                for m in range(plan.n_randomizations):
                    paulis = sample_pauli_pulses(l_k + 2, rng)
                    specs.append(
                        assemble_sequence(
                            gates, l_k, paulis, closing, indices=(j, k, m), closing_eigenstate=eigen
                        )
                    )
            else:
                flat = [g for step in steps[:l_k] for g in step]
                closing, zprod = two_qubit_closing(ideal_tableau(flat, plan.n_qubits), rng)
                eigen = 0 if zprod.sign == 1 else 1
                for m in range(plan.n_randomizations):
                    layers = sample_pauli_layers(l_k + 2, rng, plan.n_qubits)
                    specs.append(
                        assemble_two_qubit_sequence(
                            steps,
                            l_k,
                            layers,
                            closing,
                            zprod.support,
                            indices=(j, k, m),
                            closing_eigenstate=eigen,
                        )
                    )
    return specs


def execution_order(n: int, seed: int) -> list[int]:
    """Randomized interleaving order of plan items; results do not depend on it."""
    return [int(i) for i in plan_rng(seed, 1).permutation(n)]


# --------------------------------------------------------------------------
# Execution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    j: int
    k: int
    l_k: int
    m: int
    length: int
    wrong_count: int
    n_shots: int
    p_exact: float = float("nan")
    contexts: tuple[dict, ...] = field(default=())

    @property
    def p_hat(self) -> float:
        return self.wrong_count / self.n_shots

    @property
    def stderr(self) -> float:
        return binomial_stderr(self.p_hat, self.n_shots)

    @property
    def index(self) -> tuple[int, int, int]:
        return (self.j, self.k, self.m)


def binomial_stderr(p: float, n: int) -> float:
    if p <= 0.0 or p >= 1.0:
        return math.sqrt(0.25 / n) * 1e-2
    return math.sqrt(p * (1 - p) / n)


def split_shots(n_shots: int, batches: int) -> list[int]:
    batches = max(1, min(batches, n_shots))
    base, extra = divmod(n_shots, batches)
    return [base + (1 if i < extra else 0) for i in range(batches)]


@lru_cache(maxsize=64)
def _ideal_context_table(noise: NoiseModel) -> np.ndarray:
    return compile_one_qubit_table(noise, IDEAL_CONTEXT)


def one_qubit_table(noise: NoiseModel, context: ExperimentContext) -> np.ndarray:
    if not noise.is_context_dependent:
        return _ideal_context_table(noise)
    return compile_one_qubit_table(noise, context)


def wrong_probability(spec: SequenceSpec, noise: NoiseModel, context: ExperimentContext = IDEAL_CONTEXT) -> float:
    """Exact probability of the wrong outcome (one qubit) or wrong parity (two qubits)."""
    if spec.n_qubits == 1:
        v0 = np.array([1.0, 0.0, 0.0, 1.0 - 2 * noise.prep_flip])
        v = kernels.propagate(one_qubit_table(noise, context), spec.codes(), v0)
        p1 = noise.meas_flip + (1 - 2 * noise.meas_flip) * (1.0 - v[3]) / 2.0
        p1 = min(max(p1, 0.0), 1.0)
        return p1 if spec.expected == 0 else 1.0 - p1
    dist = two_qubit_distribution(spec, noise, context)
    return float(sum(p for b, p in enumerate(dist) if _parity_of(b, spec) != spec.expected))


def _parity_of(outcome: int, spec: SequenceSpec) -> int:
    bits = ((outcome >> 1) & 1, outcome & 1)
    return parity(bits, spec.support)


def two_qubit_distribution(
    spec: SequenceSpec, noise: NoiseModel, context: ExperimentContext = IDEAL_CONTEXT
) -> np.ndarray:
    """Outcome distribution over ``|00>, |01>, |10>, |11>`` (qubit 0 is the high bit)."""
    if spec.n_qubits != 2:
        raise ProtocolError("two_qubit_distribution needs a two-qubit sequence")
    unique: dict[GateLabel, int] = {}
    for p in spec.pulses:
        unique.setdefault(p, len(unique))
    table = np.stack([two_qubit_channel_for(lab, noise, context).ptm for lab in unique])
    codes = np.array([unique[p] for p in spec.pulses], dtype=np.int32)
    one = np.array([1.0, 0.0, 0.0, 1.0 - 2 * noise.prep_flip])
    v = kernels.propagate(table, codes, np.kron(one, one))
    meas = np.diag([1.0, 1.0, 1.0 - 2 * noise.meas_flip, 1.0 - 2 * noise.meas_flip])
    v = np.kron(meas, meas) @ v
    dist = z_distribution_from_pauli_vector(v)
    return dist / dist.sum()


def run_sequence(
    spec: SequenceSpec,
    noise: NoiseModel,
    n_shots: int,
    rng: np.random.Generator,
    batches: int = DEFAULT_BATCHES,
) -> ExperimentRecord:
    """Binomially sampled wrong-outcome count, one quasi-static context per batch."""
    if n_shots < 1:
        raise ProtocolError("n_shots must be >= 1")
    if spec.n_qubits != 1:
        return run_multiqubit_sequence(spec, noise, n_shots, rng, batches)
    wrong = 0
    p_sum = 0.0
    contexts = []
    sizes = split_shots(n_shots, batches)
    for b, size in enumerate(sizes):
        ctx = sample_context(noise, rng, b) if noise.is_context_dependent else IDEAL_CONTEXT
        p = wrong_probability(spec, noise, ctx)
        wrong += int(rng.binomial(size, p))
        p_sum += p * size
        if noise.is_context_dependent:
            contexts.append(ctx.summary())
    return ExperimentRecord(
        spec.j, spec.k, spec.l_k, spec.m, spec.length, wrong, n_shots, p_sum / n_shots, tuple(contexts)
    )


def run_multiqubit_sequence(
    spec: SequenceSpec,
    noise: NoiseModel,
    n_shots: int,
    rng: np.random.Generator,
    batches: int = DEFAULT_BATCHES,
) -> ExperimentRecord:
    """Dense two-qubit simulation; shots drawn from the 4-outcome distribution, scored by parity."""
    if spec.n_qubits > 2:
        raise ProtocolError("more than two qubits is not supported")
    if n_shots < 1:
        raise ProtocolError("n_shots must be >= 1")
    bad = np.array([_parity_of(b, spec) != spec.expected for b in range(4)])
    wrong = 0
    p_sum = 0.0
    contexts = []
    for b, size in enumerate(split_shots(n_shots, batches)):
        ctx = sample_context(noise, rng, b) if noise.is_context_dependent else IDEAL_CONTEXT
        dist = two_qubit_distribution(spec, noise, ctx)
        counts = rng.multinomial(size, dist)
        wrong += int(counts[bad].sum())
        p_sum += float(dist[bad].sum()) * size
        if noise.is_context_dependent:
            contexts.append(ctx.summary())
    return ExperimentRecord(
        spec.j, spec.k, spec.l_k, spec.m, spec.length, wrong, n_shots, p_sum / n_shots, tuple(contexts)
    )


def _run_chunk(args):
    specs, indices, noise, n_shots, seed, batches = args
    return [
        run_sequence(s, noise, n_shots, sequence_rng(seed, i), batches) for s, i in zip(specs, indices)
    ]


def run_plan(
    specs: Sequence[SequenceSpec],
    noise: NoiseModel,
    n_shots: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
    jobs: int = 1,
) -> list[ExperimentRecord]:
    """Execute every spec on its own RNG stream; output is independent of ``jobs``."""
    specs = list(specs)
    idx = list(range(len(specs)))
    if jobs <= 1 or len(specs) < 2:
        return _run_chunk((specs, idx, noise, n_shots, seed, batches))
    n_chunks = min(len(specs), jobs * 4)
    bounds = np.linspace(0, len(specs), n_chunks + 1).astype(int)
    tasks = [
        (specs[a:b], idx[a:b], noise, n_shots, seed, batches) for a, b in zip(bounds, bounds[1:]) if b > a
    ]
    out: list[ExperimentRecord] = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for chunk in pool.map(_run_chunk, tasks):
            out.extend(chunk)
    return out


def simulate_ideal_probability(spec: SequenceSpec) -> float:
    """Noiseless dense probability of observing ``spec.expected`` (the oracle path)."""
    clean = NoiseModel()
    return 1.0 - wrong_probability(spec, clean, IDEAL_CONTEXT)
