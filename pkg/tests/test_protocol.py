import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from randbench.labels import GateLabel
from randbench.noise import NoiseModel
from randbench.protocol import (
    DEFAULT_LENGTHS,
    BenchmarkPlan,
    ProtocolError,
    assemble_sequence,
    binomial_stderr,
    closing_gate,
    generate_plan,
    ideal_frame,
    plan_rng,
    run_plan,
    run_sequence,
    sample_computational_gates,
    sample_pauli_pulses,
    simulate_ideal_probability,
    split_shots,
    two_qubit_distribution,
    wrong_probability,
)
from randbench.sim import CNOT_01, CNOT_10, matrix_exponential_rotation
from randbench.stabilizer import PauliFrame1Q

from conftest import dense_run_one_qubit


def _dense_two_qubit_parity(spec) -> float:
    """Probability that the measured parity equals ``spec.expected``, by statevector simulation."""
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1
    for p in spec.pulses:
        if p.kind == "cnot":
            u = CNOT_01 if p.qubits == (0, 1) else CNOT_10
        else:
            rot = p.rotation()
            if rot is None:
                continue
            r = matrix_exponential_rotation(rot.axis, rot.signed_angle)
            u = np.kron(r, np.eye(2)) if p.qubit == 0 else np.kron(np.eye(2), r)
        psi = u @ psi
    probs = np.abs(psi) ** 2
    ok = 0.0
    for b, pr in enumerate(probs):
        bits = ((b >> 1) & 1, b & 1)
        par = sum(bits[q] for q in spec.support) % 2
        ok += pr * (par == spec.expected)
    return ok


def _random_specs(rng, count, max_len=20):
    out = []
    for _ in range(count):
        l_k = int(rng.integers(1, max_len + 1))
        gates = sample_computational_gates(l_k, rng)
        closing, eigen = closing_gate(ideal_frame(gates), rng)
        out.append(assemble_sequence(gates, l_k, sample_pauli_pulses(l_k + 2, rng), closing,
                                     closing_eigenstate=eigen))
    return out


class TestSampling:
    def test_computational_frequencies(self, rng):
        gates = sample_computational_gates(10_000, rng)
        counts = Counter(g.token() for g in gates)
        assert set(counts) == {"G+x", "G-x", "G+y", "G-y"}
        sigma = math.sqrt(10_000 * 0.25 * 0.75)
        for c in counts.values():
            assert abs(c - 2500) < 3 * sigma

    def test_pauli_frequencies(self, rng):
        pulses = sample_pauli_pulses(10_000, rng)
        counts = Counter(p.token() for p in pulses)
        assert len(counts) == 8
        sigma = math.sqrt(10_000 / 8 * 7 / 8)
        for c in counts.values():
            assert abs(c - 1250) < 3 * sigma

    def test_determinism(self):
        a = sample_computational_gates(50, np.random.default_rng(3))
        b = sample_computational_gates(50, np.random.default_rng(3))
        assert a == b
        assert sample_pauli_pulses(50, np.random.default_rng(3)) == sample_pauli_pulses(50, np.random.default_rng(3))

    def test_identity_pulses_fix_frame(self):
        frame = PauliFrame1Q("x", -1)
        assert ideal_frame([GateLabel("identity", "", 1), GateLabel("identity", "", -1)], frame) == frame

    def test_invalid_count(self, rng):
        with pytest.raises(ProtocolError):
            sample_computational_gates(0, rng)


class TestClosing:
    def test_x_frame_uses_y_pulses(self):
        seen = {}
        for seed in range(40):
            lab, bit = closing_gate(PauliFrame1Q("x", 1), np.random.default_rng(seed))
            assert lab.axis == "y"
            seen[lab.sign] = bit
        # -pi/2 about y takes +x to +z (|0>), +pi/2 to -z (|1>)
        assert seen == {-1: 0, 1: 1}

    def test_z_frame_uses_z_pulses(self):
        for seed in range(10):
            lab, bit = closing_gate(PauliFrame1Q("z", 1), np.random.default_rng(seed))
            assert lab.axis == "z" and bit == 0

    @pytest.mark.parametrize("axis", "xyz")
    @pytest.mark.parametrize("sign", [1, -1])
    def test_every_frame_has_two_candidates(self, axis, sign):
        labels = {closing_gate(PauliFrame1Q(axis, sign), np.random.default_rng(s))[0] for s in range(60)}
        assert len(labels) == 2


class TestAssembly:
    def test_counts(self, rng):
        gates = sample_computational_gates(2, rng)
        closing, _ = closing_gate(ideal_frame(gates), rng)
        spec = assemble_sequence(gates, 2, sample_pauli_pulses(4, rng), closing)
        # P G P G P R P: four Pauli slots and three pi/2 pulses
        assert len(spec.pulses) == 7
        kinds = Counter(p.kind for p in spec.pulses)
        assert kinds["computational"] + kinds["closing"] == 3
        assert kinds["pauli"] + kinds["identity"] == 4
        assert spec.length == 3

    def test_noiseless_outcome_matches_dense(self, rng):
        for spec in _random_specs(rng, 1000):
            psi = dense_run_one_qubit(spec.pulses)
            assert abs(psi[spec.expected]) ** 2 == pytest.approx(1.0, abs=1e-10)

    def test_wrong_pauli_count(self, rng):
        gates = sample_computational_gates(3, rng)
        closing, _ = closing_gate(ideal_frame(gates), rng)
        with pytest.raises(ProtocolError):
            assemble_sequence(gates, 3, sample_pauli_pulses(4, rng), closing)


class TestPlan:
    def test_default_scale_count(self):
        specs = generate_plan(BenchmarkPlan(seed=1))
        assert len(specs) == 4 * 17 * 8 == 544
        assert max(s.l_k for s in specs) == 96

    def test_prefix_property(self):
        specs = generate_plan(BenchmarkPlan(seed=2))
        for j in range(4):
            rows = [s for s in specs if s.j == j and s.m == 0]
            comp = [[p for p in s.pulses if p.kind == "computational"] for s in rows]
            longest = comp[-1]
            assert len(longest) == 96
            for c in comp:
                assert c == longest[: len(c)]

    def test_minimal_plan(self):
        assert len(generate_plan(BenchmarkPlan((3,), 1, 1, 10, seed=0))) == 1

    def test_seed_determinism(self):
        p = BenchmarkPlan((2, 4), 2, 2, 10, seed=5)
        assert generate_plan(p) == generate_plan(p)
        q = BenchmarkPlan((2, 4), 2, 2, 10, seed=6)
        assert generate_plan(p) != generate_plan(q)

    def test_invalid_plans(self):
        with pytest.raises(ProtocolError):
            BenchmarkPlan((4, 2))
        with pytest.raises(ProtocolError):
            BenchmarkPlan(n_shots=0)
        with pytest.raises(ProtocolError):
            BenchmarkPlan(n_qubits=3)

    def test_default_lengths(self):
        assert len(DEFAULT_LENGTHS) == 17 and DEFAULT_LENGTHS[-1] == 96


class TestExecution:
    def test_zero_noise_exact(self):
        specs = generate_plan(BenchmarkPlan((2, 8), 2, 2, 100, seed=0))
        recs = run_plan(specs, NoiseModel(), 100, seed=0)
        assert all(r.wrong_count == 0 and r.p_exact == 0.0 for r in recs)
        assert all(simulate_ideal_probability(s) == pytest.approx(1.0, abs=1e-12) for s in specs)

    def test_depolarizing_closed_form(self, rng):
        dg, dp = 0.01, 0.003
        noise = NoiseModel(depol_per_gate=dg, depol_per_pauli=dp)
        for spec in _random_specs(rng, 50, 40):
            # product over every operation's survival factor
            survive = 1.0
            for p in spec.pulses:
                survive *= (1 - dp) if p.is_pauli_slot else (1 - dg)
            assert wrong_probability(spec, noise) == pytest.approx((1 - survive) / 2, abs=1e-12)
            d_if, d = dp, 1 - (1 - dg) * (1 - dp)
            closed = (1 - (1 - d_if) * (1 - d) ** spec.length) / 2
            assert wrong_probability(spec, noise) == pytest.approx(closed, abs=1e-12)

    def test_spam_flip_probability(self, rng):
        noise = NoiseModel(prep_flip=0.01, meas_flip=0.01)
        for spec in _random_specs(rng, 20):
            assert wrong_probability(spec, noise) == pytest.approx(0.01 * 0.99 + 0.99 * 0.01, abs=1e-12)

    def test_binomial_stderr(self):
        assert binomial_stderr(0.1, 8160) == pytest.approx(0.0033, abs=5e-5)
        assert binomial_stderr(0.0, 100) > 0

    def test_split_shots(self):
        assert split_shots(10, 4) == [3, 3, 2, 2]
        assert split_shots(2, 4) == [1, 1]

    def test_binomial_sampling_unbiased(self, rng):
        spec = _random_specs(rng, 1, 10)[0]
        noise = NoiseModel(depol_per_gate=0.05)
        p = wrong_probability(spec, noise)
        counts = [run_sequence(spec, noise, 1000, np.random.default_rng(s)).wrong_count for s in range(200)]
        se = math.sqrt(p * (1 - p) * 1000 / 200)
        assert abs(np.mean(counts) - 1000 * p) < 4 * se

    def test_jobs_do_not_change_results(self):
        specs = generate_plan(BenchmarkPlan((2, 6, 12), 2, 4, 500, seed=9))
        noise = NoiseModel(depol_per_gate=0.01, amplitude_fluctuation=0.02)
        a = run_plan(specs, noise, 500, seed=9, jobs=1)
        b = run_plan(specs, noise, 500, seed=9, jobs=3)
        assert a == b

    def test_context_batches_recorded(self):
        specs = generate_plan(BenchmarkPlan((2,), 1, 1, 100, seed=0, batches=5))
        rec = run_plan(specs, NoiseModel(detuning_amplitude=0.01), 100, seed=0, batches=5)[0]
        assert len(rec.contexts) == 5


@pytest.fixture(scope="module")
def specs():
    return generate_plan(BenchmarkPlan((1, 2, 4, 8), 5, 5, 100, n_qubits=2, seed=4))


class TestTwoQubit:
    def test_noiseless_parity_matches_dense(self, specs):
        for spec in specs:
            assert _dense_two_qubit_parity(spec) == pytest.approx(1.0, abs=1e-10)
            assert wrong_probability(spec, NoiseModel()) == pytest.approx(0.0, abs=1e-12)

    def test_many_plans_parity(self):
        rng = plan_rng(77)
        for _ in range(5):
            seed = int(rng.integers(0, 2**31))
            for spec in generate_plan(BenchmarkPlan((3, 10), 10, 10, 10, n_qubits=2, seed=seed)):
                assert _dense_two_qubit_parity(spec) == pytest.approx(1.0, abs=1e-10)

    def test_full_depolarization_gives_half(self, specs):
        noise = NoiseModel(depol_2q=1.0)
        for spec in specs[::7]:
            if spec.l_k >= 1:
                assert wrong_probability(spec, noise) == pytest.approx(0.5, abs=1e-12)

    def test_parity_error_decays_per_cnot(self, specs):
        d = 0.02
        for spec in specs[::5]:
            assert wrong_probability(spec, NoiseModel(depol_2q=d)) == pytest.approx(
                (1 - (1 - d) ** spec.length) / 2, abs=1e-12
            )

    def test_distribution_normalized(self, specs):
        dist = two_qubit_distribution(specs[3], NoiseModel(depol_per_gate=0.1, meas_flip=0.02))
        assert dist.sum() == pytest.approx(1.0)
        assert np.all(dist >= 0)

    def test_sequence_layout(self, specs):
        spec = specs[0]
        assert spec.n_qubits == 2
        assert sum(p.kind == "cnot" for p in spec.pulses) == spec.l_k
        assert set(spec.support) <= {0, 1} and spec.support


def test_stats_import_used():
    # chi-square sanity on closing-gate choice balance
    picks = [closing_gate(PauliFrame1Q("y", 1), np.random.default_rng(s))[0].sign for s in range(400)]
    assert stats.binomtest(picks.count(1), 400).pvalue > 1e-3
