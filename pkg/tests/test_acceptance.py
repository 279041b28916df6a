"""Acceptance criteria 1-9; each test adds one PASS/FAIL line to the terminal summary."""
import json
import math
import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import ACCEPTANCE, dense_run_one_qubit
from randbench.appendix import (
    RamseyPlan,
    default_delays,
    default_rabi_durations,
    rabi_flop,
    ramsey_refocused,
    ramsey_unrefocused,
    spont_experiment,
)
from randbench.cli import main
from randbench.estimator import (
    FitWarning,
    bootstrap,
    fit_exponential,
    fit_records,
    aggregate,
    scatter_diagnostic,
)
from randbench.labels import ONE_QUBIT_LABELS
from randbench.noise import NoiseModel, channel_for
from randbench.protocol import BenchmarkPlan, generate_plan, run_plan
from randbench.sim import (
    average_gate_fidelity,
    clifford_group_channels,
    pauli_group_channels,
    random_channel,
    twirl,
)

TAU = NoiseModel().mean_step_duration()


@contextmanager
def criterion(label: str, title: str, budget: float | None = None):
    """Time the block and record one summary line whatever the outcome."""
    info: dict = {}
    t0 = time.perf_counter()
    try:
        yield info
        elapsed = time.perf_counter() - t0
        if budget is not None:
            assert elapsed < budget, f"runtime {elapsed:.1f} s exceeds {budget} s"
    except BaseException as exc:
        elapsed = time.perf_counter() - t0
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        ACCEPTANCE.append(f"FAIL {label}: {title} [{elapsed:.1f} s] {info.get('detail', '')} ({msg})")
        raise
    ACCEPTANCE.append(f"PASS {label}: {title} [{elapsed:.1f} s] {info.get('detail', '')}")


def rate_for(contribution: float) -> float:
    return -math.log(1 - 2 * contribution) / TAU


def step_infidelity(noise: NoiseModel) -> float:
    ideal = NoiseModel()
    comp = [l for l in ONE_QUBIT_LABELS if l.kind == "computational"]
    pauli = [l for l in ONE_QUBIT_LABELS if l.is_pauli_slot]

    def inf(lab):
        return 1 - average_gate_fidelity(channel_for(lab, noise), channel_for(lab, ideal))

    return float(np.mean([inf(l) for l in comp]) + np.mean([inf(l) for l in pauli]))


def test_1_depolarizing_round_trip():
    with criterion("1", "depolarizing round trip at full scale", 60) as info:
        plan = BenchmarkPlan(seed=2004)
        noise = NoiseModel(depol_per_gate=2 * 0.00482, prep_flip=0.005)  # d_if = 2 * prep_flip
        records = run_plan(generate_plan(plan), noise, plan.n_shots, plan.seed, plan.batches)
        fit = fit_records(records)
        boot = bootstrap(records, 1000, np.random.default_rng(np.random.SeedSequence(plan.seed, spawn_key=(2,))))
        combined = math.hypot(fit.epg_se, boot.stderr)
        info["detail"] = f"EPG={fit.epg:.6f} ls_se={fit.epg_se:.2e} boot_se={boot.stderr:.2e}"
        assert abs(fit.epg - 0.00482) < 3 * combined
        assert 1e-4 <= boot.stderr <= 1e-3, f"bootstrap stderr {boot.stderr:.2e} outside [1e-4, 1e-3]"


def test_2_zero_noise_exactness():
    with criterion("2", "zero-noise exactness", 10) as info:
        plan = BenchmarkPlan(seed=7)
        specs = generate_plan(plan)
        records = run_plan(specs, NoiseModel(), plan.n_shots, plan.seed, plan.batches)
        assert all(r.wrong_count == 0 for r in records)
        for spec in specs:
            p1 = abs(dense_run_one_qubit(spec.pulses)[1]) ** 2
            assert p1 == pytest.approx(float(spec.expected), abs=1e-10)
        with pytest.warns(FitWarning):
            fit = fit_records(records)
        assert fit.degenerate and fit.d == 0.0 and fit.d_if == 0.0
        info["detail"] = f"{len(records)} records, all p=0, fit flagged degenerate"


def test_3_twirl_identities():
    with criterion("3", "Pauli and Clifford twirls") as info:
        rng = np.random.default_rng(3)
        paulis, cliffords = pauli_group_channels(), clifford_group_channels()
        assert len(cliffords) == 24
        worst = 0.0
        for _ in range(100):
            ch = random_channel(rng)
            pt = twirl(ch, paulis).ptm
            worst = max(worst, np.abs(pt - np.diag(np.diag(pt))).max())
            assert np.allclose(pt, np.diag(np.diag(ch.ptm)), atol=1e-12)
            ct = twirl(ch, cliffords).ptm
            f = np.trace(ch.ptm[1:, 1:]) / 3
            target = np.diag([1.0, f, f, f])
            worst = max(worst, np.abs(ct - target).max())
            assert np.allclose(ct, target, atol=1e-12)
        info["detail"] = f"100 channels, max deviation {worst:.1e}"


def test_4_frame_tracker_matches_dense():
    with criterion("4", "frame tracker vs dense simulator") as info:
        n = 0
        for seed in range(8):
            for spec in generate_plan(BenchmarkPlan((1, 3, 7, 15, 40), 5, 5, 1, seed=seed)):
                p1 = abs(dense_run_one_qubit(spec.pulses)[1]) ** 2
                assert round(p1) == spec.expected and abs(p1 - spec.expected) < 1e-10
                n += 1
        assert n == 1000
        info["detail"] = f"{n} sequences agree"


def test_5_coherent_error_signature():
    with criterion("5", "coherent vs depolarizing scatter") as info:
        plan = BenchmarkPlan((96,), 16, 16, 8160, seed=5)
        specs = generate_plan(plan)
        coherent = NoiseModel(overrotation=0.3)
        s_coh = scatter_diagnostic(run_plan(specs, coherent, plan.n_shots, plan.seed, plan.batches))
        depol = NoiseModel(depol_per_gate=2 * step_infidelity(coherent))
        s_dep = scatter_diagnostic(run_plan(specs, depol, plan.n_shots, plan.seed, plan.batches))
        info["detail"] = (
            f"mean={s_coh.mean:.3f} var*12={12 * s_coh.variance:.3f} ratio={s_coh.excess_variance_ratio:.0f}; "
            f"depolarizing ratio={s_dep.excess_variance_ratio:.2f}+/-{s_dep.ratio_sigma:.2f}"
        )
        assert abs(s_coh.mean - 0.5) < 0.05
        assert s_coh.variance == pytest.approx(1 / 12, rel=0.2)
        assert s_coh.excess_variance_ratio > 5
        assert abs(s_dep.excess_variance_ratio - 1) < 3 * s_dep.ratio_sigma


def test_6_two_qubit_benchmark():
    with criterion("6", "two-qubit parity decay", 120) as info:
        d = 0.03
        plan = BenchmarkPlan((1, 2, 4, 8, 16, 32, 64, 96, 128), 4, 8, 8160, n_qubits=2, seed=6)
        records = run_plan(generate_plan(plan), NoiseModel(depol_2q=d), plan.n_shots, plan.seed, plan.batches)
        fit = fit_records(records)
        agg = aggregate(records)
        sigma = np.sqrt(np.maximum(agg.p_l * (1 - agg.p_l), 1e-12) / (agg.n_per_length * plan.n_shots))
        free = fit_exponential(agg.lengths, agg.p_l, sigma)
        info["detail"] = f"d={fit.d:.5f}+/-{fit.d_se:.1e} free asymptote={free.offset:.4f}+/-{free.stderr['offset']:.4f}"
        assert abs(fit.d - d) < 3 * fit.d_se
        assert abs(free.offset - 0.5) < 3 * free.stderr["offset"]


def test_7a_refocused_ramsey():
    with criterion("7a", "refocused Ramsey recovers 0.0037") as info:
        noise = NoiseModel(dephasing_rate=rate_for(0.0037))
        _, rep = ramsey_refocused(RamseyPlan(default_delays(), True, noise=noise), np.random.default_rng(71))
        info["detail"] = f"contribution={rep.contribution:.5f}+/-{rep.contribution_se:.5f}"
        assert rep.contribution == pytest.approx(0.0037, rel=0.10)


def test_7b_unrefocused_exceeds_refocused():
    with criterion("7b", "drift raises unrefocused above refocused") as info:
        noise = NoiseModel(dephasing_rate=rate_for(0.0037), detuning_amplitude=0.025, detuning_waveform="sinusoidal")
        rng = np.random.default_rng(72)
        _, ref = ramsey_refocused(RamseyPlan(default_delays(), True, noise=noise), rng)
        _, unref = ramsey_unrefocused(RamseyPlan(default_delays(), False, noise=noise), rng)
        info["detail"] = f"unrefocused={unref.contribution:.5f} refocused={ref.contribution:.5f}"
        assert unref.contribution > ref.contribution + 3 * math.hypot(unref.contribution_se, ref.contribution_se)


def test_7c_spontaneous_emission_ratio():
    with criterion("7c", "spontaneous-emission ratio recovers 0.00038") as info:
        spont = 2 * rate_for(0.00038)  # beams on half of each arm
        reps = []
        for gamma in (0.001, 0.003):
            noise = NoiseModel(dephasing_rate=gamma, spont_rate=spont)
            plan = RamseyPlan(default_delays(600, 5), True, shots=10000, noise=noise, beam_fraction=0.5)
            reps.append(spont_experiment(plan, np.random.default_rng(73))[-1])
        a, b = reps
        info["detail"] = f"{a.contribution:.6f}(gamma=0.001) {b.contribution:.6f}(gamma=0.003)"
        for r in reps:
            assert r.contribution == pytest.approx(0.00038, rel=0.15)
        assert abs(a.contribution - b.contribution) < 3 * math.hypot(a.contribution_se, b.contribution_se)


def test_7d_rabi_miscalibration():
    with criterion("7d", "Rabi miscalibration contribution") as info:
        noise = NoiseModel(amplitude_fluctuation=0.04)
        _, rep = rabi_flop(default_rabi_durations(noise), noise, np.random.default_rng(74), pulse_time_offset=0.02)
        info["detail"] = (
            f"total={rep.contribution:.4f} envelope={rep.extras['envelope_contribution']:.4f} "
            f"miscal={rep.extras['miscalibration_contribution']:.2e}"
        )
        assert 1e-3 <= rep.contribution <= 1e-2


def test_8_determinism_across_jobs(tmp_path):
    with criterion("8", "byte-identical output across --jobs") as info:
        cfg = tmp_path / "run.ini"
        cfg.write_text(
            "[plan]\nseed = 8\n[noise]\ndepol_per_gate = 0.009\nprep_flip = 0.005\n[output]\nbootstrap = 200\n"
        )
        reports = {}
        for jobs in (1, 2, 4):
            out = tmp_path / f"j{jobs}"
            for cmd in ("generate", "run", "fit"):
                assert main([cmd, "--config", str(cfg), "--out", str(out), "--jobs", str(jobs)]) == 0
            rep = json.loads((out / "report.json").read_text())
            rep.pop("records")
            reports[jobs] = rep
        for jobs in (2, 4):
            for name in ("plan.jsonl", "records.jsonl", "fig1_sequences.dat", "fig2_average.dat"):
                assert (tmp_path / "j1" / name).read_bytes() == (tmp_path / f"j{jobs}" / name).read_bytes()
            assert reports[jobs] == reports[1]
        info["detail"] = f"jobs 1/2/4 identical, EPG={reports[1]['epg']:.6f}"


def test_9_fit_recovery_sweep():
    with criterion("9", "fit recovery sweep") as info:
        rng = np.random.default_rng(9)
        hits = hits_if = 0
        for i in range(100):
            d, d_if = rng.uniform(0.001, 0.05, size=2)
            plan = BenchmarkPlan(seed=900 + i)
            noise = NoiseModel(depol_per_gate=d, prep_flip=d_if / 2)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FitWarning)
                fit = fit_records(run_plan(generate_plan(plan), noise, plan.n_shots, plan.seed, plan.batches))
            hits += abs(fit.d - d) < 3 * fit.d_se
            hits_if += abs(fit.d_if - d_if) < 3 * fit.d_if_se
        info["detail"] = f"d within 3 sigma in {hits}/100, d_if in {hits_if}/100"
        assert hits >= 99
