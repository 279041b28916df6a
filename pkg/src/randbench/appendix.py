"""Direct error characterizations: Ramsey (with and without echo), spontaneous-emission ratio, Rabi.

Each experiment returns its curve and a :class:`CharacterizationReport` whose
``contribution`` is an error probability per randomized computational gate.
A fitted Bloch-vector decay rate ``k`` is converted with
``(1 - exp(-k * step_time)) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .estimator import fit_damped_cosine, fit_exponential
from .labels import ONE_QUBIT_LABELS
from .noise import NoiseModel, channel_for
from .sim import AXIS_VECTORS, BlochState, apply_channel, axis_rotation_channel, dephasing_channel


EXPERIMENTS = ("ramsey-refocused", "ramsey-unrefocused", "spont-ratio", "rabi")
CONVERSION_NOTE = "per-step contribution = (1 - exp(-k * step_time)) / 2, k = fitted decay rate"
DEFAULT_SHOTS = 500


class AppendixError(ValueError):
    pass


@dataclass(frozen=True)
class RamseyPlan:
    delays: tuple[float, ...]
    refocused: bool = True
    shots: int = DEFAULT_SHOTS
    noise: NoiseModel = NoiseModel()
    beam_fraction: float = 0.0  # fraction of each arm with a Raman beam on

    def __post_init__(self):
        delays = tuple(float(t) for t in self.delays)
        object.__setattr__(self, "delays", delays)
        if not delays or delays[0] < 0 or any(b <= a for a, b in zip(delays, delays[1:])):
            raise AppendixError("delays must be >= 0 and strictly increasing")
        if self.shots < 1:
            raise AppendixError("shots must be >= 1")
        if not 0.0 <= self.beam_fraction <= 1.0:
            raise AppendixError("beam_fraction must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class Curve:
    t: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    shots: int = 0

    def to_text(self, header: str = "") -> str:
        lines = [f"# {h}" for h in header.splitlines()] if header else []
        lines.append("# t_us p sigma")
        lines += [f"{a:.6f} {b:.8f} {c:.8f}" for a, b, c in zip(self.t, self.p, self.sigma)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CharacterizationReport:
    kind: str
    parameters: dict
    contribution: float
    contribution_se: float
    window: tuple[float, float] | None
    step_time: float
    conversion: str = CONVERSION_NOTE
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.contribution <= 1.0:
            raise AppendixError(f"contribution {self.contribution} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": self.parameters,
            "contribution": self.contribution,
            "contribution_se": self.contribution_se,
            "window": list(self.window) if self.window else None,
            "step_time": self.step_time,
            "conversion": self.conversion,
            "extras": self.extras,
        }


def rate_to_step(rate: float, step_time: float) -> float:
    return float(min(max((1.0 - math.exp(-max(rate, 0.0) * step_time)) / 2.0, 0.0), 1.0))


def _rate_se_to_step(rate: float, rate_se: float, step_time: float) -> float:
    return float(0.5 * step_time * math.exp(-max(rate, 0.0) * step_time) * rate_se)


def mean_beam_time(noise: NoiseModel) -> float:
    """Mean drive (beam-on) time of one randomized computational gate; z pulses and identities have none."""
    def beam(lab):
        return noise.duration(lab) if lab.kind != "identity" and lab.axis in ("x", "y") else 0.0

    comp = [lab for lab in ONE_QUBIT_LABELS if lab.kind == "computational"]
    pauli = [lab for lab in ONE_QUBIT_LABELS if lab.is_pauli_slot]
    return float(np.mean([beam(lab) for lab in comp]) + np.mean([beam(lab) for lab in pauli]))


def binomial_sigma(p_hat: np.ndarray, shots: int) -> np.ndarray:
    """Binomial standard error with a continuity floor so that 0 and 1 keep finite weight."""
    pp = (p_hat * shots + 0.5) / (shots + 1.0)
    return np.sqrt(pp * (1 - pp) / shots)


# --------------------------------------------------------------------------
# Quasi-static detuning
# --------------------------------------------------------------------------


def _detuning_draws(noise: NoiseModel, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-shot (offset, phase); constant waveform uses the offset, sinusoidal the phase."""
    if noise.detuning_amplitude <= 0:
        return np.zeros(n), np.zeros(n)
    if noise.detuning_waveform == "constant":
        return rng.normal(0.0, noise.detuning_amplitude, size=n), np.zeros(n)
    return np.zeros(n), rng.uniform(0.0, 2 * np.pi, size=n)


def accumulated_phase(noise: NoiseModel, offset, phase, start, stop) -> np.ndarray:
    """``integral_start^stop detuning(t) dt`` for each shot."""
    offset = np.asarray(offset, dtype=float)
    phase = np.asarray(phase, dtype=float)
    if noise.detuning_amplitude <= 0:
        return np.zeros(np.broadcast(offset, phase, start, stop).shape)
    if noise.detuning_waveform == "constant":
        return offset * (np.asarray(stop) - np.asarray(start))
    w = 2 * np.pi * noise.detuning_frequency
    a = noise.detuning_amplitude
    if w == 0:
        return a * np.sin(phase) * (np.asarray(stop) - np.asarray(start))
    return (a / w) * (np.cos(w * np.asarray(start) + phase) - np.cos(w * np.asarray(stop) + phase))


# --------------------------------------------------------------------------
# Ramsey experiments
# --------------------------------------------------------------------------


def ramsey_probabilities(plan: RamseyPlan, offsets, phases, spont: bool | None = None) -> np.ndarray:
    """Exact P(|1>) for each delay (rows) and detuning draw (columns).

    Refocused: pi/2 at phase 0, T/2, pi at phase pi, T/2, pi/2 at phase pi.
    Unrefocused: pi/2 at phase 0, T, pi/2 at phase 0. Both end in |1> without noise.
    """
    noise = plan.noise
    t = np.asarray(plan.delays)[:, None]
    offsets = np.asarray(offsets, dtype=float)[None, :]
    phases = np.asarray(phases, dtype=float)[None, :]
    contrast = np.exp(-noise.dephasing_rate * t)
    use_spont = plan.beam_fraction > 0 if spont is None else spont
    if use_spont and noise.spont_rate > 0:
        contrast = contrast * np.exp(-noise.spont_rate * plan.beam_fraction * t)
    if plan.refocused:
        phi = accumulated_phase(noise, offsets, phases, 0.0, t / 2) - accumulated_phase(
            noise, offsets, phases, t / 2, t
        )
    else:
        phi = accumulated_phase(noise, offsets, phases, 0.0, t)
    return (1.0 + contrast * np.cos(phi)) / 2.0


def ramsey_dense_reference(plan: RamseyPlan, detuning: float = 0.0) -> np.ndarray:
    """P(|1>) from explicit core-sim channels for a constant detuning (oracle path)."""
    x = AXIS_VECTORS["x"]
    z = AXIS_VECTORS["z"]
    out = []
    for t in plan.delays:
        coh = math.exp(-plan.noise.dephasing_rate * t)
        half_free = axis_rotation_channel(z, detuning * t / 2).then(dephasing_channel(math.sqrt(coh)))
        state = BlochState.zero()
        if plan.refocused:
            seq = [
                axis_rotation_channel(x, np.pi / 2),
                half_free,
                axis_rotation_channel(x, -np.pi),
                half_free,
                axis_rotation_channel(x, -np.pi / 2),
            ]
        else:
            seq = [axis_rotation_channel(x, np.pi / 2), half_free, half_free, axis_rotation_channel(x, np.pi / 2)]
        for ch in seq:
            state = apply_channel(state, ch)
        out.append((1 - state.rz) / 2)
    return np.array(out)


def simulate_ramsey(plan: RamseyPlan, rng: np.random.Generator, spont: bool | None = None) -> Curve:
    """Shot-sampled Ramsey curve; each shot draws its own quasi-static detuning."""
    n_pts = len(plan.delays)
    if plan.noise.detuning_amplitude > 0:
        offsets, phases = _detuning_draws(plan.noise, rng, n_pts * plan.shots)
        prob = ramsey_probabilities(plan, offsets, phases, spont)
        # each delay point uses its own block of shots
        mask = np.repeat(np.eye(n_pts, dtype=bool), plan.shots, axis=1)
        p_shot = prob[mask].reshape(n_pts, plan.shots)
        counts = (rng.random(p_shot.shape) < p_shot).sum(axis=1)
    else:
        p = ramsey_probabilities(plan, [0.0], [0.0], spont)[:, 0]
        counts = rng.binomial(plan.shots, np.clip(p, 0, 1))
    p_hat = counts / plan.shots
    return Curve(np.array(plan.delays), p_hat, binomial_sigma(p_hat, plan.shots), plan.shots)


def _flat(curve: Curve, tol: float = 0.0) -> bool:
    return float(np.ptp(curve.p)) <= tol


def ramsey_refocused(
    plan: RamseyPlan,
    rng: np.random.Generator,
    window: tuple[float, float] = (1.0, 200.0),
    step_time: float | None = None,
) -> tuple[Curve, CharacterizationReport]:
    """Echo experiment; exponential fit with the asymptote pinned at 1/2."""
    if not plan.refocused:
        raise AppendixError("ramsey_refocused needs a refocused plan")
    step_time = plan.noise.mean_step_duration() if step_time is None else step_time
    curve = simulate_ramsey(plan, rng, spont=False)
    if _flat(curve):
        _check_window(curve, window)
        return curve, CharacterizationReport(
            "ramsey-refocused", {"rate": 0.0, "amplitude": 0.0, "offset": 0.5}, 0.0, 0.0, window, step_time,
            extras={"note": "flat curve, no decay"},
        )
    fit = fit_exponential(curve.t, curve.p, curve.sigma, window, offset=0.5)
    rate = max(fit.rate, 0.0)
    return curve, CharacterizationReport(
        "ramsey-refocused",
        {"rate": fit.rate, "rate_se": fit.stderr["rate"], "amplitude": fit.amplitude, "offset": fit.offset},
        rate_to_step(rate, step_time),
        _rate_se_to_step(rate, fit.stderr["rate"], step_time),
        window,
        step_time,
        extras={"extrapolation_rms": fit.extrapolation_rms, "memoryless": plan.noise.is_memoryless},
    )


def _check_window(curve: Curve, window, minimum: int = 3):
    lo, hi = window
    if int(((curve.t >= lo) & (curve.t <= hi)).sum()) < minimum:
        raise AppendixError(f"fewer than {minimum} points in window {window}")


def ramsey_unrefocused(
    plan: RamseyPlan,
    rng: np.random.Generator,
    window: tuple[float, float] = (0.0, 220.0),
    step_time: float | None = None,
) -> tuple[Curve, CharacterizationReport]:
    """Free-induction Ramsey; exponentially damped cosine fit, contribution from its envelope."""
    if plan.refocused:
        raise AppendixError("ramsey_unrefocused needs refocused=False")
    step_time = plan.noise.mean_step_duration() if step_time is None else step_time
    curve = simulate_ramsey(plan, rng, spont=False)
    if _flat(curve):
        _check_window(curve, window, 6)
        return curve, CharacterizationReport(
            "ramsey-unrefocused", {"b1": 0.0}, 0.0, 0.0, window, step_time,
            extras={"note": "flat curve, no decay"},
        )
    fit = fit_damped_cosine(curve.t, curve.p, curve.sigma, window, "exponential", min_periods=1.0)
    return curve, CharacterizationReport(
        "ramsey-unrefocused",
        {
            "amplitude": fit.amplitude,
            "frequency": fit.frequency,
            "phase": fit.phase,
            "offset": fit.offset,
            "b1": fit.b1,
            "b1_se": fit.stderr["b1"],
        },
        fit.step_contribution(step_time),
        _rate_se_to_step(fit.b1, fit.stderr["b1"], step_time),
        window,
        step_time,
        extras={"memoryless": plan.noise.is_memoryless},
    )


# --------------------------------------------------------------------------
# Spontaneous emission
# --------------------------------------------------------------------------


def spont_ratio(
    curve_with_beams: Curve,
    reference_curve: Curve,
    step_time: float,
    *,
    mode: str = "contrast",
    min_reference: float = 0.05,
) -> tuple[Curve, CharacterizationReport]:
    """Divide the beams-on curve by the reference and fit the exponential decay of the ratio.

    The reference is linearly interpolated between its nearest points onto the
    beams-on time grid. ``mode="contrast"`` divides ``2P - 1`` (Bloch-vector
    lengths), which separates multiplicative decays exactly;
    ``mode="probability"`` divides P(|1>) directly.
    """
    if mode not in ("contrast", "probability"):
        raise AppendixError("mode must be 'contrast' or 'probability'")
    t = curve_with_beams.t
    inside = (t >= reference_curve.t[0]) & (t <= reference_curve.t[-1])
    if inside.sum() < 3:
        raise AppendixError("curves do not overlap on at least 3 points")
    t = t[inside]
    pb = curve_with_beams.p[inside]
    sb = curve_with_beams.sigma[inside]
    pr = np.interp(t, reference_curve.t, reference_curve.p)
    sr = np.interp(t, reference_curve.t, reference_curve.sigma)
    if mode == "contrast":
        num, den, snum, sden = 2 * pb - 1, 2 * pr - 1, 2 * sb, 2 * sr
    else:
        num, den, snum, sden = pb, pr, sb, sr
    keep = (pr >= min_reference) & (den >= min_reference)
    excluded = [float(v) for v in t[~keep]]
    if keep.sum() < 3:
        raise AppendixError("fewer than 3 points with a usable reference")
    t, num, den, snum, sden = t[keep], num[keep], den[keep], snum[keep], sden[keep]
    ratio = num / den
    sig = np.abs(ratio) * np.sqrt((snum / np.where(num != 0, num, 1)) ** 2 + (sden / den) ** 2)
    sig = np.maximum(sig, 1e-9)
    ratio_curve = Curve(t, ratio, sig)
    if np.allclose(ratio, 1.0, atol=0, rtol=0):
        return ratio_curve, CharacterizationReport(
            "spont-ratio", {"rate": 0.0, "mode": mode}, 0.0, 0.0, (float(t[0]), float(t[-1])), step_time,
            extras={"excluded_times": excluded},
        )
    fit = fit_exponential(t, ratio, sig, None, offset=0.0)
    # probability ratio falls at half the Bloch-vector rate near P = 1
    scale = 1.0 if mode == "contrast" else 2.0
    rate = scale * fit.rate
    rate_se = scale * fit.stderr["rate"]
    return ratio_curve, CharacterizationReport(
        "spont-ratio",
        {"rate": rate, "rate_se": rate_se, "amplitude": fit.amplitude, "mode": mode},
        rate_to_step(rate, step_time),
        _rate_se_to_step(rate, rate_se, step_time),
        (float(t[0]), float(t[-1])),
        step_time,
        extras={"excluded_times": excluded},
    )


def spont_experiment(
    plan: RamseyPlan,
    rng: np.random.Generator,
    step_time: float | None = None,
    mode: str = "contrast",
) -> tuple[Curve, Curve, Curve, CharacterizationReport]:
    """Refocused Ramsey with beams on ``beam_fraction`` of each arm, divided by the beams-off reference.

    Returns (beams-on curve, reference curve, ratio curve, report).
    """
    if not plan.refocused:
        raise AppendixError("the spontaneous-emission comparison uses the refocused sequence")
    fraction = plan.beam_fraction if plan.beam_fraction > 0 else 0.5
    beams = RamseyPlan(plan.delays, True, plan.shots, plan.noise, fraction)
    step_time = plan.noise.mean_step_duration() if step_time is None else step_time
    with_beams = simulate_ramsey(beams, rng, spont=True)
    reference = simulate_ramsey(beams, rng, spont=False)
    ratio, report = spont_ratio(with_beams, reference, step_time, mode=mode)
    return with_beams, reference, ratio, report


# --------------------------------------------------------------------------
# Rabi flopping
# --------------------------------------------------------------------------


def rabi_probabilities(durations, noise: NoiseModel, amplitude_factors, detunings=None) -> np.ndarray:
    """Exact P(|1>) under continuous x drive for each duration (rows) and shot (columns).

    The resonant case is closed form: with ``z'' + g z' + W^2 z = 0`` from
    transverse dephasing ``g``, ``z = exp(-g t/2)(cos w t + g/(2w) sin w t)``;
    spontaneous emission scales the whole vector by ``exp(-spont t)``.
    """
    t = np.asarray(durations, dtype=float)[:, None]
    amp = np.asarray(amplitude_factors, dtype=float)[None, :]
    omega = (np.pi / 2) / noise.t_pi2 * amp + noise.overrotation / noise.t_pi2
    g = noise.dephasing_rate
    if detunings is not None and np.any(np.asarray(detunings) != 0):
        return _rabi_numeric(np.asarray(durations, dtype=float), noise, omega[0], np.asarray(detunings))
    w = np.sqrt(np.maximum(omega**2 - g * g / 4, 1e-300))
    z = np.exp(-g * t / 2) * (np.cos(w * t) + (g / (2 * w)) * np.sin(w * t))
    z = z * np.exp(-noise.spont_rate * t)
    return (1.0 - z) / 2.0


def _rabi_numeric(durations, noise, omegas, detunings) -> np.ndarray:
    g, s = noise.dephasing_rate, noise.spont_rate
    out = np.empty((len(durations), len(omegas)))
    for c, (om, dl) in enumerate(zip(omegas, np.broadcast_to(detunings, omegas.shape))):
        gen = np.array([[-g - s, -dl, 0.0], [dl, -g - s, -om], [0.0, om, -s]])
        for r, t in enumerate(durations):
            v = expm(gen * t) @ np.array([0.0, 0.0, 1.0])
            out[r, c] = (1 - v[2]) / 2
    return out


def rabi_oracle(durations, noise: NoiseModel, n_nodes: int = 80) -> np.ndarray:
    """Gaussian average over amplitude factors by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
    amps = 1.0 + noise.amplitude_fluctuation * x
    vals = rabi_probabilities(durations, noise.replace(amplitude_fluctuation=0.0), amps)
    return vals @ (w / w.sum())


def miscalibration_error(time_offset: float, noise: NoiseModel) -> float:
    """Average infidelity per randomized computational gate from a pulse-time error.

    Each driven pulse is over-rotated by ``Omega * time_offset``; the average
    infidelity of an over-rotation by ``e`` is ``(2/3) sin^2(e/2)``. Every step
    has one driven pi/2 pulse and, half the time, a driven pi pulse.
    """
    eps = (np.pi / 2) / noise.t_pi2 * time_offset
    per_pulse = (2.0 / 3.0) * math.sin(eps / 2) ** 2
    driven = [lab for lab in ONE_QUBIT_LABELS if lab.is_pauli_slot and lab.axis in ("x", "y")]
    frac = len(driven) / sum(1 for lab in ONE_QUBIT_LABELS if lab.is_pauli_slot)
    return per_pulse * (1.0 + frac)


def miscalibration_error_dense(time_offset: float, noise: NoiseModel) -> float:
    """The same quantity by explicit simulation over the six Pauli eigenstates (a state 2-design)."""
    eps = (np.pi / 2) / noise.t_pi2 * time_offset
    starts = [np.array(v, dtype=float) for v in
              ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))]

    def infidelity(label) -> float:
        ideal = channel_for(label, NoiseModel(t_pi2=noise.t_pi2, t_pi=noise.t_pi, t_z=noise.t_z))
        faulty = channel_for(label, NoiseModel(overrotation=eps, t_pi2=noise.t_pi2, t_pi=noise.t_pi, t_z=noise.t_z))
        total = 0.0
        for r in starts:
            a = apply_channel(BlochState(*r), ideal).vector
            b = apply_channel(BlochState(*r), faulty).vector
            total += (1 - float(a @ b)) / 2
        return total / len(starts)

    comp = [lab for lab in ONE_QUBIT_LABELS if lab.kind == "computational"]
    pauli = [lab for lab in ONE_QUBIT_LABELS if lab.is_pauli_slot]
    return float(np.mean([infidelity(l) for l in comp]) + np.mean([infidelity(l) for l in pauli]))


def rabi_flop(
    durations,
    noise: NoiseModel,
    rng: np.random.Generator,
    *,
    shots: int = DEFAULT_SHOTS,
    window: tuple[float, float] | None = None,
    step_time: float | None = None,
    pulse_time_offset: float = 0.02,
) -> tuple[Curve, CharacterizationReport]:
    """Rabi flopping with per-shot amplitude noise; envelope fit plus a miscalibration term.

    The default window is the first three Rabi periods. ``step_time`` defaults
    to the mean randomized-gate duration, as for the Ramsey conversions;
    :func:`mean_beam_time` is the drive-only alternative.
    """
    t = np.asarray(durations, dtype=float)
    if t.ndim != 1 or len(t) < 6 or np.any(np.diff(t) <= 0) or t[0] < 0:
        raise AppendixError("durations must be >= 0, strictly increasing, at least 6 points")
    period = 4 * noise.t_pi2
    if np.ptp(t) < 3 * period:
        raise AppendixError("duration grid must cover at least 3 Rabi periods")
    window = (float(t[0]), float(t[0] + 3 * period)) if window is None else window
    step_time = noise.mean_step_duration() if step_time is None else step_time
    n = len(t)
    if noise.amplitude_fluctuation > 0 or noise.detuning_amplitude > 0:
        amps = 1.0 + noise.amplitude_fluctuation * rng.normal(size=n * shots)
        offsets, phases = _detuning_draws(noise, rng, n * shots)
        if noise.detuning_waveform == "sinusoidal":
            offsets = noise.detuning_amplitude * np.sin(phases)
        p_shot = np.empty((n, shots))
        for i in range(n):
            sl = slice(i * shots, (i + 1) * shots)
            dets = offsets[sl] if noise.detuning_amplitude > 0 else None
            p_shot[i] = rabi_probabilities(t[i : i + 1], noise.replace(overrotation=0.0), amps[sl], dets)[0]
        counts = (rng.random(p_shot.shape) < p_shot).sum(axis=1)
    else:
        p = rabi_probabilities(t, noise.replace(overrotation=0.0), [1.0])[:, 0]
        counts = rng.binomial(shots, np.clip(p, 0, 1))
    p_hat = counts / shots
    curve = Curve(t, p_hat, binomial_sigma(p_hat, shots), shots)
    miscal = miscalibration_error(pulse_time_offset, noise)
    omega = (np.pi / 2) / noise.t_pi2
    fit = fit_damped_cosine(
        t, p_hat, curve.sigma, window, "linear+quadratic", frequency_guess=omega / (2 * np.pi)
    )
    envelope_part = fit.step_contribution(step_time)
    env_se = 0.5 * step_time * math.exp(-fit.b1 * step_time - fit.b2 * step_time**2) * math.hypot(
        fit.stderr["b1"], step_time * fit.stderr["b2"]
    )
    total = min(envelope_part + miscal, 1.0)
    return curve, CharacterizationReport(
        "rabi",
        {
            "amplitude": fit.amplitude,
            "frequency": fit.frequency,
            "phase": fit.phase,
            "offset": fit.offset,
            "b1": fit.b1,
            "b2": fit.b2,
        },
        total,
        float(env_se),
        window,
        step_time,
        conversion="per-step contribution = (1 - envelope(step_time)) / 2 + miscalibration",
        extras={
            "envelope_contribution": envelope_part,
            "miscalibration_contribution": miscal,
            "pulse_time_offset": pulse_time_offset,
        },
    )


def default_delays(stop: float = 400.0, step: float = 4.0) -> tuple[float, ...]:
    return tuple(float(v) for v in np.arange(0.0, stop + step / 2, step))


def default_rabi_durations(noise: NoiseModel, periods: float = 8, per_period: int = 24) -> np.ndarray:
    period = 4 * noise.t_pi2
    return np.linspace(0.0, periods * period, int(periods * per_period) + 1)
