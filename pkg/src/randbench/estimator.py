"""Aggregation, decay fitting, bootstrap errors and scatter diagnostics for benchmark records."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, stats

from .protocol import ExperimentRecord, binomial_stderr


class EstimatorError(ValueError):
    pass


class ConvergenceError(EstimatorError):
    pass


class FitWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# Aggregation
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Aggregates:
    """Per-length and per-sequence averages of ``p_{j,l_k,m}``.

    ``p_jl[j, k]`` averages over randomizations, ``p_l[k]`` over sequences
    and randomizations; ``p_grid[k, j, m]`` keeps the raw values.
    """

    ks: np.ndarray
    l_k: np.ndarray
    lengths: np.ndarray
    p_grid: np.ndarray
    n_shots: np.ndarray
    p_jl: np.ndarray
    p_l: np.ndarray

    @property
    def n_per_length(self) -> int:
        return self.p_grid.shape[1] * self.p_grid.shape[2]

    @property
    def scatter_sd(self) -> np.ndarray:
        flat = self.p_grid.reshape(len(self.ks), -1)
        if flat.shape[1] < 2:
            return np.zeros(len(self.ks))
        return flat.std(axis=1, ddof=1)

    def binomial_se_of_mean(self) -> np.ndarray:
        flat = self.p_grid.reshape(len(self.ks), -1)
        shots = self.n_shots.reshape(len(self.ks), -1)
        se = np.vectorize(binomial_stderr)(flat, shots)
        return np.sqrt((se**2).sum(axis=1)) / flat.shape[1]

    def sigma_of_mean(self) -> np.ndarray:
        """Uncertainty of ``p_l`` used as fit weights.

        Empirical scatter across (j, m) when there are at least four
        records per length, otherwise (or where the scatter vanishes) the
        binomial standard error.
        """
        binom = self.binomial_se_of_mean()
        if self.n_per_length < 4:
            return binom
        emp = self.scatter_sd / math.sqrt(self.n_per_length)
        return np.where(emp > 0, emp, binom)


def aggregate(records: Iterable[ExperimentRecord]) -> Aggregates:
    """Unweighted means over a complete (j, k, m) grid."""
    records = list(records)
    if not records:
        raise EstimatorError("no records to aggregate")
    js = sorted({r.j for r in records})
    ks = sorted({r.k for r in records})
    ms = sorted({r.m for r in records})
    cells: dict[tuple[int, int, int], ExperimentRecord] = {}
    for r in records:
        if r.index in cells:
            raise EstimatorError(f"duplicate record for (j, k, m) = {r.index}")
        cells[r.index] = r
    missing = [(j, k, m) for j in js for k in ks for m in ms if (j, k, m) not in cells]
    if missing:
        shown = ", ".join(str(c) for c in missing[:20])
        more = f" (+{len(missing) - 20} more)" if len(missing) > 20 else ""
        raise EstimatorError(f"incomplete grid, missing (j, k, m): {shown}{more}")
    grid = np.empty((len(ks), len(js), len(ms)))
    shots = np.empty_like(grid, dtype=np.int64)
    l_k = np.empty(len(ks), dtype=np.int64)
    lengths = np.empty(len(ks), dtype=np.int64)
    for a, k in enumerate(ks):
        first = cells[js[0], k, ms[0]]
        l_k[a], lengths[a] = first.l_k, first.length
        for b, j in enumerate(js):
            for c, m in enumerate(ms):
                r = cells[j, k, m]
                if r.length != first.length:
                    raise EstimatorError(f"inconsistent length for k={k}")
                grid[a, b, c] = r.p_hat
                shots[a, b, c] = r.n_shots
    p_jl = grid.mean(axis=2).T
    p_l = grid.reshape(len(ks), -1).mean(axis=1)
    return Aggregates(np.array(ks), l_k, lengths, grid, shots, p_jl, p_l)


# --------------------------------------------------------------------------
# Decay fit
# --------------------------------------------------------------------------


def decay_model(lengths, d: float, d_if: float) -> np.ndarray:
    """``p_l = (1 - (1 - d_if)(1 - d)^l) / 2``."""
    lengths = np.asarray(lengths, dtype=float)
    return (1.0 - (1.0 - d_if) * (1.0 - d) ** lengths) / 2.0


def _decay_jacobian(lengths: np.ndarray, d: float, d_if: float) -> np.ndarray:
    base = 1.0 - d
    with np.errstate(divide="ignore", invalid="ignore"):
        powm1 = np.where(lengths >= 1, base ** np.maximum(lengths - 1, 0), 0.0)
    dd = 0.5 * (1.0 - d_if) * lengths * powm1
    da = 0.5 * base**lengths
    return np.column_stack([dd, da])


@dataclass(frozen=True, eq=False)
class DecayFit:
    d: float
    d_if: float
    covariance: np.ndarray
    residuals: np.ndarray
    chi2: float
    dof: int
    converged: bool
    iterations: int
    degenerate: bool = False
    warnings: tuple[str, ...] = ()

    @property
    def d_se(self) -> float:
        return float(math.sqrt(max(self.covariance[0, 0], 0.0)))

    @property
    def d_if_se(self) -> float:
        return float(math.sqrt(max(self.covariance[1, 1], 0.0)))

    @property
    def epg(self) -> float:
        """Average error per randomized computational gate, ``d/2``."""
        return self.d / 2.0

    @property
    def epg_se(self) -> float:
        return self.d_se / 2.0

    @property
    def fidelity(self) -> float:
        return 1.0 - self.d / 2.0

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    def predict(self, lengths) -> np.ndarray:
        return decay_model(lengths, self.d, self.d_if)

    def band(self, lengths, n_sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise lower/upper model curves from the linearized covariance."""
        lengths = np.asarray(lengths, dtype=float)
        jac = _decay_jacobian(lengths, self.d, self.d_if)
        var = np.einsum("ij,jk,ik->i", jac, self.covariance, jac)
        half = n_sigma * np.sqrt(np.clip(var, 0.0, None))
        mid = self.predict(lengths)
        return mid - half, mid + half


def _initial_guess(lengths: np.ndarray, p: np.ndarray) -> np.ndarray:
    contrast = 1.0 - 2.0 * p
    ok = contrast > 1e-6
    if ok.sum() >= 2 and np.ptp(lengths[ok]) > 0:
        slope, intercept = np.polyfit(lengths[ok], np.log(contrast[ok]), 1)
        d0 = 1.0 - math.exp(min(slope, 0.0))
        a0 = 1.0 - math.exp(min(intercept, 0.0))
    else:
        d0, a0 = 0.5, 0.0
    return np.clip([d0, a0], 0.0, 1.0)


def fit_decay(
    lengths: Sequence[float],
    p: Sequence[float],
    sigma: Sequence[float] | None = None,
    *,
    max_iter: int = 200,
    rtol: float = 1e-10,
) -> DecayFit:
    """Box-constrained weighted least squares for ``(d, d_if)`` in ``[0, 1]^2``.

    Levenberg-Marquardt damping on Gauss-Newton steps with the analytic
    Jacobian; steps are projected onto the box. Converged when the relative
    parameter change drops below ``rtol``.
    """
    lengths = np.asarray(lengths, dtype=float)
    p = np.asarray(p, dtype=float)
    if lengths.shape != p.shape:
        raise EstimatorError("lengths and p differ in shape")
    if len(np.unique(lengths)) < 3:
        raise EstimatorError("need at least 3 distinct lengths")
    if sigma is None:
        w = np.ones_like(p)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            raise EstimatorError("sigma must be finite and positive")
        w = 1.0 / sigma**2
    dof = len(p) - 2

    if np.ptp(p) <= 1e-15:
        level = float(p[0])
        notes = ["all p_l equal; decay parameter unidentifiable"]
        if abs(level - 0.5) <= 1e-12:
            d, a = 1.0, 0.0
        else:
            # flat curve with d = 0: p_l = d_if / 2
            d, a = 0.0, float(np.clip(2.0 * level, 0.0, 1.0))
        warnings.warn(notes[0], FitWarning, stacklevel=2)
        resid = p - decay_model(lengths, d, a)
        return DecayFit(
            d, a, np.zeros((2, 2)), resid, float(np.sum(w * resid**2)), dof, True, 0, True, tuple(notes)
        )

    theta = _initial_guess(lengths, p)

    def chi2_of(t):
        r = p - decay_model(lengths, *t)
        return float(np.sum(w * r * r))

    chi2 = chi2_of(theta)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        r = p - decay_model(lengths, *theta)
        jac = _decay_jacobian(lengths, *theta)
        jw = jac * w[:, None]
        h = jac.T @ jw
        g = jw.T @ r
        accepted = False
        while lam < 1e16:
            a_mat = h + lam * np.diag(np.maximum(np.diag(h), 1e-30))
            try:
                step = np.linalg.solve(a_mat, g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = np.clip(theta + step, 0.0, 1.0)
            trial_chi2 = chi2_of(trial)
            if trial_chi2 <= chi2:
                accepted = True
                break
            lam *= 10
        if not accepted:
            # no descent direction left inside the box: stationary point
            converged = True
            break
        delta = trial - theta
        theta, chi2 = trial, trial_chi2
        lam = max(lam / 10, 1e-12)
        if np.all(np.abs(delta) <= rtol * (np.abs(theta) + rtol)):
            converged = True
            break

    jac = _decay_jacobian(lengths, *theta)
    h = jac.T @ (jac * w[:, None])
    try:
        cov = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    if sigma is None and dof > 0:
        cov = cov * chi2 / dof
    notes = []
    if not converged:
        notes.append(f"no convergence after {max_iter} iterations")
    for name, val in zip(("d", "d_if"), theta):
        if val <= 0.0 or val >= 1.0:
            notes.append(f"{name} at box boundary ({val:g})")
    resid = p - decay_model(lengths, *theta)
    return DecayFit(
        float(theta[0]), float(theta[1]), cov, resid, chi2, dof, converged, it, False, tuple(notes)
    )


def fit_aggregates(agg: Aggregates) -> DecayFit:
    return fit_decay(agg.lengths, agg.p_l, agg.sigma_of_mean())


def fit_records(records: Iterable[ExperimentRecord]) -> DecayFit:
    return fit_aggregates(aggregate(records))


# --------------------------------------------------------------------------
# Bootstrap
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    epg_samples: np.ndarray
    stderr: float
    interval: tuple[float, float]
    failures: int
    n_resamples: int


def bootstrap(
    records: Iterable[ExperimentRecord],
    n_resamples: int,
    rng: np.random.Generator,
    *,
    level: float = 0.68,
    max_failure_rate: float = 0.05,
) -> BootstrapResult:
    """Resample whole sequences (j, m) with replacement within each length and refit."""
    if n_resamples < 100:
        raise EstimatorError("bootstrap needs at least 100 resamples")
    agg = aggregate(records)
    flat = agg.p_grid.reshape(len(agg.ks), -1)
    shots = agg.n_shots.reshape(len(agg.ks), -1)
    n_len, n_cell = flat.shape
    use_emp = n_cell >= 4
    rows = np.arange(n_len)[:, None]
    samples = []
    failures = 0
    se_cell = np.vectorize(binomial_stderr)(flat, shots)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FitWarning)
        for _ in range(n_resamples):
            idx = rng.integers(0, n_cell, size=(n_len, n_cell))
            res = flat[rows, idx]
            p_l = res.mean(axis=1)
            binom = np.sqrt((se_cell[rows, idx] ** 2).sum(axis=1)) / n_cell
            if use_emp:
                emp = res.std(axis=1, ddof=1) / math.sqrt(n_cell)
                sig = np.where(emp > 0, emp, binom)
            else:
                sig = binom
            try:
                fit = fit_decay(agg.lengths, p_l, sig)
            except EstimatorError:
                failures += 1
                continue
            if not fit.converged:
                failures += 1
                continue
            samples.append(fit.epg)
    if failures > max_failure_rate * n_resamples:
        raise ConvergenceError(f"{failures} of {n_resamples} bootstrap refits failed")
    arr = np.array(samples)
    lo, hi = np.percentile(arr, [50 * (1 - level), 50 * (1 + level)])
    return BootstrapResult(arr, float(arr.std(ddof=1)), (float(lo), float(hi)), failures, n_resamples)


# --------------------------------------------------------------------------
# Scatter diagnostic
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScatterReport:
    n: int
    mean: float
    variance: float
    mean_binomial_variance: float
    excess_variance_ratio: float
    ratio_sigma: float
    ks_statistic: float
    ks_pvalue: float
    classification: str


def scatter_diagnostic(records: Sequence[ExperimentRecord]) -> ScatterReport:
    """Compare the spread of ``p_{j,l,m}`` at one length with shot noise and with Uniform[0, 1].

    A uniformly random pure state gives ``|<1|psi>|^2 ~ Uniform[0, 1]``,
    which is what purely coherent errors produce once the decay saturates.
    """
    records = list(records)
    if len(records) < 8:
        raise EstimatorError(f"scatter diagnostic needs >= 8 records, got {len(records)}")
    if len({r.length for r in records}) != 1:
        raise EstimatorError("scatter diagnostic expects records at a single length")
    p = np.array([r.p_hat for r in records])
    binom_var = float(np.mean([r.stderr**2 for r in records]))
    var = float(p.var(ddof=1))
    n = len(p)
    ratio = var / binom_var
    ratio_sigma = math.sqrt(2.0 / (n - 1))
    ks = stats.kstest(p, "uniform")
    mean = float(p.mean())
    if abs(ratio - 1.0) <= 3 * ratio_sigma:
        label = "depolarizing-like"
    elif ratio > 5 and abs(mean - 0.5) < 0.1 and ks.pvalue > 0.01:
        label = "coherent-systematic"
    elif ratio > 5:
        label = "excess scatter"
    else:
        label = "inconclusive"
    return ScatterReport(n, mean, var, binom_var, ratio, ratio_sigma, float(ks.statistic), float(ks.pvalue), label)


# --------------------------------------------------------------------------
# Curve fits for the direct characterization experiments
# --------------------------------------------------------------------------


def _window_mask(t: np.ndarray, window) -> np.ndarray:
    if window is None:
        return np.ones_like(t, dtype=bool)
    lo, hi = window
    return (t >= lo) & (t <= hi)


def _covariance(res) -> np.ndarray:
    jac = res.jac
    try:
        return np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(jac.T @ jac)


@dataclass(frozen=True, eq=False)
class ExponentialFit:
    """``amplitude * exp(-rate * t) + offset`` fitted on ``window``."""

    amplitude: float
    rate: float
    offset: float
    stderr: dict
    window: tuple[float, float] | None
    n_points: int
    chi2: float
    extrapolation_rms: float = float("nan")

    @property
    def tau(self) -> float:
        return 1.0 / self.rate if self.rate > 0 else float("inf")

    def predict(self, t) -> np.ndarray:
        return self.amplitude * np.exp(-self.rate * np.asarray(t, dtype=float)) + self.offset


def fit_exponential(
    t,
    y,
    sigma=None,
    window: tuple[float, float] | None = None,
    *,
    offset: float | None = None,
) -> ExponentialFit:
    """Weighted exponential fit restricted to ``window``; ``offset`` pins the asymptote."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    sig = np.ones_like(y) if sigma is None else np.asarray(sigma, dtype=float)
    mask = _window_mask(t, window)
    if mask.sum() < 3:
        raise EstimatorError("fewer than 3 points in the fit window")
    tw, yw, sw = t[mask], y[mask], sig[mask]
    span = max(np.ptp(tw), 1e-12)
    free_offset = offset is None

    def unpack(x):
        if free_offset:
            return x[0], x[1], x[2]
        return x[0], x[1], offset

    def resid(x):
        a, k, c = unpack(x)
        return (a * np.exp(-k * tw) + c - yw) / sw

    best = None
    c_guess = yw[-1] if free_offset else offset
    for k0 in (0.1 / span, 1.0 / span, 3.0 / span, 10.0 / span):
        a0 = (yw[0] - c_guess) * math.exp(k0 * tw[0])
        x0 = [a0, k0, c_guess] if free_offset else [a0, k0]
        try:
            res = optimize.least_squares(
                resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000
            )
        except ValueError:
            continue
        if best is None or res.cost < best.cost:
            best = res
    if best is None or not best.success:
        raise ConvergenceError("exponential fit did not converge")
    a, k, c = unpack(best.x)
    cov = _covariance(best)
    if sigma is None and len(yw) > len(best.x):
        cov = cov * 2 * best.cost / (len(yw) - len(best.x))
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    stderr = {"amplitude": float(se[0]), "rate": float(se[1])}
    stderr["offset"] = float(se[2]) if free_offset else 0.0
    fit = ExponentialFit(float(a), float(k), float(c), stderr, window, int(mask.sum()), float(2 * best.cost))
    if (~mask).any():
        outside = y[~mask] - fit.predict(t[~mask])
        fit = ExponentialFit(
            fit.amplitude, fit.rate, fit.offset, stderr, window, fit.n_points, fit.chi2,
            float(np.sqrt(np.mean(outside**2))),
        )
    return fit


DECAY_ORDERS = ("exponential", "linear+quadratic")


@dataclass(frozen=True, eq=False)
class DampedCosineFit:
    """``offset + amplitude * envelope(t) * cos(2 pi frequency t + phase)``.

    ``envelope = exp(-b1 t - b2 t^2)``; ``b2`` is zero for the exponential order.
    """

    amplitude: float
    frequency: float
    phase: float
    offset: float
    b1: float
    b2: float
    decay_order: str
    stderr: dict
    window: tuple[float, float] | None
    n_points: int
    chi2: float

    def envelope(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(-self.b1 * t - self.b2 * t * t)

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.offset + self.amplitude * self.envelope(t) * np.cos(
            2 * np.pi * self.frequency * t + self.phase
        )

    def step_contribution(self, step_time: float) -> float:
        """Error added by envelope loss over one step: ``(1 - envelope(step)) / 2``."""
        return float(min(max((1.0 - self.envelope(step_time)) / 2.0, 0.0), 1.0))


def spectral_peak(t: np.ndarray, y: np.ndarray) -> float:
    """Frequency of the largest periodogram peak of the linearly detrended data."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    detr = y - np.polyval(np.polyfit(t, y, 1), t)
    if np.max(np.abs(detr)) < 1e-12:
        raise EstimatorError("no spectral peak: detrended data are flat")
    span = np.ptp(t)
    dt = np.median(np.diff(np.sort(t)))
    freqs = np.linspace(0.5 / span, 0.5 / dt, 4 * len(t))
    phase = np.exp(-2j * np.pi * freqs[:, None] * t[None, :])
    power = np.abs(phase @ detr) ** 2
    return float(freqs[int(np.argmax(power))])


def fit_damped_cosine(
    t,
    y,
    sigma=None,
    window: tuple[float, float] | None = None,
    decay_order: str = "exponential",
    *,
    frequency_guess: float | None = None,
    min_periods: float | None = None,
) -> DampedCosineFit:
    """Weighted fit of :class:`DampedCosineFit` over ``window``.

    With ``min_periods`` set, a fitted oscillation slower than that many periods
    per window is not identifiable from the data; the fit is then redone with
    the frequency and phase pinned at zero (pure decay).
    """
    if decay_order not in DECAY_ORDERS:
        raise EstimatorError(f"decay_order must be one of {DECAY_ORDERS}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    sig = np.ones_like(y) if sigma is None else np.asarray(sigma, dtype=float)
    mask = _window_mask(t, window)
    if mask.sum() < 6:
        raise EstimatorError("damped cosine fit needs at least 6 points in the window")
    tw, yw, sw = t[mask], y[mask], sig[mask]
    f0 = frequency_guess if frequency_guess is not None else spectral_peak(tw, yw)
    quad = decay_order == "linear+quadratic"
    span = max(np.ptp(tw), 1e-12)

    pinned = False

    def unpack(x):
        if pinned:
            a, c, b1 = x[:3]
            return a, 0.0, 0.0, c, b1, (x[3] if quad else 0.0)
        a, f, ph, c, b1 = x[:5]
        b2 = x[5] if quad else 0.0
        return a, f, ph, c, b1, b2

    def model(x, tt):
        a, f, ph, c, b1, b2 = unpack(x)
        return c + a * np.exp(-b1 * tt - b2 * tt * tt) * np.cos(2 * np.pi * f * tt + ph)

    def resid(x):
        return (model(x, tw) - yw) / sw

    c0 = float(np.mean(yw))
    a0 = float(np.ptp(yw) / 2) or 1e-3
    best = None
    lower = [-np.inf, 0.0, -np.inf, -np.inf, 0.0] + ([0.0] if quad else [])
    upper = [np.inf] * (6 if quad else 5)
    for ph0 in np.linspace(-np.pi, np.pi, 8, endpoint=False):
        for b0 in (0.1 / span, 1.0 / span):
            x0 = [a0, f0, ph0, c0, b0] + ([0.0] if quad else [])
            res = optimize.least_squares(
                resid, x0, bounds=(lower, upper), xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=10000
            )
            if best is None or res.cost < best.cost:
                best = res
    if best is None or best.status <= 0:
        raise ConvergenceError("damped cosine fit did not converge")
    if min_periods is not None and unpack(best.x)[1] * span < min_periods:
        pinned = True
        best = None
        lower = [-np.inf, -np.inf, 0.0] + ([0.0] if quad else [])
        upper = [np.inf] * (4 if quad else 3)
        a_start = float(yw[0] - yw[-1]) or 1e-3
        for b0 in (0.1 / span, 1.0 / span, 3.0 / span):
            x0 = [a_start, float(yw[-1]), b0] + ([0.0] if quad else [])
            res = optimize.least_squares(
                resid, x0, bounds=(lower, upper), xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=10000
            )
            if best is None or res.cost < best.cost:
                best = res
        if best.status <= 0:
            raise ConvergenceError("pinned-frequency decay fit did not converge")
    a, f, ph, c, b1, b2 = unpack(best.x)
    if a < 0:
        a, ph = -a, ph + np.pi
    ph = float((ph + np.pi) % (2 * np.pi) - np.pi)
    cov = _covariance(best)
    if sigma is None and len(yw) > len(best.x):
        cov = cov * 2 * best.cost / (len(yw) - len(best.x))
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    if pinned:
        names = ["amplitude", "offset", "b1"] + (["b2"] if quad else [])
    else:
        names = ["amplitude", "frequency", "phase", "offset", "b1"] + (["b2"] if quad else [])
    stderr = {n: float(s) for n, s in zip(names, se)}
    for n in ("frequency", "phase", "b2"):
        stderr.setdefault(n, 0.0)
    return DampedCosineFit(
        float(a), float(f), ph, float(c), float(b1), float(b2), decay_order, stderr, window,
        int(mask.sum()), float(2 * best.cost),
    )
