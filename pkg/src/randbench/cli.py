"""Command-line driver: generate, run, fit, report, appendix.

Exit codes: 0 success, 1 usage or configuration error, 2 data or convergence error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import appendix as app
from .config import ConfigError, RunConfig, load_config
from .estimator import (
    ConvergenceError,
    EstimatorError,
    FitWarning,
    aggregate,
    bootstrap,
    fit_aggregates,
    scatter_diagnostic,
)
from .protocol import ProtocolError, generate_plan, run_plan
from .records import (
    PLAN_FORMAT,
    RECORDS_FORMAT,
    RecordFormatError,
    make_header,
    read_plan,
    read_records,
    write_plan,
    write_records,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

CONVENTION_NOTE = (
    "EPG = d/2 = 1 - average fidelity per randomized computational gate; "
    "p_l = (1 - (1 - d_if)(1 - d)^l) / 2 with l the number of randomized gates"
)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _stamp(cfg: RunConfig) -> str:
    return f"config_hash={cfg.config_hash()} seed={cfg.seed}"


def _out_dir(cfg: RunConfig, args) -> Path:
    path = Path(args.out if args.out else cfg.output_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"{path}: cannot create output directory: {exc.strerror}") from None
    return path


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_generate(cfg: RunConfig, args) -> Path:
    specs = generate_plan(cfg.plan)
    header = make_header(PLAN_FORMAT, cfg.config_hash(), cfg.seed, plan_hash=cfg.plan_hash(),
                         n_qubits=cfg.plan.n_qubits)
    path = _out_dir(cfg, args) / "plan.jsonl"
    try:
        write_plan(path, specs, header)
    except OSError as exc:
        raise DataError(f"{path}: cannot write: {exc.strerror}") from None
    print(f"wrote {len(specs)} sequences to {path}")
    return path


def cmd_run(cfg: RunConfig, args) -> Path:
    out = _out_dir(cfg, args)
    plan_path = Path(args.plan) if args.plan else out / "plan.jsonl"
    header, specs = read_plan(plan_path)
    if header.get("plan_hash") != cfg.plan_hash():
        raise DataError(
            f"{plan_path}: plan_hash {header.get('plan_hash')} does not match the [plan] section "
            f"and seed of this config ({cfg.plan_hash()}); regenerate the plan"
        )
    records = run_plan(specs, cfg.noise, cfg.plan.n_shots, cfg.seed, cfg.plan.batches, jobs=args.jobs)
    rec_header = make_header(
        RECORDS_FORMAT, cfg.config_hash(), cfg.seed, plan_hash=cfg.plan_hash(), noise=cfg.noise.to_dict()
    )
    path = out / "records.jsonl"
    write_records(path, records, rec_header)
    print(f"wrote {len(records)} records to {path}")
    return path


def _fit_report(cfg: RunConfig, records_path: Path, header: dict, records) -> tuple:
    agg = aggregate(records)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FitWarning)
        fit = fit_aggregates(agg)
    boot = None
    if cfg.bootstrap:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))
        boot = bootstrap(records, cfg.bootstrap, rng)
    by_len: dict[int, list] = {}
    for r in records:
        by_len.setdefault(r.length, []).append(r)
    scatter = []
    for length in sorted(by_len):
        rows = by_len[length]
        if len(rows) < 8:
            continue
        s = scatter_diagnostic(rows)
        scatter.append({
            "length": length,
            "mean": s.mean,
            "variance": s.variance,
            "excess_variance_ratio": s.excess_variance_ratio,
            "ratio_sigma": s.ratio_sigma,
            "ks_pvalue": s.ks_pvalue,
            "classification": s.classification,
        })
    return {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "records_config_hash": header.get("config_hash"),
        "records": str(records_path),
        "d": fit.d,
        "d_se": fit.d_se,
        "epg": fit.epg,
        "epg_se": fit.epg_se,
        "d_if": fit.d_if,
        "d_if_se": fit.d_if_se,
        "chi2": fit.chi2,
        "dof": fit.dof,
        "converged": fit.converged,
        "degenerate": fit.degenerate,
        "warnings": list(fit.warnings) + [str(w.message) for w in caught],
        "bootstrap": None if boot is None else {
            "n_resamples": boot.n_resamples,
            "stderr": boot.stderr,
            "interval_68": list(boot.interval),
            "failures": boot.failures,
        },
        "scatter": scatter,
        "convention": CONVENTION_NOTE,
    }, fit, agg


def render_report(rep: dict) -> str:
    lines = [
        "randbench fit report",
        f"config_hash={rep['config_hash']} seed={rep['seed']}",
        f"records: {rep['records']}",
        "",
        f"d       = {_fmt(rep['d'])} +/- {_fmt(rep['d_se'])}",
        f"EPG=d/2 = {_fmt(rep['epg'])} +/- {_fmt(rep['epg_se'])}",
        f"d_if    = {_fmt(rep['d_if'])} +/- {_fmt(rep['d_if_se'])}",
        f"chi2    = {_fmt(rep['chi2'])} (dof {rep['dof']})",
        f"converged={rep['converged']} degenerate={rep['degenerate']}",
    ]
    b = rep.get("bootstrap")
    if b:
        lo, hi = b["interval_68"]
        lines.append(
            f"bootstrap stderr(EPG) = {_fmt(b['stderr'])}, 68% interval [{_fmt(lo)}, {_fmt(hi)}] "
            f"from {b['n_resamples']} resamples ({b['failures']} failed)"
        )
    for w in rep.get("warnings", []):
        lines.append(f"warning: {w}")
    if rep.get("scatter"):
        lines += ["", "scatter per length: length mean variance ratio(+/-sigma) ks_p class"]
        for s in rep["scatter"]:
            lines.append(
                f"  {s['length']:4d} {s['mean']:.5f} {s['variance']:.3e} "
                f"{s['excess_variance_ratio']:.3f}(+/-{s['ratio_sigma']:.3f}) {s['ks_pvalue']:.3g} "
                f"{s['classification']}"
            )
    lines += ["", f"convention: {rep['convention']}"]
    return "\n".join(lines) + "\n"


def _write_plot_data(out: Path, cfg: RunConfig, fit, agg, records) -> tuple[Path, Path]:
    stamp = _stamp(cfg)
    fig1 = out / "fig1_sequences.dat"
    rows = sorted(records, key=lambda r: (r.length, r.j, r.m))
    with open(fig1, "w") as fh:
        fh.write(f"# {stamp}\n# per-sequence fidelity 1 - p_jlm\n# length j m fidelity stderr\n")
        for r in rows:
            fh.write(f"{r.length} {r.j} {r.m} {1 - r.p_hat:.8f} {r.stderr:.8f}\n")
    fig2 = out / "fig2_average.dat"
    lo_p, hi_p = fit.band(agg.lengths)
    pred = fit.predict(agg.lengths)
    with open(fig2, "w") as fh:
        fh.write(
            f"# {stamp}\n# per-j average fidelity with fit and 68% band\n"
            "# length j fidelity_j fit_fidelity band_lower band_upper\n"
        )
        for k, length in enumerate(agg.lengths):
            for j in range(agg.p_jl.shape[0]):
                fh.write(
                    f"{int(length)} {j} {1 - agg.p_jl[j, k]:.8f} {1 - pred[k]:.8f} "
                    f"{1 - hi_p[k]:.8f} {1 - lo_p[k]:.8f}\n"
                )
    return fig1, fig2


def cmd_fit(cfg: RunConfig, args) -> Path:
    out = _out_dir(cfg, args)
    rec_path = Path(args.records) if args.records else out / "records.jsonl"
    header, records = read_records(rec_path)
    rep, fit, agg = _fit_report(cfg, rec_path, header, records)
    (out / "report.json").write_text(json.dumps(rep, sort_keys=True, indent=1) + "\n")
    text = render_report(rep)
    (out / "report.txt").write_text(text)
    _write_plot_data(out, cfg, fit, agg, records)
    sys.stdout.write(text)
    return out / "report.txt"


def cmd_report(cfg: RunConfig, args) -> None:
    out = Path(args.out if args.out else cfg.output_dir)
    path = Path(args.report) if args.report else out / "report.json"
    try:
        rep = json.loads(path.read_text())
    except OSError:
        raise DataError(f"{path}: no report found; run 'randbench fit' first") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid report: {exc.msg}") from None
    sys.stdout.write(render_report(rep))


def _appendix_rng(cfg: RunConfig, experiment: str) -> np.random.Generator:
    stream = app.EXPERIMENTS.index(experiment)
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(3, stream)))


def cmd_appendix(cfg: RunConfig, args) -> Path:
    experiment = args.experiment or cfg.appendix.experiment
    if experiment not in app.EXPERIMENTS:
        raise UsageError(f"unknown experiment {experiment!r}; choose from {', '.join(app.EXPERIMENTS)}")
    a = cfg.appendix
    out = _out_dir(cfg, args)
    rng = _appendix_rng(cfg, experiment)
    stamp = _stamp(cfg)
    curves: dict[str, app.Curve] = {}
    if experiment == "rabi":
        durations = a.durations or tuple(app.default_rabi_durations(cfg.noise))
        curve, report = app.rabi_flop(
            durations, cfg.noise, rng, shots=a.shots, window=a.window, step_time=a.step_time,
            pulse_time_offset=a.pulse_time_offset,
        )
        curves["curve"] = curve
    else:
        delays = a.delays or app.default_delays()
        refocused = experiment != "ramsey-unrefocused"
        plan = app.RamseyPlan(delays, refocused, a.shots, cfg.noise,
                              a.beam_fraction if experiment == "spont-ratio" else 0.0)
        if experiment == "ramsey-refocused":
            curve, report = app.ramsey_refocused(plan, rng, a.window or (1.0, 200.0), a.step_time)
            curves["curve"] = curve
        elif experiment == "ramsey-unrefocused":
            curve, report = app.ramsey_unrefocused(plan, rng, a.window or (0.0, 220.0), a.step_time)
            curves["curve"] = curve
        else:
            beams, ref, ratio, report = app.spont_experiment(plan, rng, a.step_time, a.mode)
            curves.update(beams=beams, reference=ref, ratio=ratio)
    for name, curve in curves.items():
        (out / f"{experiment}_{name}.dat").write_text(curve.to_text(f"{stamp}\n{experiment} {name}"))
    rep = {"config_hash": cfg.config_hash(), "seed": cfg.seed, **report.to_dict()}
    path = out / f"{experiment}_report.json"
    path.write_text(json.dumps(rep, sort_keys=True, indent=1) + "\n")
    print(f"{experiment}: per-step contribution {_fmt(report.contribution)} +/- {_fmt(report.contribution_se)}")
    print(f"  step_time={report.step_time} window={report.window}")
    print(f"  {report.conversion}")
    return path


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", metavar="DIR", help="output directory (default: [output] dir)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for run")
    parser = _Parser(prog="randbench", description="Pauli-randomized benchmarking simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("generate", parents=[common], help="write the sequence plan")
    p = sub.add_parser("run", parents=[common], help="execute a plan into records")
    p.add_argument("--plan", metavar="PATH", help="plan file (default: OUT/plan.jsonl)")
    p = sub.add_parser("fit", parents=[common], help="fit records, write report and plot data")
    p.add_argument("--records", metavar="PATH", help="records file (default: OUT/records.jsonl)")
    p = sub.add_parser("report", parents=[common], help="print a saved fit report")
    p.add_argument("--report", metavar="PATH", help="report file (default: OUT/report.json)")
    p = sub.add_parser("appendix", parents=[common], help="direct characterization experiment")
    p.add_argument("--experiment", help=f"one of {', '.join(app.EXPERIMENTS)}")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "fit": cmd_fit,
    "report": cmd_report,
    "appendix": cmd_appendix,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config, args.seed)
        COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (DataError, RecordFormatError, EstimatorError, ConvergenceError, ProtocolError,
            app.AppendixError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
