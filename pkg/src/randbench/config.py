"""INI run configuration with fail-fast diagnostics.

Sections::

    [plan]      lengths, n_sequences, n_randomizations, n_shots, batches, n_qubits, seed
    [noise]     any NoiseModel field
    [output]    dir, bootstrap
    [appendix]  experiment, delays, durations, shots, window, step_time,
                beam_fraction, mode, pulse_time_offset

Unknown sections or keys are errors that name the file line.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .appendix import EXPERIMENTS
from .noise import NoiseModel, validate
from .protocol import BenchmarkPlan, ProtocolError


class ConfigError(ValueError):
    pass


_PLAN_KEYS = {
    "lengths": "ints",
    "n_sequences": int,
    "n_randomizations": int,
    "n_shots": int,
    "batches": int,
    "n_qubits": int,
    "seed": int,
}
_OUTPUT_KEYS = {"dir": str, "bootstrap": int}
_APPENDIX_KEYS = {
    "experiment": str,
    "delays": "grid",
    "durations": "grid",
    "shots": int,
    "window": "floats",
    "step_time": float,
    "beam_fraction": float,
    "mode": str,
    "pulse_time_offset": float,
}
_NOISE_TYPES = {f.name: f.type for f in fields(NoiseModel)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class AppendixConfig:
    experiment: str = "ramsey-refocused"
    delays: tuple[float, ...] | None = None
    durations: tuple[float, ...] | None = None
    shots: int = 500
    window: tuple[float, float] | None = None
    step_time: float | None = None
    beam_fraction: float = 0.5
    mode: str = "contrast"
    pulse_time_offset: float = 0.02


@dataclass(frozen=True)
class RunConfig:
    plan: BenchmarkPlan
    noise: NoiseModel = NoiseModel()
    output_dir: str = "out"
    bootstrap: int = 1000
    appendix: AppendixConfig = field(default_factory=AppendixConfig)
    source: str = "<defaults>"

    @property
    def seed(self) -> int:
        return self.plan.seed

    def to_dict(self) -> dict:
        p = self.plan
        return {
            "plan": {
                "lengths": list(p.lengths),
                "n_sequences": p.n_sequences,
                "n_randomizations": p.n_randomizations,
                "n_shots": p.n_shots,
                "batches": p.batches,
                "n_qubits": p.n_qubits,
                "seed": p.seed,
            },
            "noise": self.noise.to_dict(),
            "output": {"bootstrap": self.bootstrap},
            "appendix": {
                k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.appendix.__dict__.items()
            },
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def plan_hash(self) -> str:
        blob = json.dumps(self.to_dict()["plan"], sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        p = self.plan
        plan = BenchmarkPlan(p.lengths, p.n_sequences, p.n_randomizations, p.n_shots, p.n_qubits, seed, p.batches)
        return RunConfig(plan, self.noise, self.output_dir, self.bootstrap, self.appendix, self.source)


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    index: dict[tuple[str, str | None], int] = {}
    section = ""
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), n)
            continue
        m = re.match(r"^([^=:\s][^=:]*?)\s*[=:]", line)
        if m:
            index.setdefault((section, m.group(1).strip().lower()), n)
    return index


def _parse_grid(raw: str) -> tuple[float, ...]:
    """``a, b, c`` or ``start:stop:step`` (stop inclusive)."""
    raw = raw.strip()
    if ":" in raw:
        parts = [float(v) for v in raw.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError("grid range must be start:stop:step with step > 0")
        start, stop, step = parts
        n = int(round((stop - start) / step))
        return tuple(start + i * step for i in range(n + 1))
    return tuple(float(v) for v in raw.replace(",", " ").split())


def _convert(kind, raw: str):
    if kind == "ints":
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if kind == "floats":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if kind == "grid":
        return _parse_grid(raw)
    if kind in (bool, "bool"):
        low = raw.strip().lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def load_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    """Parse ``path`` (or defaults when None); ``seed`` overrides the file's seed."""
    text = "" if path is None else _read(path)
    source = "<defaults>" if path is None else str(path)
    return parse_config(text, source, seed)


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None


def parse_config(text: str, source: str = "<string>", seed: int | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_index(text)

    def where(section, key=None):
        n = lines.get((section, key))
        return f"{source}:{n}" if n else source

    schemas = {"plan": _PLAN_KEYS, "noise": _NOISE_TYPES, "output": _OUTPUT_KEYS, "appendix": _APPENDIX_KEYS}
    values: dict[str, dict] = {name: {} for name in schemas}
    for section in parser.sections():
        if section not in schemas:
            raise ConfigError(f"{where(section)}: unknown section [{section}]; expected one of {sorted(schemas)}")
        schema = schemas[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"{where(section, key)}: [{section}] unknown key {key!r}")
            try:
                values[section][key] = _convert(schema[key], raw)
            except ValueError as exc:
                raise ConfigError(f"{where(section, key)}: [{section}] {key}: {exc}") from None

    plan_vals = values["plan"]
    if seed is not None:
        plan_vals["seed"] = int(seed)
    if "seed" not in plan_vals:
        raise ConfigError(f"{source}: [plan] seed is required (or pass --seed)")
    try:
        plan = BenchmarkPlan(**plan_vals)
    except ProtocolError as exc:
        raise ConfigError(f"{source}: [plan] {exc}") from None
    noise = NoiseModel(**values["noise"])
    problems = validate(noise)
    if problems:
        key = next((k for k in values["noise"] if problems[0].startswith(k)), None)
        raise ConfigError(f"{where('noise', key)}: [noise] " + "; ".join(problems))
    out = values["output"]
    if out.get("bootstrap", 1000) != 0 and out.get("bootstrap", 1000) < 100:
        raise ConfigError(f"{where('output', 'bootstrap')}: [output] bootstrap must be 0 or >= 100")
    app = values["appendix"]
    if "experiment" in app and app["experiment"] not in EXPERIMENTS:
        raise ConfigError(
            f"{where('appendix', 'experiment')}: [appendix] experiment must be one of {EXPERIMENTS}"
        )
    if "window" in app:
        if len(app["window"]) != 2 or app["window"][0] >= app["window"][1]:
            raise ConfigError(f"{where('appendix', 'window')}: [appendix] window must be 'lo, hi' with lo < hi")
    if app.get("mode", "contrast") not in ("contrast", "probability"):
        raise ConfigError(f"{where('appendix', 'mode')}: [appendix] mode must be contrast or probability")
    return RunConfig(
        plan,
        noise,
        out.get("dir", "out"),
        out.get("bootstrap", 1000),
        AppendixConfig(**app),
        source,
    )


def default_config_text(seed: int = 20040101) -> str:
    """A complete config reproducing the default plan, for ``--config`` templates and tests."""
    lengths = ", ".join(str(v) for v in BenchmarkPlan().lengths)
    return (
        "[plan]\n"
        f"lengths = {lengths}\n"
        "n_sequences = 4\nn_randomizations = 8\nn_shots = 8160\nbatches = 4\nn_qubits = 1\n"
        f"seed = {seed}\n\n"
        "[noise]\ndepol_per_gate = 0.0\n\n"
        "[output]\ndir = out\nbootstrap = 1000\n"
    )
