"""Line-delimited JSON plan and record files with a versioned header line."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable

from .labels import GateLabel, LabelError
from .protocol import ExperimentRecord, SequenceSpec

FORMAT_VERSION = 1
PLAN_FORMAT = "randbench-plan"
RECORDS_FORMAT = "randbench-records"


class RecordFormatError(ValueError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def write_jsonl(path: str | Path, header: dict, rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for row in rows:
            fh.write(_dumps(row) + "\n")
    tmp.replace(path)
    return path


def read_jsonl(path: str | Path, expected_format: str) -> tuple[dict, list[dict]]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise RecordFormatError(f"{path}: cannot read: {exc.strerror}") from None
    if not lines:
        raise RecordFormatError(f"{path}: empty file")
    rows = []
    for n, line in enumerate(lines, 1):
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"{path}:{n}: invalid JSON: {exc.msg}") from None
    header = rows.pop(0)
    if not isinstance(header, dict) or header.get("format") != expected_format:
        raise RecordFormatError(f"{path}:1: expected a {expected_format} header, got {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise RecordFormatError(f"{path}:1: unsupported version {header.get('version')!r}")
    if "n_records" in header and header["n_records"] != len(rows):
        raise RecordFormatError(f"{path}: header declares {header['n_records']} records, found {len(rows)}")
    return header, rows


def make_header(fmt: str, config_hash: str, seed: int, **extra) -> dict:
    return {"format": fmt, "version": FORMAT_VERSION, "config_hash": config_hash, "seed": seed, **extra}


def spec_to_dict(spec: SequenceSpec) -> dict:
    multi = spec.n_qubits > 1
    return {
        "j": spec.j,
        "k": spec.k,
        "l_k": spec.l_k,
        "m": spec.m,
        "length": spec.length,
        "n_qubits": spec.n_qubits,
        "pulses": [p.token(multi) for p in spec.pulses],
        "expected": spec.expected,
        "support": list(spec.support),
        "closing_eigenstate": spec.closing_eigenstate,
    }


_SPEC_KEYS = {"j", "k", "l_k", "m", "length", "n_qubits", "pulses", "expected", "support", "closing_eigenstate"}
_RECORD_KEYS = {"j", "k", "l_k", "m", "length", "wrong_count", "n_shots", "p_hat", "stderr", "p_exact", "contexts"}


def _check_keys(row: dict, keys: set, where: str):
    if not isinstance(row, dict):
        raise RecordFormatError(f"{where}: expected an object")
    missing = keys - row.keys()
    extra = row.keys() - keys
    if missing or extra:
        raise RecordFormatError(f"{where}: schema mismatch (missing {sorted(missing)}, unexpected {sorted(extra)})")


def spec_from_dict(row: dict, where: str = "plan") -> SequenceSpec:
    _check_keys(row, _SPEC_KEYS, where)
    try:
        pulses = tuple(GateLabel.parse(tok) for tok in row["pulses"])
    except LabelError as exc:
        raise RecordFormatError(f"{where}: {exc}") from None
    spec = SequenceSpec(
        int(row["j"]),
        int(row["k"]),
        int(row["l_k"]),
        int(row["m"]),
        pulses,
        int(row["expected"]),
        tuple(int(q) for q in row["support"]),
        int(row["n_qubits"]),
        int(row["closing_eigenstate"]),
    )
    if spec.length != row["length"]:
        raise RecordFormatError(f"{where}: length {row['length']} inconsistent with l_k {spec.l_k}")
    return spec


def record_to_dict(rec: ExperimentRecord) -> dict:
    return {
        "j": rec.j,
        "k": rec.k,
        "l_k": rec.l_k,
        "m": rec.m,
        "length": rec.length,
        "wrong_count": rec.wrong_count,
        "n_shots": rec.n_shots,
        "p_hat": rec.p_hat,
        "stderr": rec.stderr,
        "p_exact": None if math.isnan(rec.p_exact) else rec.p_exact,
        "contexts": list(rec.contexts),
    }


def record_from_dict(row: dict, where: str = "records") -> ExperimentRecord:
    _check_keys(row, _RECORD_KEYS, where)
    try:
        rec = ExperimentRecord(
            int(row["j"]),
            int(row["k"]),
            int(row["l_k"]),
            int(row["m"]),
            int(row["length"]),
            int(row["wrong_count"]),
            int(row["n_shots"]),
            float("nan") if row["p_exact"] is None else float(row["p_exact"]),
            tuple(row["contexts"]),
        )
    except (TypeError, ValueError) as exc:
        raise RecordFormatError(f"{where}: {exc}") from None
    if not 0 <= rec.wrong_count <= rec.n_shots:
        raise RecordFormatError(f"{where}: wrong_count outside [0, n_shots]")
    return rec


def write_plan(path, specs, header: dict) -> Path:
    specs = list(specs)
    return write_jsonl(path, {**header, "n_records": len(specs)}, (spec_to_dict(s) for s in specs))


def read_plan(path) -> tuple[dict, list[SequenceSpec]]:
    header, rows = read_jsonl(path, PLAN_FORMAT)
    return header, [spec_from_dict(r, f"{path}:{i + 2}") for i, r in enumerate(rows)]


def write_records(path, records, header: dict) -> Path:
    records = list(records)
    return write_jsonl(path, {**header, "n_records": len(records)}, (record_to_dict(r) for r in records))


def read_records(path) -> tuple[dict, list[ExperimentRecord]]:
    header, rows = read_jsonl(path, RECORDS_FORMAT)
    return header, [record_from_dict(r, f"{path}:{i + 2}") for i, r in enumerate(rows)]
