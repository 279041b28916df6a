import json

import numpy as np
import pytest

from randbench.config import ConfigError, load_config, default_config_text, parse_config
from randbench.protocol import BenchmarkPlan, ExperimentRecord, generate_plan
from randbench.records import (
    PLAN_FORMAT,
    RECORDS_FORMAT,
    RecordFormatError,
    make_header,
    read_plan,
    read_records,
    record_from_dict,
    record_to_dict,
    spec_from_dict,
    spec_to_dict,
    write_plan,
    write_records,
)

MINIMAL = "[plan]\nlengths = 2, 4, 8\nn_sequences = 2\nn_randomizations = 2\nn_shots = 100\nseed = 3\n"


class TestConfig:
    def test_default_config(self):
        cfg = parse_config(default_config_text(5))
        assert cfg.plan.n_specs == 544
        assert cfg.plan.lengths == BenchmarkPlan().lengths
        assert cfg.seed == 5 and cfg.bootstrap == 1000

    def test_seed_required(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config("[plan]\nn_shots = 10\n")
        assert parse_config("[plan]\nn_shots = 10\n", seed=4).seed == 4

    def test_seed_override(self):
        assert parse_config(MINIMAL, seed=99).seed == 99

    def test_no_file_uses_defaults(self):
        cfg = load_config(None, seed=1)
        assert cfg.plan.n_specs == 544 and cfg.source == "<defaults>"

    @pytest.mark.parametrize(
        "text, line",
        [
            (MINIMAL + "bogus = 1\n", 7),
            (MINIMAL + "[noise]\ndepol_per_gate = 0.01\nwhatever = 2\n", 9),
            (MINIMAL + "[extra]\nx = 1\n", 7),
            (MINIMAL + "[noise]\ndepol_per_gate = lots\n", 8),
            (MINIMAL + "[noise]\ndepol_per_gate = 2.0\n", 8),
            (MINIMAL + "[output]\nbootstrap = 10\n", 8),
            (MINIMAL + "[appendix]\nexperiment = spectroscopy\n", 8),
            (MINIMAL + "[appendix]\nwindow = 5, 1\n", 8),
        ],
    )
    def test_line_diagnostics(self, text, line):
        with pytest.raises(ConfigError, match=rf"^run\.ini:{line}:"):
            parse_config(text, "run.ini")

    def test_plan_errors(self):
        with pytest.raises(ConfigError, match="lengths"):
            parse_config("[plan]\nlengths = 4, 2\nseed = 1\n")

    def test_grid_syntax(self):
        cfg = parse_config(MINIMAL + "[appendix]\ndelays = 0:20:5\ndurations = 0, 1, 2.5\n")
        assert cfg.appendix.delays == (0.0, 5.0, 10.0, 15.0, 20.0)
        assert cfg.appendix.durations == (0.0, 1.0, 2.5)

    def test_hashes(self):
        a = parse_config(MINIMAL)
        b = parse_config(MINIMAL + "[noise]\ndepol_per_gate = 0.01\n")
        assert a.plan_hash() == b.plan_hash()
        assert a.config_hash() != b.config_hash()
        assert a.with_seed(4).plan_hash() != a.plan_hash()
        assert a.config_hash() == parse_config(MINIMAL).config_hash()
        json.dumps(a.to_dict())

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.ini")


class TestRecords:
    def test_spec_roundtrip(self):
        for n_qubits in (1, 2):
            specs = generate_plan(BenchmarkPlan((1, 3), 2, 2, 10, n_qubits, seed=1))
            for s in specs:
                assert spec_from_dict(json.loads(json.dumps(spec_to_dict(s)))) == s

    def test_record_roundtrip(self):
        rec = ExperimentRecord(1, 2, 3, 0, 4, 7, 100, 0.07, ("ctx",))
        assert record_from_dict(record_to_dict(rec)) == rec
        nan = ExperimentRecord(0, 0, 1, 0, 2, 0, 10)
        back = record_from_dict(json.loads(json.dumps(record_to_dict(nan))))
        assert np.isnan(back.p_exact)

    def test_schema_mismatch(self):
        row = record_to_dict(ExperimentRecord(0, 0, 1, 0, 2, 0, 10))
        row["extra"] = 1
        with pytest.raises(RecordFormatError, match="schema mismatch"):
            record_from_dict(row)
        del row["extra"], row["n_shots"]
        with pytest.raises(RecordFormatError, match="n_shots"):
            record_from_dict(row)

    def test_count_out_of_range(self):
        row = record_to_dict(ExperimentRecord(0, 0, 1, 0, 2, 0, 10))
        row["wrong_count"] = 11
        with pytest.raises(RecordFormatError):
            record_from_dict(row)

    def test_file_roundtrip_and_header(self, tmp_path):
        specs = generate_plan(BenchmarkPlan((1, 2), 1, 2, 10, seed=2))
        path = write_plan(tmp_path / "plan.jsonl", specs, make_header(PLAN_FORMAT, "abc", 2))
        header, back = read_plan(path)
        assert back == specs and header["config_hash"] == "abc" and header["n_records"] == 4
        with pytest.raises(RecordFormatError, match="expected a randbench-records header"):
            read_records(path)

    def test_truncated_and_garbled(self, tmp_path):
        recs = [ExperimentRecord(0, 0, 1, m, 2, 1, 10) for m in range(3)]
        path = write_records(tmp_path / "r.jsonl", recs, make_header(RECORDS_FORMAT, "h", 1))
        lines = path.read_text().splitlines()
        (tmp_path / "short.jsonl").write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(RecordFormatError, match="declares 3 records, found 2"):
            read_records(tmp_path / "short.jsonl")
        (tmp_path / "bad.jsonl").write_text("\n".join(lines[:2] + ["{not json"]) + "\n")
        with pytest.raises(RecordFormatError, match=r"bad\.jsonl:3"):
            read_records(tmp_path / "bad.jsonl")
        (tmp_path / "empty.jsonl").write_text("")
        with pytest.raises(RecordFormatError, match="empty"):
            read_records(tmp_path / "empty.jsonl")

    def test_version_check(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text(json.dumps({"format": RECORDS_FORMAT, "version": 99}) + "\n")
        with pytest.raises(RecordFormatError, match="version"):
            read_records(path)

    def test_writes_are_deterministic(self, tmp_path):
        specs = generate_plan(BenchmarkPlan((1, 2), 2, 2, 10, seed=8))
        a = write_plan(tmp_path / "a.jsonl", specs, make_header(PLAN_FORMAT, "h", 8))
        b = write_plan(tmp_path / "b.jsonl", generate_plan(BenchmarkPlan((1, 2), 2, 2, 10, seed=8)),
                       make_header(PLAN_FORMAT, "h", 8))
        assert a.read_bytes() == b.read_bytes()
        assert not list(tmp_path.glob("*.tmp"))
