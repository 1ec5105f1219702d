from __future__ import annotations

import csv
import io
import json
import logging
import subprocess
import sys
from pathlib import Path

import pytest

from neuroproxy.cli import configure_logging, main

GOLDEN = Path(__file__).parent / "golden" / "coincidence_lossy_report.json"


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_capacity_table_csv(capsys):
    code, out, _ = run_cli(capsys, "capacity-table", "--N", "10", "--t", "10", "--dt", "1", "--phases", "3")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["scheme"] for r in rows] == ["timing", "rank_order", "synchrony", "binary_reference", "count", "rate"]
    assert {r["scheme"]: int(r["states"]) for r in rows}["rank_order"] == 3628800
    assert {r["scheme"]: r["floored_bits"] for r in rows}["timing"] == "33"
    assert "20" in rows[2]["note"]


def test_encode_decode_round_trip(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "encode", "--scheme", "timing", "--symbol", "4321", "--N", "4")
    assert code == 0
    events = json.loads(out)
    assert len(events) == 4
    path = tmp_path / "ev.json"
    path.write_text(out)
    code, out, _ = run_cli(capsys, "decode", "--scheme", "timing", "--N", "4", "--events", str(path))
    assert (code, out.strip()) == (0, "4321")


def test_codec_errors_exit_2(capsys, tmp_path):
    code, _, err = run_cli(capsys, "encode", "--scheme", "count", "--symbol", "99", "--N", "3")
    assert code == 2 and err.startswith("error:")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _, _ = run_cli(capsys, "decode", "--scheme", "count", "--events", str(bad))
    assert code == 2


def test_validate_exit_codes(capsys):
    code, out, _ = run_cli(capsys, "validate", "coincidence")
    assert code == 0 and json.loads(out)["verdict"] == "pass"
    code, out, _ = run_cli(capsys, "validate", "coincidence_lossy")
    assert code == 1 and json.loads(out)["verdict"] == "fail"
    code, _, _ = run_cli(capsys, "validate", "level_crossing")
    assert code == 2


def test_run_matches_golden_report(capsys, tmp_path):
    target = tmp_path / "report.json"
    code, out, _ = run_cli(capsys, "run", "coincidence_lossy", "--report", str(target))
    assert code == 0 and "23/40" in out
    assert target.read_text() == GOLDEN.read_text()


def test_run_seed_override_and_stdout(capsys):
    code, out, _ = run_cli(capsys, "run", "coincidence_lossy", "--seed", "99")
    assert code == 0
    report = json.loads(out)
    assert report["seed"] == 99
    assert out != GOLDEN.read_text()


def test_run_scenario_file_path(capsys, tmp_path):
    src = json.loads((Path(__file__).parents[1] / "src/neuroproxy/scenarios/level_crossing.json").read_text())
    src["objectives"] = str(Path(__file__).parents[1] / "src/neuroproxy/scenarios/level_crossing.obj")
    path = tmp_path / "s.json"
    path.write_text(json.dumps(src))
    code, out, _ = run_cli(capsys, "run", str(path))
    assert code == 0 and json.loads(out)["scenario"] == "level_crossing"


def test_unknown_scenario(capsys):
    code, _, err = run_cli(capsys, "run", "no-such-scenario")
    assert code == 2 and "no-such-scenario" in err


def test_log_level_from_environment(monkeypatch):
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    try:
        root.handlers.clear()
        monkeypatch.setenv("NEUROPROXY_LOG", "debug")
        configure_logging()
        assert root.level == logging.DEBUG
        root.handlers.clear()
        monkeypatch.setenv("NEUROPROXY_LOG", "bogus")
        configure_logging()
        assert root.level == logging.ERROR
    finally:
        root.handlers[:] = saved[0]
        root.setLevel(saved[1])


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "neuroproxy", "capacity-table", "--N", "3"], capture_output=True, text=True, check=True
    )
    assert proc.stdout.splitlines()[0].startswith("scheme,states")


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
