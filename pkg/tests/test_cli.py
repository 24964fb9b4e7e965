from __future__ import annotations

import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from hybridpay import cli

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
FIXTURES = HERE / "fixtures"


def call(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out)
    return code, out.getvalue()


def test_run_table():
    code, text = call("run", "alt1_design1_happy")
    assert code == 0
    assert "outcome      SETTLED" in text
    assert "fiat delta   alice=-10 ingrid=+10" in text


def test_run_structured_matches_golden():
    code, text = call("run", "alt1_design2_happy", "--format", "structured")
    assert code == 0
    assert json.loads(text) == json.loads((GOLDEN / "report_alt1_design2_happy.json").read_text())
    assert list(json.loads(text)) == sorted(cli.REPORT_KEYS)


def test_run_accepts_paths_and_suffixed_names():
    assert call("run", "timeout_silent_bank.json")[0] == 0
    code, text = call("run", "scenarios/alt1_design2_happy")
    assert code == 0 and "alice=20 ingrid=10 (closed)" in text
    assert call("run", str(FIXTURES / "weakened_collateral.json"))[0] == 3


def test_run_writes_a_replayable_trace(tmp_path):
    trace = tmp_path / "t.jsonl"
    assert call("run", "dispute_confirm_no_execute", "--seed", "9", "--trace-out", str(trace))[0] == 0
    assert call("audit", str(trace))[0] == 0
    code, text = call("replay", str(trace))
    assert code == 0 and text.startswith("identical:")


def test_replay_detects_divergence(tmp_path):
    lines = (GOLDEN / "alt1_design2_happy.jsonl").read_text().splitlines(keepends=True)
    rec = json.loads(lines[4])
    rec["tick"] += 1
    lines[4] = json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n"
    path = tmp_path / "edited.jsonl"
    path.write_text("".join(lines))
    code, text = call("replay", str(path))
    assert code == 3
    assert text.startswith("diverges at record 3")


@pytest.mark.parametrize(
    "fixture,invariant",
    [("corrupted_balance.jsonl", "fiat-conservation"), ("settled_without_acceptance.jsonl", "authorization")],
)
def test_audit_fixtures(fixture, invariant):
    code, text = call("audit", str(FIXTURES / fixture), "--format", "structured")
    assert code == 3
    assert invariant in json.loads(text)["by_invariant"]


def test_audit_golden_is_clean():
    code, text = call("audit", str(GOLDEN / "dispute_confirm_no_execute.jsonl"))
    assert code == 0 and ", 0 violations" in text


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "no_such_scenario"],
        ["audit", str(FIXTURES / "weakened_collateral.json")],
        ["audit", "/nonexistent/trace.jsonl"],
        ["replay", "/nonexistent/trace.jsonl"],
        ["enumerate", "alt1_design1_happy", "--grid", "nope"],
        ["frobnicate"],
        ["run"],
    ],
    ids=["unknown-scenario", "foreign-file", "missing-trace", "missing-replay", "bad-grid", "bad-verb", "missing-arg"],
)
def test_invalid_input_exits_2(argv):
    assert call(*argv)[0] == 2


def test_grid_too_large_exits_4():
    dims = {k: list(range(16)) for k in ("bank_a", "bank_i", "alice", "ingrid")}
    assert call("enumerate", "alt1_design1_happy", "--grid", json.dumps({"dimensions": dims}))[0] == 4


def test_internal_error_exits_1(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "run", boom)
    assert call("run", "alt1_design1_happy")[0] == 1


def test_enumerate_table_and_structured():
    code, text = call("enumerate", "alt1_design1_happy", "--grid", "alternatives")
    assert code == 0
    assert text.splitlines()[0] == "cells 4  violations 0  misclassified 0"
    assert "ALT2_RECEIPT" in text
    code, text = call("enumerate", "alt1_design1_happy", "--by", "bank_i", "--format", "structured")
    data = json.loads(text)
    assert code == 0 and data["summary"]["cells"] == 25
    assert set(data["histogram"]) == {"CONFIRM_NO_EXECUTE", "HONEST", "RECEIVE_NO_CREDIT", "SILENT", "SLOW"}


def test_list():
    code, text = call("list", "--grids")
    assert code == 0
    assert "timeout_silent_bank" in text and "grid full: 1000 cells" in text


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hybridpay", "run", "alt2_happy"], capture_output=True, text=True)
    assert proc.returncode == 0 and "SETTLED" in proc.stdout
