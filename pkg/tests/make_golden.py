"""Regenerate the golden traces, digests and derived trace fixtures.

Run from the repository root after an intentional change to trace output:

    python3 tests/make_golden.py
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

from hybridpay.cli import main
from hybridpay.sim import config, run

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
FIXTURES = HERE / "fixtures"
TRACED = ("alt1_design2_happy", "dispute_confirm_no_execute")


def corrupt_balance(text: str) -> str:
    """Shift one unit of Alice's fiat to Ingrid in the last snapshot's bank_a ledger."""
    lines = text.splitlines()
    rec = json.loads(lines[-1])
    rec["snapshot"]["banks"]["bank_a"]["accounts"]["alice"] += 1
    lines[-1] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
    return "\n".join(lines) + "\n"


def drop_acceptance(text: str) -> str:
    """Strip the countersigned acceptance from a settled trace, keeping everything else."""
    lines = text.splitlines()
    out = []
    for line in lines[1:]:
        rec = json.loads(line)
        if rec["kind"] == "M_A1I1":
            rec["message"] = None
            rec["kind"] = "NOTE"
            rec["payload_hash"] = hashlib.sha256(rec["note"].encode()).hexdigest()
        out.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    return "\n".join([lines[0]] + out) + "\n"


def main_() -> None:
    GOLDEN.mkdir(exist_ok=True)
    digests = {}
    for name in config.library_names():
        text = run(config.library(name)).trace_text()
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
        if name in TRACED:
            (GOLDEN / f"{name}.jsonl").write_text(text)
    (GOLDEN / "trace_digests.json").write_text(json.dumps(digests, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    main(["run", "alt1_design2_happy", "--format", "structured"], buf)
    (GOLDEN / "report_alt1_design2_happy.json").write_text(buf.getvalue())
    base = (GOLDEN / "alt1_design2_happy.jsonl").read_text()
    (FIXTURES / "corrupted_balance.jsonl").write_text(corrupt_balance(base))
    (FIXTURES / "settled_without_acceptance.jsonl").write_text(drop_acceptance(base))


if __name__ == "__main__":
    main_()
