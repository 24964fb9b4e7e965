"""Acceptance criteria 1-8, each reporting one PASS/FAIL line.

Run with pytest (the lines are repeated in the terminal summary) or directly:
``python -m tests.test_acceptance``.
"""

from __future__ import annotations

import copy
import itertools
import time
from functools import lru_cache
from pathlib import Path

from hybridpay.channel import accept_update, open_channel, propose_update
from hybridpay.core import KeyDirectory
from hybridpay.sim import audit_text, config, grid, run

from .conftest import make_keys
from .helpers import Criterion

FIXTURES = Path(__file__).parent / "fixtures"
CONSERVATION = {"channel-conservation", "fiat-conservation"}


def _with_collateral(name, c_a, c_i, **banks):
    cfg = config.library(name)
    cfg["session"]["collateral_payer"], cfg["session"]["collateral_payee"] = c_a, c_i
    for bank, behavior in banks.items():
        cfg["banks"][bank]["behavior"] = behavior
    return config.normalize(cfg)


@lru_cache(maxsize=None)
def _grid(preset):
    base = _with_collateral("alt1_design1_happy", 2, 3)
    start = time.perf_counter()
    result = grid.enumerate_faults(base, preset)
    return result, time.perf_counter() - start


def test_criterion_1_worked_example():
    with Criterion(1, "worked example ends at {20,10} with 10 moved Alice to Ingrid, all variants") as c:
        for name in ("alt1_design1_happy", "alt1_design2_happy", "alt2_happy"):
            cfg = config.library(name)
            assert cfg["channel"]["deposits"] == {"alice": 20, "ingrid": 10}
            assert cfg["channel"]["updates"][-1] == {"alice": 10, "ingrid": 20}
            t = time.perf_counter()
            rep = run(cfg).report
            elapsed = time.perf_counter() - t
            assert rep["outcome"] == "SETTLED", name
            assert rep["channel"] == {"alice": 20, "ingrid": 10}, name
            assert rep["fiat_delta"] == {"alice": -10, "ingrid": 10}, name
            assert rep["violations"] == [], name
            assert elapsed < 1.0, f"{name} took {elapsed:.2f}s"
        c.detail = "3/3 variants exact"


def test_criterion_2_timeout_path():
    with Criterion(2, "silent payer bank: revert to {10-C_A, 20+C_A}") as c:
        for c_a, c_i in ((0, 0), (2, 3), (5, 0)):
            rep = run(_with_collateral("timeout_silent_bank", c_a, c_i, bank_a="SILENT")).report
            assert rep["outcome"] == "REVERTED", (c_a, c_i)
            assert rep["channel"] == {"alice": 10 - c_a, "ingrid": 20 + c_a}, (c_a, c_i)
            assert rep["fiat_delta"]["ingrid"] == 0
            assert rep["violations"] == []
        c.detail = "3/3 collateral pairs exact"


def test_criterion_3_compensation_path():
    with Criterion(3, "no receipt certificate by the deadline: Alice credited 10+C_I") as c:
        for c_a, c_i in ((2, 3), (0, 0), (5, 4)):
            rep = run(_with_collateral("design2_compensation", c_a, c_i)).report
            assert rep["outcome"] == "SETTLED_WITH_COMPENSATION"
            assert rep["channel"]["alice"] == 10 + 10 + c_i, (c_a, c_i)
            assert rep["violations"] == []
        base = run(config.library("design2_compensation")).report
        assert base["channel"]["alice"] == 23
        c.detail = "Alice ends at 23 for C_I=3"


def test_criterion_4_verdict_soundness():
    with Criterion(4, "75-cell verdict grid blames exactly the deviating banks") as c:
        result, elapsed = _grid("verdict")
        assert len(result.cells) == 75
        assert result.misclassified == [], [(m.cell, m.deviators, m.culprits) for m in result.misclassified]
        # the named behaviours in isolation: the other bank honest, so the deviation is exercised
        for cell in result.cells:
            a, i = cell.cell["bank_a"], cell.cell["bank_i"]
            if (a, i) == ("CONFIRM_NO_EXECUTE", "HONEST"):
                assert cell.culprits == ["bank_a"], cell.cell
            if (a, i) == ("HONEST", "RECEIVE_NO_CREDIT"):
                assert cell.culprits == ["bank_i"], cell.cell
        assert elapsed < 10.0, f"{elapsed:.2f}s"
        c.elapsed = elapsed
        c.detail = "0 misclassified"


def test_criterion_5_conservation():
    with Criterion(5, "channel and fiat conservation at every snapshot; mutation fixture trips") as c:
        runs = 0
        found = []
        for name in config.library_names():
            found += [v for v in run(config.library(name)).report["violations"] if v["invariant"] in CONSERVATION]
            runs += 1
        for preset in ("banks", "verdict", "full"):
            result, _ = _grid(preset)
            found += [v for _, v in result.violations if v["invariant"] in CONSERVATION]
            runs += len(result.cells)
        assert found == []
        tripped = {v["invariant"] for v in audit_text((FIXTURES / "corrupted_balance.jsonl").read_text())}
        assert "fiat-conservation" in tripped
        c.detail = f"{runs} runs clean, fixture trips {sorted(tripped & CONSERVATION)}"


def test_criterion_6_honest_safety():
    with Criterion(6, "no honest party below its floor across the full adversary grid") as c:
        result, elapsed = _grid("full")
        assert len(result.cells) == 1000
        unsafe = [(cell, v) for cell, v in result.violations if v["invariant"] == "honest-safety"]
        assert unsafe == [], unsafe[:3]
        assert result.violations == []
        assert elapsed < 60.0, f"{elapsed:.2f}s"
        c.elapsed = elapsed
        c.detail = "1000 runs, 0 violations"


def test_criterion_7_dispute_optimality():
    with Criterion(7, "dispute payout follows the highest-seq state for every ordering") as c:
        keys = make_keys()
        d = KeyDirectory(keys.values())
        state, _ = open_channel(keys["alice"], keys["ingrid"], 20, 10, 10, "ch", d)
        states = [state]
        for a in (10, 15, 4, 27):
            states.append(accept_update(states[-1], propose_update(states[-1], keys["alice"], a, 30 - a), keys["ingrid"], d))
        checked = mismatches = 0
        for r in (1, 2, 3):
            for subset in itertools.combinations(states, r):
                for order in itertools.permutations(subset):
                    # spread submissions over the window, the last one on its final tick
                    ticks = [0] + [10 * (k + 1) // (len(order) - 1 or 1) for k in range(len(order) - 1)]
                    _, anchor = open_channel(keys["alice"], keys["ingrid"], 20, 10, 10, "ch", d)
                    for t, s in zip(ticks, order):
                        anchor.dispute(s, t)
                    payout = anchor.close(anchor.earliest_close())
                    best = max(subset, key=lambda s: s.seq)
                    mismatches += payout != {"alice": best.balance_a, "ingrid": best.balance_i}
                    checked += 1
        assert mismatches == 0, f"{mismatches} mismatches"
        c.detail = f"{checked} orderings, 0 mismatches"


def test_criterion_8_determinism():
    with Criterion(8, "repeated runs of every library scenario are byte-identical") as c:
        names = config.library_names()
        for name in names:
            cfg = config.library(name)
            assert run(cfg).trace_text() == run(copy.deepcopy(cfg)).trace_text(), name
        c.detail = f"{len(names)} scenarios identical"


if __name__ == "__main__":
    for fn in [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]:
        try:
            fn()
        except AssertionError:
            pass
