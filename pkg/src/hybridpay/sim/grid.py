"""Exhaustive enumeration of adversary combinations over a base scenario."""

from __future__ import annotations

import copy
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..errors import GridTooLarge, InvalidScenario
from . import config as _config
from .engine import run

MAX_CELLS = 10**4

BEHAVIORS = ["HONEST", "CONFIRM_NO_EXECUTE", "RECEIVE_NO_CREDIT", "SILENT", "SLOW"]
ALTERNATIVES = ["ALT1_DESIGN1", "ALT1_DESIGN2", "ALT2", "ALT2_RECEIPT"]
ALICE = ["HONEST", "WITHHOLD_ORDER", "FORGE_CERT", "RECALL", "STALE_CLOSE"]
INGRID = ["HONEST", "STALE_CLOSE"]

PRESETS: dict[str, dict[str, Any]] = {
    "banks": {"dimensions": {"bank_a": BEHAVIORS, "bank_i": BEHAVIORS}},
    "verdict": {
        "dimensions": {
            "alternative": ["ALT1_DESIGN1", "ALT1_DESIGN2", "ALT2"],
            "bank_a": BEHAVIORS,
            "bank_i": BEHAVIORS,
        },
        "disputes_always": True,
    },
    "alternatives": {"dimensions": {"alternative": ALTERNATIVES}},
    "full": {
        "dimensions": {
            "alternative": ALTERNATIVES,
            "bank_a": BEHAVIORS,
            "bank_i": BEHAVIORS,
            "alice": ALICE,
            "ingrid": INGRID,
        }
    },
}

DIMENSIONS = {"bank_a", "bank_i", "alice", "ingrid", "alternative", "collaterals", "method"}


def load_grid(source: str | Mapping[str, Any]) -> dict[str, Any]:
    """Resolve a preset name, a JSON file path, inline JSON or a mapping."""
    if isinstance(source, Mapping):
        grid = dict(source)
    elif source in PRESETS:
        grid = copy.deepcopy(PRESETS[source])
    else:
        text = source
        p = Path(source)
        if not source.lstrip().startswith("{"):
            try:
                text = p.read_text()
            except OSError:
                raise InvalidScenario(f"unknown grid {source!r}; presets: {', '.join(sorted(PRESETS))}") from None
        try:
            grid = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidScenario(f"grid is not valid JSON: {e.msg}") from None
    dims = grid.get("dimensions")
    if not isinstance(dims, dict) or not dims:
        raise InvalidScenario("grid needs a non-empty 'dimensions' object")
    for k, values in dims.items():
        if k not in DIMENSIONS:
            raise InvalidScenario(f"unknown grid dimension {k!r}")
        if not isinstance(values, list) or not values:
            raise InvalidScenario(f"grid dimension {k!r} must be a non-empty list")
    return grid


def grid_size(grid: Mapping[str, Any]) -> int:
    return math.prod(len(v) for v in grid["dimensions"].values())


def apply_cell(base: Mapping[str, Any], cell: Mapping[str, Any], disputes_always: bool = False) -> dict:
    cfg = copy.deepcopy(dict(base))
    for k, v in cell.items():
        if k in ("bank_a", "bank_i"):
            cfg["banks"][k]["behavior"] = v
        elif k in ("alice", "ingrid"):
            cfg.setdefault("adversary", {})[k] = v
        elif k == "collaterals":
            cfg["session"]["collateral_payer"], cfg["session"]["collateral_payee"] = v
        else:
            cfg["session"][k] = v
    if disputes_always:
        cfg["disputes"] = {"always": True}
    cfg["name"] = f"{base['name']}[" + ",".join(f"{k}={_fmt(v)}" for k, v in cell.items()) + "]"
    return _config.normalize(cfg)


def _fmt(v: Any) -> str:
    return "/".join(map(str, v)) if isinstance(v, (list, tuple)) else str(v)


@dataclass
class CellResult:
    cell: dict
    report: dict
    violations: list[dict]
    deviators: list[str]
    culprits: list[str]
    misclassified: bool


@dataclass
class Enumeration:
    cells: list[CellResult] = field(default_factory=list)

    @property
    def violations(self) -> list[tuple[dict, dict]]:
        return [(c.cell, v) for c in self.cells for v in c.violations]

    @property
    def misclassified(self) -> list[CellResult]:
        return [c for c in self.cells if c.misclassified]

    def histogram(self, by: str | None = None) -> dict[str, dict[str, int]]:
        """Outcome counts, optionally split by one grid dimension."""
        out: dict[str, Counter] = {}
        for c in self.cells:
            key = "all" if by is None else str(c.cell.get(by, "-"))
            out.setdefault(key, Counter())[c.report["outcome"] or "NONE"] += 1
        return {k: dict(sorted(v.items())) for k, v in sorted(out.items())}

    def summary(self) -> dict:
        return {
            "cells": len(self.cells),
            "violations": len(self.violations),
            "misclassified": len(self.misclassified),
            "outcomes": self.histogram()["all"] if self.cells else {},
        }


def enumerate_faults(base: Mapping[str, Any] | str, grid: str | Mapping[str, Any], seed: int | None = None) -> Enumeration:
    """Run every combination in ``grid`` over ``base`` and audit each trace.

    When the grid asks for a dispute in every run, each cell is also checked
    for verdict soundness: the banks the regulator blames must be exactly the
    banks that deviated.
    """
    base_cfg = _config.load(base)
    grid = load_grid(grid)
    size = grid_size(grid)
    if size > MAX_CELLS:
        raise GridTooLarge(f"grid has {size} cells, limit is {MAX_CELLS}")
    if base_cfg["session"] is None and set(grid["dimensions"]) & {"alternative", "collaterals", "method"}:
        raise InvalidScenario("session dimensions need a base scenario with a session")
    always = bool(grid.get("disputes_always"))
    names = list(grid["dimensions"])
    result = Enumeration()
    for combo in itertools.product(*(grid["dimensions"][n] for n in names)):
        cell = dict(zip(names, combo))
        res = run(apply_cell(base_cfg, cell, always), seed)
        rep = res.report
        deviators = sorted(b for b, d in rep["deviations"].items() if d)
        culprits = sorted({c for v in rep["verdicts"] for c in v["culprits"]})
        misclassified = always and rep["outcome"] is not None and (deviators != culprits or not rep["verdicts"])
        result.cells.append(CellResult(cell, rep, rep["violations"], deviators, culprits, misclassified))
    return result
