"""Scenario configuration: JSON documents validated against a published schema."""

from __future__ import annotations

import copy
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from ..errors import InvalidScenario

PARTICIPANTS = ("alice", "ingrid")
BANKS = ("bank_a", "bank_i")
REGULATOR = "regulator"
LEDGER = "ledger"

DEFAULTS: dict[str, Any] = {
    "description": "",
    "seed": 0,
    "scheme": "ed25519",
    "rate": 1,
    "extra_parties": [],
    "adversary": {"alice": "HONEST", "ingrid": "HONEST"},
    "disputes": {"always": False},
}
CHANNEL_DEFAULTS = {"id": "channel-1", "dispute_window": 10, "updates": [], "close": True}
SESSION_DEFAULTS: dict[str, Any] = {
    "id": "rb-1",
    "collateral_payer": 0,
    "collateral_payee": 0,
    "method": "push",
    "irreversible_after": 0,
    "registered_sources": list(BANKS),
    "deadlines": {"initiation_timeout": 20, "t_actual_transfer": 5, "t_transfer_max": 15},
    "dispositions": {"payer_collateral_on_revert": "payee", "payee_collateral_on_compensation": "payer"},
}
BANK_DEFAULTS = {"equity": 1000, "behavior": "HONEST", "slow_delay": 3}


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("hybridpay").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=1)
def _validator() -> jsonschema.protocols.Validator:
    cls = jsonschema.validators.validator_for(schema())
    cls.check_schema(schema())
    return cls(schema())


def _merge(defaults: Mapping[str, Any], given: Mapping[str, Any]) -> dict:
    out = copy.deepcopy(dict(defaults))
    for k, v in given.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def normalize(raw: Mapping[str, Any]) -> dict:
    """Validate ``raw`` and fill every default, returning a self-contained config."""
    err = jsonschema.exceptions.best_match(_validator().iter_errors(raw))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise InvalidScenario(f"{where}: {err.message}")
    cfg = _merge(DEFAULTS, raw)
    cfg["channel"] = _merge(CHANNEL_DEFAULTS, raw["channel"])
    cfg["banks"] = {b: _merge(BANK_DEFAULTS, raw["banks"][b]) for b in BANKS}
    session = raw.get("session")
    cfg["session"] = None if session is None else _merge(SESSION_DEFAULTS, session)
    _check(cfg)
    return cfg


def _check(cfg: Mapping[str, Any]) -> None:
    ch = cfg["channel"]
    capacity = ch["deposits"]["alice"] + ch["deposits"]["ingrid"]
    for n, u in enumerate(ch["updates"]):
        if u["alice"] + u["ingrid"] != capacity:
            raise InvalidScenario(f"channel/updates/{n}: balances must sum to capacity {capacity}")
    names = set(PARTICIPANTS) | set(BANKS) | {REGULATOR, LEDGER}
    for p in cfg["extra_parties"]:
        if p["name"] in names:
            raise InvalidScenario(f"extra_parties: {p['name']!r} is already defined")
        names.add(p["name"])
    s = cfg["session"]
    if s is not None:
        for src in s["registered_sources"]:
            if src not in names:
                raise InvalidScenario(f"session/registered_sources: unknown party {src!r}")
        if s["method"] == "request-to-pay" and s["irreversible_after"]:
            raise InvalidScenario("session/irreversible_after: request-to-pay transfers are never reversible")


def load(source: str | Path | Mapping[str, Any]) -> dict:
    """Load a scenario from a path, a JSON string or an already-parsed mapping."""
    if isinstance(source, Mapping):
        return normalize(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as e:
        raise InvalidScenario(f"cannot read {path}: {e.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidScenario(f"{path}: not valid JSON ({e.msg} at line {e.lineno})") from None
    if not isinstance(raw, dict):
        raise InvalidScenario(f"{path}: top level must be an object")
    return normalize(raw)


def library_names() -> list[str]:
    root = resources.files("hybridpay").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def library(name: str) -> dict:
    """A scenario shipped with the package, by file stem."""
    root = resources.files("hybridpay").joinpath("scenarios")
    f = root.joinpath(f"{name}.json")
    if not f.is_file():
        raise InvalidScenario(f"no library scenario named {name!r}")
    return normalize(json.loads(f.read_text()))
