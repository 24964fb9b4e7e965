"""Trace parsing and the invariant auditor.

:func:`audit_trace` re-checks a finished trace from its records alone:
record digests, conservation of channel value and fiat, that every
channel change is backed by a verifying signed message or an elapsed
lock, phase-graph legality, settlement authorisation, certificate honesty
of honest banks, the termination bound, and the honest-party safety floor.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Iterable

from ..core import (
    KeyDirectory,
    Kind,
    PartyId,
    Role,
    Scheme,
    SignedMessage,
    canonical_deserialize,
    digest_hex,
    verify,
)
from ..errors import SerializationError, TraceFormatError
from ..rebalance import Phase, legal_transition

TRACE_FORMAT = "hybridpay-trace/1"

HEADER_KEYS = {"format", "scenario", "seed", "parties", "capacity", "fiat_total", "bound"}
RECORD_KEYS = {"i", "tick", "actor", "kind", "message", "payload_hash", "note", "snapshot", "snapshot_digest"}
SETTLING = {Kind.CERT1, Kind.CERT2, Kind.M_A1I1BA1, Kind.M_A1I1BA1BI1}
CHANNEL_MESSAGES = SETTLING | {Kind.CHANNEL_UPDATE, Kind.M_A1I1}


def parse_trace(text: str) -> tuple[dict, list[dict]]:
    """Split a JSONL trace into header and records, checking the line format."""
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise TraceFormatError("empty trace")
    try:
        objs = [json.loads(l) for l in lines]
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"line is not JSON: {e.msg}") from None
    header, records = objs[0], objs[1:]
    if not isinstance(header, dict) or header.get("format") != TRACE_FORMAT:
        raise TraceFormatError(f"not a {TRACE_FORMAT} trace")
    missing = HEADER_KEYS - set(header)
    if missing:
        raise TraceFormatError(f"header lacks {sorted(missing)}")
    for n, r in enumerate(records):
        if not isinstance(r, dict) or RECORD_KEYS - set(r):
            raise TraceFormatError(f"record {n} is malformed")
        if r["i"] != n:
            raise TraceFormatError(f"record {n} carries index {r['i']}")
    return header, records


def directory_from_header(header: dict) -> KeyDirectory:
    d = KeyDirectory()
    try:
        for p in header["parties"]:
            d.add(PartyId(p["name"], Role(p["role"])), Scheme(p["scheme"]), bytes.fromhex(p["public"]))
    except (KeyError, ValueError, TypeError) as e:
        raise TraceFormatError(f"bad party entry: {e}") from None
    return d


def decode_message(record: dict) -> SignedMessage | None:
    raw = record.get("message")
    if raw is None:
        return None
    try:
        return canonical_deserialize(bytes.fromhex(raw))
    except (ValueError, SerializationError) as e:
        raise TraceFormatError(f"record {record.get('i')}: undecodable message ({e})") from None


def _v(index: int, invariant: str, detail: str) -> dict:
    return {"index": index, "invariant": invariant, "detail": detail}


def _channel_key(snap: dict) -> Any:
    ch = snap["channel"]
    return (ch["seq"], sorted(ch["balances"].items()), [sorted(l.items()) for l in ch["locks"]])


def _bank_total(b: dict) -> int:
    return sum(b["accounts"].values()) + b["equity"] + b["suspense"] + sum(a for _, a in b["in_flight"])


def _totals(snap: dict, rate: int) -> dict[str, int]:
    ch = snap["channel"]
    chan = ch["payout"] if ch["payout"] is not None else ch["balances"]
    fiat = {
        "alice": snap["banks"]["bank_a"]["accounts"].get("alice", 0),
        "ingrid": snap["banks"]["bank_i"]["accounts"].get("ingrid", 0),
    }
    return {p: chan[p] * rate + fiat[p] for p in ("alice", "ingrid")}


def safety_floors(scenario: dict, outcome: str | None, start: dict[str, int]) -> dict[str, int]:
    """Least end value each participant is owed under the collateral rules.

    The payer may lose her collateral only when an accepted session
    reverts, and then it goes to the payee; the payee may lose his only as
    waiting compensation to the payer.
    """
    s = scenario["session"]
    rate = scenario["rate"]
    c_a, c_i = s["collateral_payer"] * rate, s["collateral_payee"] * rate
    floors = dict(start)
    if outcome == "REVERTED":
        floors["alice"] -= c_a
        floors["ingrid"] += c_a
    elif outcome == "SETTLED_WITH_COMPENSATION":
        floors["ingrid"] -= c_i
    return floors


def audit_trace(header: dict, records: list[dict], directory: KeyDirectory | None = None) -> list[dict]:
    """All invariant violations found in a trace; empty means clean."""
    if directory is None:
        directory = directory_from_header(header)
    out: list[dict] = []
    capacity, fiat_total, bound = header["capacity"], header["fiat_total"], header["bound"]
    scenario = header["scenario"]
    behaviors = {n: b["behavior"] for n, b in scenario["banks"].items()}
    prev: dict | None = None
    phase: str | None = None
    accepted_ref: str | None = None
    sources: set[str] | None = None
    start_snap: dict | None = None
    session_terms: dict | None = None
    remedied: dict[tuple[str, str], int] = {}

    for r in records:
        i, snap = r["i"], r["snapshot"]
        try:
            msg = decode_message(r)
        except TraceFormatError as e:
            out.append(_v(i, "format", str(e)))
            msg = None
        ok_msg = msg is not None and verify(msg, directory)

        # each record hashes what it carries
        snap_hash = hashlib.sha256(
            json.dumps(snap, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()
        ).hexdigest()
        payload = bytes.fromhex(r["message"]) if msg is not None else r["note"].encode()
        if snap_hash != r["snapshot_digest"] or hashlib.sha256(payload).hexdigest() != r["payload_hash"]:
            out.append(_v(i, "record-integrity", "stored digest does not match record content"))

        # channel conservation
        ch = snap["channel"]
        held = sum(ch["balances"].values()) + sum(l["amount"] for l in ch["locks"])
        if held != capacity or any(v < 0 for v in ch["balances"].values()):
            out.append(_v(i, "channel-conservation", f"balances+locks={held}, capacity={capacity}"))
        if ch["payout"] is not None and sum(ch["payout"].values()) != capacity:
            out.append(_v(i, "channel-conservation", f"payout sums to {sum(ch['payout'].values())}"))

        # fiat conservation
        total = sum(_bank_total(b) for b in snap["banks"].values())
        negative = any(v < 0 for b in snap["banks"].values() for v in b["accounts"].values())
        if total != fiat_total or negative:
            out.append(_v(i, "fiat-conservation", f"bank holdings={total}, expected {fiat_total}"))

        # every channel change carries its authority
        if prev is not None and _channel_key(prev) != _channel_key(snap):
            if r["kind"] == "TIMEOUT":
                prev_locks = {l["id"]: l for l in prev["channel"]["locks"]}
                now_ids = {l["id"] for l in ch["locks"]}
                fired = [l for lid, l in prev_locks.items() if lid not in now_ids]
                if not fired or any(r["tick"] <= l["timeout"] for l in fired):
                    out.append(_v(i, "unsigned-transition", "timeout before any lock expired"))
            elif r["kind"] == "CLOSE":
                pass
            elif not ok_msg or msg.kind not in CHANNEL_MESSAGES:
                out.append(_v(i, "unsigned-transition", f"{r['kind']} changed the channel without a valid message"))

        # session bookkeeping
        if msg is not None and ok_msg:
            if msg.kind is Kind.M_A1 and start_snap is None:
                start_snap, session_terms = snap, msg.body
            elif msg.kind is Kind.M_A1I1 and r["kind"] == "M_A1I1":
                accepted_ref = digest_hex(msg)
            elif msg.kind is Kind.REGISTRATION and r["kind"] == "REGISTRATION" and msg.complete:
                sources = {n for n, _ in msg.body["sources"]}
        elif r["kind"] == "M_A1" and start_snap is None:
            start_snap = snap

        new_phase = None if snap["session"] is None else snap["session"]["phase"]
        if new_phase is not None and new_phase != phase:
            if phase is not None and not legal_transition(Phase(phase), Phase(new_phase)):
                out.append(_v(i, "phase-graph", f"{phase} -> {new_phase}"))
            if phase is None and new_phase != Phase.PROPOSED.value:
                out.append(_v(i, "phase-graph", f"session begins in {new_phase}"))
            if new_phase in ("SETTLED", "AWAITING_RECEIPT", "TRANSFER_TRIGGERED"):
                if accepted_ref is None:
                    out.append(_v(i, "authorization", f"{new_phase} without a verifying m_A1I1"))
                elif not ok_msg or msg.kind not in SETTLING:
                    out.append(_v(i, "authorization", f"{new_phase} without a verifying settlement message"))
                else:
                    ref = msg.body.get("ref") if msg.kind in (Kind.CERT1, Kind.CERT2) else digest_hex(msg.prefix(2))
                    banks = {msg.issuer.name} if msg.kind in (Kind.CERT1, Kind.CERT2) else {
                        p.name for p in msg.signers[2 : len(msg.signatures)]
                    }
                    if ref != accepted_ref:
                        out.append(_v(i, "authorization", "settlement message references another order"))
                    if sources is None or not banks <= sources:
                        out.append(_v(i, "authorization", f"settlement signed by unregistered {sorted(banks)}"))
            phase = new_phase

        # remedies move customer balances outside the transfer itself
        if r["kind"] == "VERDICT" and prev is not None:
            for bank, b in snap["banks"].items():
                for acct, bal in b["accounts"].items():
                    moved = bal - prev["banks"][bank]["accounts"].get(acct, 0)
                    if moved:
                        remedied[(bank, acct)] = remedied.get((bank, acct), 0) + moved

        # honest banks' certificates match their books
        if ok_msg and msg.kind in (Kind.CERT1, Kind.CERT2) and r["actor"] == msg.issuer.name and session_terms:
            bank = msg.issuer.name
            if behaviors.get(bank) in ("HONEST", "SLOW"):
                if msg.kind is Kind.CERT1:
                    start_bal = start_snap["banks"][bank]["accounts"].get(session_terms["payer"], 0)
                    now_bal = snap["banks"][bank]["accounts"].get(session_terms["payer"], 0)
                    now_bal -= remedied.get((bank, session_terms["payer"]), 0)
                    if start_bal - now_bal < session_terms["fiat_amount"]:
                        out.append(_v(i, "certificate-honesty", f"{bank} issued Cert1 before debiting"))
                else:
                    start_bal = start_snap["banks"][bank]["accounts"].get(session_terms["payee"], 0)
                    # a remedy already paid to the payee counts as the credit
                    now_bal = snap["banks"][bank]["accounts"].get(session_terms["payee"], 0)
                    if now_bal - start_bal < session_terms["fiat_amount"]:
                        out.append(_v(i, "certificate-honesty", f"{bank} issued Cert2 before crediting"))

        if r["tick"] > bound:
            out.append(_v(i, "termination", f"tick {r['tick']} beyond bound {bound}"))
        prev = snap

    if records:
        last = records[-1]
        end = last["snapshot"]
        sess = end["session"]
        if sess is not None and sess["outcome"] is None:
            out.append(_v(last["i"], "termination", f"session still in {sess['phase']} at end of run"))
        if start_snap is not None and sess is not None:
            rate = scenario["rate"]
            start = _totals(start_snap, rate)
            floors = safety_floors(scenario, sess["outcome"], start)
            got = _totals(end, rate)
            for party in ("alice", "ingrid"):
                if scenario["adversary"][party] != "HONEST":
                    continue
                if got[party] < floors[party]:
                    out.append(
                        _v(last["i"], "honest-safety",
                           f"{party} ends at {got[party]}, floor {floors[party]} (start {start[party]})")
                    )
    return out


def audit_text(text: str) -> list[dict]:
    header, records = parse_trace(text)
    return audit_trace(header, records)


def summarize(violations: Iterable[dict]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for v in violations:
        counts[v["invariant"]] = counts.get(v["invariant"], 0) + 1
    return dict(sorted(counts.items()))
