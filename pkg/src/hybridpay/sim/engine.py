"""Deterministic discrete-event run of one scenario.

Events are ordered by ``(tick, insertion sequence)``.  Every protocol
message takes one tick to reach its recipients; banks add their own
processing delay.  Each handled event that changes anything appends a
trace record carrying a full snapshot of the channel, both bank ledgers
and the session phase.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, replace
from typing import Any, Callable

from ..channel import (
    ChannelState,
    accept_update,
    open_channel,
    propose_update,
)
from ..core import (
    KeyDirectory,
    Kind,
    PartyId,
    Role,
    Scheme,
    Signature,
    SignedMessage,
    canonical_serialize,
    derive_keypair,
    digest_hex,
    fiat,
    new_message,
    sign,
)
from ..errors import HybridPayError, ReversalRefused
from ..extrail import (
    BankLedger,
    Deliver,
    Emit,
    Inadmissible,
    InsufficientFiat,
    UnknownCustomer,
    adjudicate,
    enforce,
    execute_agreed,
    fiat_total,
    process_order,
    receive_delivery,
    relay_alternative2,
    request_reversal,
    shortfalls,
)
from ..rebalance import (
    Deadlines,
    Dispositions,
    RebalanceSession,
    accept,
    accept_certificate,
    initiate,
    on_timeout,
    propose_registration,
    raise_dispute,
    register_sources,
    session_from_proposal,
    submit_to_bank,
)
from . import config as _config

TRACE_FORMAT = "hybridpay-trace/1"
LATENCY = 1

ROLES = {
    "alice": Role.PARTICIPANT,
    "ingrid": Role.PARTICIPANT,
    "bank_a": Role.BANK,
    "bank_i": Role.BANK,
    "regulator": Role.REGULATOR,
    "ledger": Role.LEDGER,
}


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def termination_bound(cfg: dict) -> int:
    """Latest tick any run of ``cfg`` may reach."""
    ch = cfg["channel"]
    s = cfg["session"]
    base = len(ch["updates"]) + 1
    if s is None:
        return base + ch["dispute_window"] + 4
    d = s["deadlines"]
    delay = max(b["slow_delay"] for b in cfg["banks"].values())
    start = s.get("start", base)
    return (
        start
        + 2 * d["initiation_timeout"]
        + 2 * d["t_transfer_max"]
        + d["t_actual_transfer"]
        + 4 * delay
        + ch["dispute_window"]
        + 16
    )


@dataclass
class SimResult:
    header: dict
    records: list[dict]
    report: dict

    def trace_lines(self) -> list[str]:
        return [canonical_json(self.header)] + [canonical_json(r) for r in self.records]

    def trace_text(self) -> str:
        return "\n".join(self.trace_lines()) + "\n"


class Simulation:
    """One scenario run.  Build it, call :meth:`run`, read the result."""

    def __init__(self, cfg: dict, seed: int | None = None):
        self.cfg = cfg
        self.seed = cfg["seed"] if seed is None else seed
        scheme = Scheme(cfg["scheme"])
        parties = [PartyId(n, r) for n, r in ROLES.items()]
        parties += [PartyId(p["name"], Role(p["role"])) for p in cfg["extra_parties"]]
        self.keys = {p.name: derive_keypair(p, self.seed, scheme) for p in parties}
        self.directory = KeyDirectory(self.keys.values())
        self.adversary = cfg["adversary"]
        self.rate = cfg["rate"]

        self.queue: list[tuple[int, int, str, Callable, tuple]] = []
        self._seq = 0
        self.now = 0
        self.records: list[dict] = []

        ch = cfg["channel"]
        self.state, self.anchor = open_channel(
            self.keys["alice"], self.keys["ingrid"], ch["deposits"]["alice"], ch["deposits"]["ingrid"],
            ch["dispute_window"], ch["id"], self.directory,
        )
        self.known: dict[str, list[ChannelState]] = {"alice": [self.state], "ingrid": [self.state]}
        self.banks = {
            name: BankLedger(self.keys[name], b["accounts"], b["equity"], b["behavior"], b["slow_delay"])
            for name, b in cfg["banks"].items()
        }
        self.session: RebalanceSession | None = None
        self.m_a1: SignedMessage | None = None
        self.registration: SignedMessage | None = None
        self.order = None
        self.inbox: dict[str, list[SignedMessage]] = {"alice": [], "ingrid": []}
        self.seen: set[tuple[str, str]] = set()
        self.verdicts: list[dict] = []
        self.closed_at: int | None = None
        self.terminal_handled = False
        self.watching = False
        self.rechecks: set[int] = set()
        self.claimed: dict[str, int] = {}

    # ---------------------------------------------------------------- plumbing

    def schedule(self, at: int, actor: str, fn: Callable, *args: Any) -> None:
        heapq.heappush(self.queue, (at, self._seq, actor, fn, args))
        self._seq += 1

    def snapshot(self) -> dict:
        s = self.state
        locks = [
            {"id": l.lock_id, "owner": l.owner, "amount": l.amount.amount, "timeout": l.timeout}
            for l in s.locks
        ]
        channel = {
            "seq": s.seq,
            "balances": {s.party_a.name: s.balance_a.amount, s.party_i.name: s.balance_i.amount},
            "locks": locks,
            "status": self.anchor.status,
            "payout": None
            if self.anchor.payout is None
            else {k: v.amount for k, v in sorted(self.anchor.payout.items())},
        }
        sess = None
        if self.session is not None:
            sess = {
                "id": self.session.session_id,
                "phase": self.session.phase.value,
                "outcome": None if self.session.outcome is None else self.session.outcome.value,
            }
        return {
            "channel": channel,
            "banks": {n: b.snapshot() for n, b in sorted(self.banks.items())},
            "session": sess,
        }

    def emit(self, actor: str, kind: str, message: SignedMessage | None = None, note: str = "") -> None:
        raw = canonical_serialize(message) if message is not None else None
        snap = self.snapshot()
        self.records.append(
            {
                "i": len(self.records),
                "tick": self.now,
                "actor": actor,
                "kind": kind,
                "message": raw.hex() if raw is not None else None,
                "payload_hash": sha256_hex(raw if raw is not None else note.encode()),
                "note": note,
                "snapshot": snap,
                "snapshot_digest": sha256_hex(canonical_json(snap).encode()),
            }
        )
        if actor in self.banks:
            self._wake()

    def header(self) -> dict:
        parties = [
            {"name": name, "role": k.party.role.value, "scheme": k.scheme.value, "public": k.public.hex()}
            for name, k in sorted(self.keys.items())
        ]
        return {
            "format": TRACE_FORMAT,
            "scenario": self.cfg,
            "seed": self.seed,
            "parties": parties,
            "capacity": self.state.capacity.amount,
            "fiat_total": fiat_total(self.banks.values()).amount,
            "bound": termination_bound(self.cfg),
        }

    def _remember(self) -> None:
        for p in ("alice", "ingrid"):
            self.known[p].append(self.state)

    # ---------------------------------------------------------------- run

    def run(self) -> SimResult:
        header = self.header()
        self.emit("ledger", "OPEN", self.state.proof)
        ch = self.cfg["channel"]
        tick = 1
        for u in ch["updates"]:
            self.schedule(tick, "update", self._update, u)
            tick += 1
        s = self.cfg["session"]
        if s is not None:
            self.schedule(s.get("start", tick), "alice", self._initiate)
        else:
            self._schedule_close(tick)
        while self.queue:
            at, _, _actor, fn, args = heapq.heappop(self.queue)
            self.now = at
            fn(*args)
        return SimResult(header, self.records, self.report())

    # ---------------------------------------------------------------- channel

    def _update(self, u: dict) -> None:
        bal = self.state
        proposer = u.get("proposer") or ("alice" if u["alice"] < bal.balance_a.amount else "ingrid")
        other = "ingrid" if proposer == "alice" else "alice"
        msg = propose_update(self.state, self.keys[proposer], u["alice"], u["ingrid"])
        self.state = accept_update(self.state, msg, self.keys[other], self.directory)
        self._remember()
        self.emit(proposer, "CHANNEL_UPDATE", self.state.proof)

    # ---------------------------------------------------------------- session

    def _initiate(self) -> None:
        s = self.cfg["session"]
        try:
            self.session, self.m_a1 = initiate(
                self.state,
                self.keys["alice"],
                s["amount"],
                s["collateral_payer"],
                s["collateral_payee"],
                s["alternative"],
                bank_a=self.keys["bank_a"].party,
                bank_i=self.keys["bank_i"].party,
                session_id=s["id"],
                now=self.now,
                method=s["method"],
                rate=self.rate,
                deadlines=Deadlines(**s["deadlines"]),
                dispositions=Dispositions(**s["dispositions"]),
            )
        except HybridPayError as e:
            self.emit("alice", "SESSION_REFUSED", note=type(e).__name__)
            self._schedule_close(self.now + 1)
            return
        self.emit("alice", "M_A1", self.m_a1)
        try:
            sources = [self.directory.party(n) for n in s["registered_sources"]]
            self.registration = propose_registration(self.session, self.keys["alice"], sources)
        except HybridPayError as e:
            self.emit("alice", "REGISTRATION_REFUSED", note=type(e).__name__)
        self.schedule(self.now + LATENCY, "ingrid", self._on_proposal, self.m_a1, self.registration)
        self._arm_timer()

    def _arm_timer(self) -> None:
        if self.session is None or self.session.terminal:
            return
        deadline = self.session.next_deadline(self.state)
        if deadline is not None:
            self.schedule(deadline + 1, "ledger", self._timer)

    def _timer(self) -> None:
        sess = self.session
        if sess is None or sess.terminal:
            return
        deadline = sess.next_deadline(self.state)
        if deadline is None or self.now <= deadline:
            return
        self.session, self.state = on_timeout(sess, self.state, self.now, self.directory)
        self._remember()
        self.emit("ledger", "TIMEOUT", note=self.session.phase.value)
        self._after_change()

    def _after_change(self) -> None:
        if self.session.terminal and not self.terminal_handled:
            self.terminal_handled = True
            self.schedule(self.now + self.session.deadlines.t_transfer_max, "monitor", self._monitor)
        else:
            self._arm_timer()

    def _on_proposal(self, m_a1: SignedMessage, registration: SignedMessage | None) -> None:
        if self.adversary["ingrid"] == "REJECT":
            self.emit("ingrid", "PROPOSAL_DECLINED")
            return
        view = session_from_proposal(m_a1, self.session.proposed_at)
        try:
            sess, m_a1i1, self.state = accept(view, m_a1, self.state, self.keys["ingrid"], self.directory, self.now)
        except HybridPayError as e:
            self.emit("ingrid", "ACCEPT_FAILED", note=type(e).__name__)
            return
        self.session = sess
        self._remember()
        self.emit("ingrid", "M_A1I1", m_a1i1)
        if registration is not None:
            reg = sign(self.keys["ingrid"], registration)
            try:
                self.session = register_sources(self.session, reg, self.directory)
                self.registration = reg
                self.emit("ingrid", "REGISTRATION", reg)
            except HybridPayError as e:
                self.emit("ingrid", "REGISTRATION_REFUSED", reg, note=type(e).__name__)
        self.schedule(self.now + LATENCY, "alice", self._on_acceptance, m_a1i1)
        self._arm_timer()

    def _on_acceptance(self, m_a1i1: SignedMessage) -> None:
        strategy = self.adversary["alice"]
        s = self.cfg["session"]
        if strategy == "WITHHOLD_ORDER":
            self.emit("alice", "ORDER_WITHHELD")
            return
        if strategy == "FORGE_CERT":
            forged = self._forged_certificate()
            self.emit("alice", "FORGED", forged)
            self.schedule(self.now + LATENCY, "ingrid", self._participant_receive, "ingrid", forged)
            return
        auth = m_a1i1
        if strategy == "FORGE_ORDER":
            body = dict(m_a1i1.body)
            body["fiat_amount"] = body["fiat_amount"] * 2
            auth = replace(m_a1i1, body=body)
        order = submit_to_bank(self.session, auth, self.now, irreversible_after=s["irreversible_after"])
        if strategy == "FORGE_ORDER":
            order = replace(order, amount=order.amount + order.amount)
        self.order = order
        self.emit("alice", "ORDER", auth)
        self.schedule(self.now + LATENCY, "bank_a", self._bank_receive_order, order)

    def _forged_certificate(self) -> SignedMessage:
        bank = self.keys["bank_a"].party
        body = {
            "ref": self.session.order_ref,
            "assertion": "transfer-triggered",
            "order": f"{self.session.session_id}/order",
            "amount": self.session.fiat_amount.amount,
            "issued_at": self.now,
        }
        kind = Kind.CERT1
        msg = new_message(kind, self.session.session_id, self.state.channel_id, (bank,), body)
        junk = hashlib.sha512(canonical_serialize(msg) + b"forged").digest()
        return replace(msg, signatures=(Signature(bank.name, junk),))

    def _participant_receive(self, who: str, msg: SignedMessage) -> None:
        key = (who, digest_hex(msg))
        if key in self.seen:
            return
        self.seen.add(key)
        self.inbox[who].append(msg)
        if (
            who == "alice"
            and self.adversary["alice"] == "RECALL"
            and msg.kind is Kind.CERT1
            and self.order is not None
        ):
            self.schedule(self.now + LATENCY, "bank_a", self._recall)
        if self.session is None or any(k[1] == key[1] for k in self.seen if k != key):
            return
        try:
            self.session, self.state = accept_certificate(self.session, self.state, msg, self.directory, self.now)
        except HybridPayError as e:
            self.emit(who, "MESSAGE_REJECTED", msg, note=type(e).__name__)
            return
        self._remember()
        self.emit(who, msg.kind.value, msg)
        self._after_change()

    # ---------------------------------------------------------------- banks

    def _route(self, bank: str, effects: list) -> None:
        for eff in effects:
            if isinstance(eff, Emit):
                self.emit(bank, eff.message.kind.value, eff.message)
                for to in eff.to:
                    if to in self.banks:
                        self.schedule(self.now + LATENCY, to, self._bank_receive_message, to, eff.message)
                    else:
                        self.schedule(self.now + LATENCY, to, self._participant_receive, to, eff.message)
            elif isinstance(eff, Deliver):
                self.schedule(eff.at, eff.to_bank, self._bank_receive_delivery, eff.order)

    def _bank_receive_order(self, order) -> None:
        bank = self.banks["bank_a"]
        bank.receive(self.now, order=order)
        self.schedule(self.now + bank.delay, "bank_a", self._bank_process_order, order)

    def _bank_process_order(self, order) -> None:
        bank = self.banks["bank_a"]
        try:
            effects = process_order(bank, order, self.now, self.directory)
        except (InsufficientFiat, UnknownCustomer) as e:
            self.emit("bank_a", "ORDER_REFUSED", note=type(e).__name__)
            return
        if not effects:
            last = bank.entries(order.session_ref, "order_refused")
            self.emit("bank_a", "ORDER_REFUSED" if last else "ORDER_DROPPED",
                      note=last[-1].get("reason") if last else "")
            return
        if any(isinstance(e, Deliver) for e in effects):
            self.emit("bank_a", "TRANSFER_SENT", note=order.order_id)
        self._route("bank_a", effects)

    def _bank_receive_message(self, name: str, msg: SignedMessage) -> None:
        bank = self.banks[name]
        bank.receive(self.now, message=msg)
        if name == "bank_i" and msg.kind is Kind.M_A1I1BA1:
            self.schedule(self.now + bank.delay, name, self._relay, msg, self.now)
        elif name == "bank_a" and msg.kind is Kind.M_A1I1BA1BI1:
            self.schedule(self.now + bank.delay, name, self._execute, msg, self.now)

    def _relay(self, msg: SignedMessage, received: int) -> None:
        out = relay_alternative2(self.banks["bank_i"], msg, self.now, self.directory, received)
        if out is None:
            self.emit("bank_i", "RELAY_DROPPED")
            return
        self._route("bank_i", [Emit(out, ("bank_a", "alice", "ingrid"))])

    def _execute(self, msg: SignedMessage, received: int) -> None:
        try:
            effects = execute_agreed(self.banks["bank_a"], msg, self.now, self.directory, received)
        except InsufficientFiat as e:
            self.emit("bank_a", "ORDER_REFUSED", note=type(e).__name__)
            return
        if effects:
            self.emit("bank_a", "TRANSFER_SENT", note=effects[0].order.order_id)
            self._route("bank_a", effects)
        else:
            self.emit("bank_a", "EXECUTION_SKIPPED")

    def _bank_receive_delivery(self, order) -> None:
        bank = self.banks["bank_i"]
        bank.receive(self.now, order=order)
        self.schedule(self.now + bank.delay, "bank_i", self._book_delivery, order, self.now)

    def _book_delivery(self, order, arrived: int) -> None:
        try:
            effects = receive_delivery(self.banks["bank_i"], self.banks["bank_a"], order, self.now, arrived)
        except UnknownCustomer as e:
            self.emit("bank_i", "DELIVERY_SUSPENDED", note=type(e).__name__)
            return
        self.emit("bank_i", "TRANSFER_BOOKED", note=order.order_id)
        self._route("bank_i", effects)

    def _recall(self) -> None:
        try:
            request_reversal(self.banks["bank_a"], self.banks["bank_i"], self.order, self.now)
        except ReversalRefused as e:
            self.emit("bank_a", "RECALL_REFUSED", note=str(e))
            return
        self.emit("bank_a", "RECALLED", note=self.order.order_id)

    # ---------------------------------------------------------------- disputes

    def _fiat(self) -> dict[str, int]:
        return {
            "alice": self.banks["bank_a"].accounts.get("alice", fiat(0)).amount,
            "ingrid": self.banks["bank_i"].accounts.get("ingrid", fiat(0)).amount,
        }

    def _losses(self) -> dict[str, int]:
        """Unremedied shortfall each honest participant can read off their statements."""
        terms = self.session.acceptance.body
        ref = self.session.order_ref
        bank_a, bank_i = self.banks["bank_a"], self.banks["bank_i"]
        debited = bool(bank_a.entries(ref, "debit")) and not bank_a.entries(ref, "reversed")
        credited = bool(bank_i.entries(ref, "credit") or bank_i.entries(ref, "recouped")) \
            and not bank_i.entries(ref, "reversed")
        loss = shortfalls(terms, self.session.outcome.value, debited, credited, self.rate)
        out = {}
        for who, role in (("ingrid", terms["payee"]), ("alice", terms["payer"])):
            paid = sum(e.get("amount") for b in self.banks.values() for e in b.entries(ref, "remedy_paid")
                       if e.get("to") == role)
            if self.adversary[who] == "HONEST" and loss[role] > paid and self.claimed.get(who) != loss[role]:
                out[who] = loss[role]
        return out

    def _monitor(self) -> None:
        filers: list[str] = []
        if self.session.acceptance is not None:
            self.watching = True
            losses = self._losses()
            filers = list(losses)
            self.claimed.update(losses)
            if self.adversary["ingrid"] == "FALSE_CLAIM" and "ingrid" not in filers:
                filers.append("ingrid")
            if self.cfg["disputes"]["always"] and not filers:
                filers.append("ingrid" if self._has_bank_evidence("ingrid") else "alice")
        for i, who in enumerate(filers):
            self.schedule(self.now + i, who, self._file, who)
        self._schedule_close(self.now + len(filers) + 2)

    def _wake(self) -> None:
        at = self.now + LATENCY
        if self.watching and at not in self.rechecks:
            self.rechecks.add(at)
            self.schedule(at, "monitor", self._recheck)

    def _recheck(self) -> None:
        losses = self._losses()
        self.claimed.update(losses)
        filers = list(losses)
        if self.cfg["disputes"]["always"] and not filers:
            filers.append("ingrid" if self._has_bank_evidence("ingrid") else "alice")
        for i, who in enumerate(filers):
            self.schedule(self.now + i, who, self._file, who)

    def _has_bank_evidence(self, who: str) -> bool:
        return any(m.kind in (Kind.CERT1, Kind.CERT2, Kind.M_A1I1BA1, Kind.M_A1I1BA1BI1) for m in self.inbox[who])

    def _file(self, who: str) -> None:
        try:
            self.session, case = raise_dispute(
                self.session, self.keys[who], self.inbox[who], self.directory, self.now
            )
        except HybridPayError as e:
            self.emit(who, "DISPUTE_REFUSED", note=type(e).__name__)
            return
        self.emit(who, "DISPUTE", case.message)
        self.schedule(self.now + LATENCY, "regulator", self._adjudicate, case)

    def _adjudicate(self, case) -> None:
        try:
            verdict = adjudicate(
                case, self.banks["bank_a"], self.banks["bank_i"], self.directory, self.keys["regulator"]
            )
        except Inadmissible as e:
            self.emit("regulator", "CASE_INADMISSIBLE", note=str(e))
            return
        enforce(verdict, self.banks, self.now)
        self.verdicts.append(verdict.body())
        self.emit("regulator", "VERDICT", verdict.message, note=verdict.rationale)

    # ---------------------------------------------------------------- closing

    def _schedule_close(self, at: int) -> None:
        if not self.cfg["channel"]["close"]:
            return
        stale = [p for p in ("alice", "ingrid") if self.adversary[p] == "STALE_CLOSE"]
        first = stale or ["ingrid"]
        for p in first:
            self.schedule(at, p, self._close_submit, p)
        for p in ("alice", "ingrid"):
            if p not in stale:
                self.schedule(at + 1, p, self._close_watch, p)

    def _stale_choice(self, who: str) -> ChannelState:
        seen = self.known[who]
        return max(seen, key=lambda s: (s.balance(who).amount, -s.seq))

    def _close_submit(self, who: str = "ingrid") -> None:
        if self.anchor.status == "closed":
            return
        state = self._stale_choice(who) if self.adversary[who] == "STALE_CLOSE" else self.state
        self._submit(who, state)
        if self.closed_at is None:
            self.closed_at = self.anchor.earliest_close()
            self.schedule(self.closed_at, "ledger", self._close_finalize)

    def _submit(self, who: str, state: ChannelState) -> None:
        accepted = self.anchor.dispute(state, self.now)
        proof = state.transition.cause if state.transition is not None else state.proof
        note = f"seq={state.seq} accepted={str(accepted).lower()}"
        self.emit(who, "CLOSE_SUBMIT", proof, note=note)

    def _close_watch(self, who: str) -> None:
        best = self.anchor.best
        if self.anchor.status != "disputed" or best is None:
            return
        if best.seq < self.state.seq or (best.seq == self.state.seq and best is not self.state
                                         and self.state.descends_from(best)):
            self._submit(who, self.state)
            self.closed_at = max(self.closed_at or 0, self.anchor.earliest_close())
            self.schedule(self.closed_at, "ledger", self._close_finalize)

    def _close_finalize(self) -> None:
        if self.anchor.status == "closed" or self.now < (self.closed_at or 0):
            return
        self.anchor.close(self.now)
        self.state = self.anchor.best
        self.emit("ledger", "CLOSE", note=canonical_json({k: v.amount for k, v in sorted(self.anchor.payout.items())}))

    # ---------------------------------------------------------------- report

    def report(self) -> dict:
        s = self.state
        channel_end = (
            {k: v.amount for k, v in sorted(self.anchor.payout.items())}
            if self.anchor.payout is not None
            else {s.party_a.name: s.balance_a.amount, s.party_i.name: s.balance_i.amount}
        )
        fiat_now = self._fiat()
        fiat0 = {
            "alice": self.cfg["banks"]["bank_a"]["accounts"].get("alice", 0),
            "ingrid": self.cfg["banks"]["bank_i"]["accounts"].get("ingrid", 0),
        }
        sess = self.session
        return {
            "scenario": self.cfg["name"],
            "alternative": None if self.cfg["session"] is None else self.cfg["session"]["alternative"],
            "outcome": None if sess is None or sess.outcome is None else sess.outcome.value,
            "phase": None if sess is None else sess.phase.value,
            "channel": channel_end,
            "channel_closed": self.anchor.status == "closed",
            "fiat": fiat_now,
            "fiat_delta": {k: fiat_now[k] - fiat0[k] for k in fiat_now},
            "verdicts": self.verdicts,
            "deviations": {n: sorted({w for _, _, w in b.deviations}) for n, b in sorted(self.banks.items())},
            "ticks": self.records[-1]["tick"] if self.records else 0,
            "events": len(self.records),
        }


def run(scenario: dict | str, seed: int | None = None, audit: bool = True) -> SimResult:
    """Run a scenario (config mapping or path) and audit its trace."""
    sim = Simulation(_config.load(scenario), seed)
    result = sim.run()
    result.report["violations"] = []
    if audit:
        from .audit import audit_trace

        result.report["violations"] = audit_trace(result.header, result.records, sim.directory)
    return result
