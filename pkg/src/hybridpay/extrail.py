"""Simulated external payment rail: two banks, their ledgers, and a regulator.

Banks are mutable actors driven by the simulator.  Every act a bank takes
is written to its ``journal`` and every message it receives to its
``inbox``; the regulator decides disputes from those records plus the
certificates a claimant presents.  ``deviations`` is the simulator's ground
truth about misbehaviour and is never read by :func:`adjudicate`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Union

from .core import (
    KeyDirectory,
    KeyPair,
    Kind,
    PartyId,
    SignedMessage,
    Unit,
    Value,
    digest_hex,
    fiat,
    new_message,
    sign,
    verify,
)
from .errors import (
    Inadmissible,
    InsufficientFiat,
    ReversalRefused,
    UnknownCustomer,
)

DEFAULT_EQUITY = 1000
DEFAULT_SLOW_DELAY = 3


class BankBehavior(str, enum.Enum):
    HONEST = "HONEST"
    CONFIRM_NO_EXECUTE = "CONFIRM_NO_EXECUTE"
    RECEIVE_NO_CREDIT = "RECEIVE_NO_CREDIT"
    SILENT = "SILENT"
    SLOW = "SLOW"


class Mode(str, enum.Enum):
    PUSH = "push"
    REQUEST_TO_PAY = "request-to-pay"


@dataclass(frozen=True)
class TransferOrder:
    order_id: str
    payer: str
    payee: str
    payer_bank: str
    payee_bank: str
    amount: Value
    session: str
    session_ref: str
    triggered_at: int
    mode: Mode
    irreversible_after: int
    authorization: SignedMessage
    registration: SignedMessage | None = None


@dataclass(frozen=True)
class Emit:
    message: SignedMessage
    to: tuple[str, ...]


@dataclass(frozen=True)
class Deliver:
    order: TransferOrder
    at: int
    to_bank: str


Effect = Union[Emit, Deliver]


@dataclass(frozen=True)
class JournalEntry:
    tick: int
    event: str
    ref: str
    data: tuple[tuple[str, Any], ...] = ()

    def get(self, key: str, default: Any = None) -> Any:
        return dict(self.data).get(key, default)


@dataclass(frozen=True)
class InboxEntry:
    tick: int
    message: SignedMessage | None
    order: TransferOrder | None = None


class BankLedger:
    """One bank: customer accounts, equity, suspense and outgoing transfers."""

    def __init__(
        self,
        key: KeyPair,
        accounts: Mapping[str, int],
        equity: int = DEFAULT_EQUITY,
        behavior: BankBehavior | str = BankBehavior.HONEST,
        slow_delay: int = DEFAULT_SLOW_DELAY,
    ):
        self.key = key
        self.accounts: dict[str, Value] = {n: fiat(a) for n, a in sorted(accounts.items())}
        self.equity = fiat(equity)
        self.suspense = fiat(0)
        self.behavior = BankBehavior(behavior)
        self.slow_delay = slow_delay
        self.in_flight: dict[str, TransferOrder] = {}
        self.forwarded: dict[str, TransferOrder] = {}  # alternative 2: awaiting the payee bank
        self.journal: list[JournalEntry] = []
        self.inbox: list[InboxEntry] = []
        self.deviations: list[tuple[int, str, str]] = []

    @property
    def party(self) -> PartyId:
        return self.key.party

    @property
    def name(self) -> str:
        return self.key.party.name

    @property
    def delay(self) -> int:
        return self.slow_delay if self.behavior is BankBehavior.SLOW else 0

    def holdings(self) -> Value:
        acc = self.equity + self.suspense
        for v in self.accounts.values():
            acc = acc + v
        for o in self.in_flight.values():
            acc = acc + o.amount
        return acc

    def snapshot(self) -> dict:
        return {
            "accounts": {n: v.amount for n, v in self.accounts.items()},
            "equity": self.equity.amount,
            "suspense": self.suspense.amount,
            "in_flight": sorted([o.order_id, o.amount.amount] for o in self.in_flight.values()),
        }

    def record(self, tick: int, event: str, ref: str, **data: Any) -> None:
        self.journal.append(JournalEntry(tick, event, ref, tuple(sorted(data.items()))))

    def deviate(self, tick: int, ref: str, what: str) -> None:
        self.deviations.append((tick, ref, what))

    def entries(self, ref: str, event: str | None = None) -> list[JournalEntry]:
        return [e for e in self.journal if e.ref == ref and (event is None or e.event == event)]

    def receive(self, tick: int, message: SignedMessage | None = None, order: TransferOrder | None = None) -> None:
        self.inbox.append(InboxEntry(tick, message, order))

    def _customer(self, name: str) -> Value:
        if name not in self.accounts:
            raise UnknownCustomer(f"{name} has no account at {self.name}")
        return self.accounts[name]


def _terms(authorization: SignedMessage) -> Mapping[str, Any]:
    return authorization.body


def _receipt_based(terms: Mapping[str, Any]) -> bool:
    return terms.get("alternative") in ("ALT1_DESIGN2", "ALT2_RECEIPT")


def _bank_chain(terms: Mapping[str, Any]) -> bool:
    return terms.get("alternative") in ("ALT2", "ALT2_RECEIPT")


def _certificate(bank: BankLedger, kind: Kind, order: TransferOrder, assertion: str, now: int) -> SignedMessage:
    body = {
        "ref": order.session_ref,
        "assertion": assertion,
        "order": order.order_id,
        "amount": order.amount.amount,
        "issued_at": now,
    }
    msg = new_message(kind, order.session, order.authorization.channel, (bank.party,), body)
    return sign(bank.key, msg)


def order_defect(bank: BankLedger, order: TransferOrder, directory: KeyDirectory) -> str | None:
    """Why ``bank`` may legitimately refuse ``order``; None if it is valid."""
    auth = order.authorization
    if auth.kind is not Kind.M_A1I1 or not verify(auth, directory):
        return "authorization_invalid"
    if digest_hex(auth) != order.session_ref or auth.session != order.session:
        return "reference_mismatch"
    t = _terms(auth)
    if (t.get("bank_a"), t.get("payer"), t.get("payee"), t.get("bank_i")) != (
        bank.name, order.payer, order.payee, order.payee_bank,
    ) or t.get("fiat_amount") != order.amount.amount:
        return "terms_mismatch"
    reg = order.registration
    if reg is None or reg.kind is not Kind.REGISTRATION or reg.session != order.session or not verify(reg, directory):
        return "not_registered"
    if {s.signer for s in reg.signatures} != {order.payer, order.payee}:
        return "not_registered"
    if bank.name not in {n for n, _ in reg.body.get("sources", [])}:
        return "not_registered"
    return None


def _late(bank: BankLedger, order_ref: str, received: int, now: int, terms: Mapping[str, Any]) -> None:
    if now - received > terms["deadlines"]["t_actual_transfer"]:
        bank.deviate(now, order_ref, "late")


def _received_at(bank: BankLedger, ref: str, default: int) -> int:
    for e in bank.inbox:
        if e.order is not None and e.order.session_ref == ref:
            return e.tick
    return default


def _debit_and_send(bank: BankLedger, order: TransferOrder, now: int) -> list[Effect]:
    bal = bank.accounts[order.payer]
    if bal.amount < order.amount.amount:
        bank.record(now, "order_refused", order.session_ref, reason="insufficient_funds")
        raise InsufficientFiat(f"{order.payer} holds {bal.amount}, order needs {order.amount.amount}")
    bank.accounts[order.payer] = bal - order.amount
    bank.in_flight[order.order_id] = order
    bank.record(now, "debit", order.session_ref, account=order.payer, amount=order.amount.amount)
    bank.record(now, "sent", order.session_ref, to=order.payee_bank, order=order.order_id)
    return [Deliver(order, now + 1, order.payee_bank)]


def process_order(bank: BankLedger, order: TransferOrder, now: int, directory: KeyDirectory) -> list[Effect]:
    """The payer's bank handles a submitted order.

    Alternative 1: debit, issue Cert1 to both participants and send the
    value.  Alternative 2: countersign the chain and forward it to the
    payee's bank; execution waits for that bank's agreement.
    """
    ref = order.session_ref
    received = _received_at(bank, ref, now)
    defect = order_defect(bank, order, directory)
    if defect is not None:
        bank.record(now, "order_refused", ref, reason=defect)
        return []
    if order.payer not in bank.accounts:
        bank.record(now, "order_refused", ref, reason="unknown_customer")
        raise UnknownCustomer(f"{order.payer} has no account at {bank.name}")
    terms = _terms(order.authorization)
    if bank.behavior is BankBehavior.SILENT:
        bank.deviate(now, ref, "order_ignored")
        return []
    _late(bank, ref, received, now, terms)
    parties = (order.payer, order.payee)

    if _bank_chain(terms):
        if bank.accounts[order.payer].amount < order.amount.amount:
            bank.record(now, "order_refused", ref, reason="insufficient_funds")
            raise InsufficientFiat(f"{order.payer} cannot cover {order.amount.amount}")
        forwarded = sign(bank.key, order.authorization)
        bank.forwarded[ref] = order
        bank.record(now, "forwarded", ref, to=order.payee_bank)
        return [Emit(forwarded, (order.payee_bank,) + parties)]

    if bank.behavior is BankBehavior.CONFIRM_NO_EXECUTE:
        if bank.accounts[order.payer].amount < order.amount.amount:
            bank.record(now, "order_refused", ref, reason="insufficient_funds")
            raise InsufficientFiat(f"{order.payer} cannot cover {order.amount.amount}")
        cert1 = _certificate(bank, Kind.CERT1, order, "transfer-triggered", now)
        bank.record(now, "cert1", ref)
        bank.deviate(now, ref, "confirmed_not_executed")
        return [Emit(cert1, parties)]
    effects = _debit_and_send(bank, order, now)
    cert1 = _certificate(bank, Kind.CERT1, order, "transfer-triggered", now)
    bank.record(now, "cert1", ref)
    return [Emit(cert1, parties)] + effects


def relay_alternative2(
    bank_i: BankLedger, chain: SignedMessage, now: int, directory: KeyDirectory, received: int | None = None
) -> SignedMessage | None:
    """The payee's bank agrees to a forwarded transfer by countersigning it.

    Returns None when the bank refuses (invalid chain) or stays silent.
    """
    ref = digest_hex(chain.prefix(2)) if len(chain.signatures) >= 2 else ""
    if (
        chain.kind is not Kind.M_A1I1BA1
        or not verify(chain, directory)
        or chain.next_signer is None
        or chain.next_signer.name != bank_i.name
    ):
        bank_i.record(now, "relay_refused", ref, reason="chain_invalid")
        return None
    terms = chain.body
    if terms.get("payee") not in bank_i.accounts:
        bank_i.record(now, "relay_refused", ref, reason="unknown_customer")
        return None
    if bank_i.behavior is BankBehavior.SILENT:
        bank_i.deviate(now, ref, "relay_ignored")
        return None
    _late(bank_i, ref, now if received is None else received, now, terms)
    bank_i.record(now, "agreed", ref)
    return sign(bank_i.key, chain)


def execute_agreed(
    bank_a: BankLedger, chain: SignedMessage, now: int, directory: KeyDirectory, received: int | None = None
) -> list[Effect]:
    """The payer's bank executes a transfer both banks have signed off on."""
    if chain.kind is not Kind.M_A1I1BA1BI1 or not verify(chain, directory):
        return []
    ref = digest_hex(chain.prefix(2))
    order = bank_a.forwarded.pop(ref, None)
    if order is None:
        return []
    _late(bank_a, ref, now if received is None else received, now, chain.body)
    if bank_a.behavior is BankBehavior.CONFIRM_NO_EXECUTE:
        bank_a.deviate(now, ref, "confirmed_not_executed")
        return []
    return _debit_and_send(bank_a, order, now)


def receive_delivery(
    receiver: BankLedger, sender: BankLedger, order: TransferOrder, now: int, arrived: int | None = None
) -> list[Effect]:
    """Book an inter-bank delivery at the payee's bank."""
    ref = order.session_ref
    arrived = now if arrived is None else arrived
    sender.in_flight.pop(order.order_id)
    sender.record(arrived, "delivered", ref, order=order.order_id)
    receiver.record(now, "received", ref, order=order.order_id, amount=order.amount.amount, arrived=arrived)
    terms = _terms(order.authorization)
    if order.payee not in receiver.accounts:
        receiver.suspense = receiver.suspense + order.amount
        receiver.record(now, "suspense", ref, reason="unknown_customer")
        raise UnknownCustomer(f"{order.payee} has no account at {receiver.name}")
    parties = (order.payer, order.payee)
    behavior = receiver.behavior
    if behavior in (BankBehavior.RECEIVE_NO_CREDIT, BankBehavior.SILENT, BankBehavior.CONFIRM_NO_EXECUTE):
        receiver.suspense = receiver.suspense + order.amount
        receiver.record(now, "suspense", ref, reason="held")
        receiver.deviate(now, ref, "received_not_credited")
        if behavior is BankBehavior.CONFIRM_NO_EXECUTE and _receipt_based(terms):
            receiver.record(now, "cert2", ref)
            return [Emit(_certificate(receiver, Kind.CERT2, order, "receipt-confirmed", now), parties)]
        return []
    _late(receiver, ref, arrived, now, terms)
    remedied = sum(e.get("amount", 0) for e in receiver.entries(ref, "remedy_paid") if e.get("to") == order.payee)
    if remedied >= order.amount.amount:
        # the payee was already made whole out of equity; the late value restores it
        receiver.equity = receiver.equity + order.amount
        receiver.record(now, "recouped", ref, amount=order.amount.amount)
    else:
        receiver.accounts[order.payee] = receiver.accounts[order.payee] + order.amount
        receiver.record(now, "credit", ref, account=order.payee, amount=order.amount.amount)
    if _receipt_based(terms):
        receiver.record(now, "cert2", ref)
        return [Emit(_certificate(receiver, Kind.CERT2, order, "receipt-confirmed", now), parties)]
    return []


def request_reversal(sender: BankLedger, receiver: BankLedger, order: TransferOrder, now: int) -> None:
    """Payer asks her bank to recall a transfer.

    Request-to-pay transfers are never reversible; pushed transfers only
    within ``irreversible_after`` ticks of being triggered.
    """
    ref = order.session_ref
    sender.record(now, "recall_requested", ref)
    if order.mode is Mode.REQUEST_TO_PAY or now > order.triggered_at + order.irreversible_after:
        sender.record(now, "recall_refused", ref)
        raise ReversalRefused(f"order {order.order_id} is irreversible at {now}")
    if order.order_id in sender.in_flight:
        sender.in_flight.pop(order.order_id)
        sender.accounts[order.payer] = sender.accounts[order.payer] + order.amount
        sender.record(now, "reversed", ref, stage="in_flight")
        return
    credited = receiver.entries(ref, "credit")
    if not sender.entries(ref, "debit") or not credited:
        sender.record(now, "recall_refused", ref)
        raise ReversalRefused(f"order {order.order_id} has nothing to reverse")
    payee_bal = receiver.accounts[order.payee]
    if payee_bal.amount < order.amount.amount:
        sender.record(now, "recall_refused", ref)
        raise ReversalRefused(f"{order.payee} no longer holds {order.amount.amount}")
    receiver.accounts[order.payee] = payee_bal - order.amount
    receiver.record(now, "reversed", ref, account=order.payee, amount=order.amount.amount)
    sender.accounts[order.payer] = sender.accounts[order.payer] + order.amount
    sender.record(now, "reversed", ref, account=order.payer, amount=order.amount.amount)


# --------------------------------------------------------------------------
# regulator

@dataclass(frozen=True)
class DisputeCase:
    claimant: PartyId
    claim: str
    session: str
    session_ref: str | None
    evidence: tuple[SignedMessage, ...]
    message: SignedMessage
    outcome: str | None = None


@dataclass(frozen=True)
class Remedy:
    debtor: str
    beneficiary: str
    bank: str
    amount: Value


@dataclass(frozen=True)
class Verdict:
    session: str
    session_ref: str | None
    culprits: tuple[str, ...]
    faults: tuple[tuple[str, str], ...]
    remedies: tuple[Remedy, ...]
    rationale: str
    message: SignedMessage | None = field(default=None, compare=False)

    @property
    def culprit(self) -> str | None:
        return self.culprits[0] if self.culprits else None

    def body(self) -> dict:
        return {
            "session": self.session,
            "ref": self.session_ref,
            "culprits": list(self.culprits),
            "faults": [list(f) for f in self.faults],
            "remedies": [[r.debtor, r.beneficiary, r.bank, r.amount.amount] for r in self.remedies],
            "rationale": self.rationale,
        }


def _authorization(case: DisputeCase, directory: KeyDirectory) -> SignedMessage | None:
    for m in case.evidence:
        if m.kind is Kind.M_A1I1 and verify(m, directory) and digest_hex(m) == case.session_ref:
            return m
    return None


def _bank_evidence(case: DisputeCase, directory: KeyDirectory) -> list[SignedMessage]:
    out = []
    for m in case.evidence:
        if m.session != case.session or not verify(m, directory):
            continue
        if m.kind in (Kind.CERT1, Kind.CERT2) and m.body.get("ref") == case.session_ref:
            out.append(m)
        elif m.kind in (Kind.M_A1I1BA1, Kind.M_A1I1BA1BI1) and digest_hex(m.prefix(2)) == case.session_ref:
            out.append(m)
    return out


def _inbox_has(bank: BankLedger, ref: str, kind: Kind) -> bool:
    for e in bank.inbox:
        if kind is Kind.M_A1I1 and e.order is not None and e.order.session_ref == ref:
            return True
        m = e.message
        if m is not None and m.kind is kind and len(m.signatures) >= 2 and digest_hex(m.prefix(2)) == ref:
            return True
    return False


def _order_in_inbox(bank: BankLedger, ref: str) -> TransferOrder | None:
    for e in bank.inbox:
        if e.order is not None and e.order.session_ref == ref:
            return e.order
    return None


def _arrivals(bank: BankLedger, ref: str, kind: Kind | None = None) -> list[int]:
    """Ticks at which ``bank`` received the order (``kind`` None) or a chained message for ``ref``."""
    out = []
    for e in bank.inbox:
        if kind is None and e.order is not None and e.order.session_ref == ref:
            out.append(e.tick)
        elif kind is not None and e.message is not None and e.message.kind is kind \
                and len(e.message.signatures) >= 2 and digest_hex(e.message.prefix(2)) == ref:
            out.append(e.tick)
    return out


def _first_tick(bank: BankLedger, ref: str, *events: str) -> int | None:
    ticks = [e.tick for e in bank.journal if e.ref == ref and e.event in events]
    return min(ticks) if ticks else None


def _overdue(arrived: list[int], done: int | None, now: int, t_actual: int) -> bool:
    if not arrived:
        return False
    return (now if done is None else done) - arrived[0] > t_actual


def _faults(
    terms: Mapping[str, Any], ref: str, bank_a: BankLedger, bank_i: BankLedger,
    certs: Iterable[SignedMessage], directory: KeyDirectory, now: int,
) -> list[tuple[str, str]]:
    kinds = {m.kind for m in certs}
    t_actual = terms["deadlines"]["t_actual_transfer"]
    faults: list[tuple[str, str]] = []
    a, i = bank_a.name, bank_i.name

    order = _order_in_inbox(bank_a, ref)
    order_ok = order is not None and order_defect(bank_a, order, directory) is None
    refused = bool(bank_a.entries(ref, "order_refused"))
    debited = bool(bank_a.entries(ref, "debit"))
    order_in = _arrivals(bank_a, ref)

    if _bank_chain(terms):
        a_committed = Kind.M_A1I1BA1BI1 in kinds or _inbox_has(bank_a, ref, Kind.M_A1I1BA1BI1)
        if order_ok and not refused and not bank_a.entries(ref, "forwarded"):
            faults.append((a, "order_ignored"))
        if a_committed and not debited:
            faults.append((a, "confirmed_not_executed"))
        relay_seen = _inbox_has(bank_i, ref, Kind.M_A1I1BA1)
        if relay_seen and not bank_i.entries(ref, "agreed") and not bank_i.entries(ref, "relay_refused"):
            faults.append((i, "relay_ignored"))
        # lateness against the agreed processing time
        agreed_in = _arrivals(bank_a, ref, Kind.M_A1I1BA1BI1)
        if debited and _overdue(agreed_in, _first_tick(bank_a, ref, "debit"), now, t_actual):
            faults.append((a, "late"))
        relay_in = _arrivals(bank_i, ref, Kind.M_A1I1BA1)
        if _overdue(relay_in, _first_tick(bank_i, ref, "agreed", "relay_refused"), now, t_actual):
            faults.append((i, "late"))
        acted = _first_tick(bank_a, ref, "forwarded", "order_refused")
    else:
        a_committed = Kind.CERT1 in kinds or bool(bank_a.entries(ref, "cert1"))
        if order_ok and not refused and not a_committed:
            faults.append((a, "order_ignored"))
        if a_committed and not debited:
            faults.append((a, "confirmed_not_executed"))
        acted = _first_tick(bank_a, ref, "cert1", "order_refused")
    if acted is not None and _overdue(order_in, acted, now, t_actual):
        faults.append((a, "late"))

    made_whole = bank_i.entries(ref, "credit") or bank_i.entries(ref, "recouped")
    if bank_i.entries(ref, "received") and not made_whole:
        if not any(e.get("reason") == "unknown_customer" for e in bank_i.entries(ref, "suspense")):
            faults.append((i, "received_not_credited"))
    # a delivery that reached the payee's bank but sat unbooked past the deadline
    delivered = _arrivals(bank_i, ref)
    if _overdue(delivered, _first_tick(bank_i, ref, "credit", "recouped", "suspense", "received"), now, t_actual):
        faults.append((i, "late"))
    out: list[tuple[str, str]] = []
    for f in faults:
        if f[0] not in {b for b, _ in out}:
            out.append(f)
    return out


def shortfalls(
    terms: Mapping[str, Any], outcome: str | None, payer_debited: bool, payee_credited: bool, rate: int
) -> dict[str, int]:
    """Fiat-equivalent loss of each participant against a completed exchange."""
    payer, payee = terms["payer"], terms["payee"]
    amount, c_a, c_i = terms["amount"], terms["collateral_payer"], terms["collateral_payee"]
    disp = terms["dispositions"]
    ch = {payer: 0, payee: 0}
    if outcome in ("SETTLED", "SETTLED_WITH_COMPENSATION"):
        ch[payer] += amount
        ch[payee] -= amount
        if outcome == "SETTLED_WITH_COMPENSATION" and disp["payee_collateral_on_compensation"] == "payer":
            ch[payer] += c_i
            ch[payee] -= c_i
    elif outcome == "REVERTED" and disp["payer_collateral_on_revert"] == "payee":
        ch[payer] -= c_a
        ch[payee] += c_a
    fi = {payer: -terms["fiat_amount"] if payer_debited else 0, payee: terms["fiat_amount"] if payee_credited else 0}
    return {p: max(0, -(ch[p] * rate + fi[p])) for p in (payer, payee)}


def adjudicate(
    case: DisputeCase,
    bank_a: BankLedger,
    bank_i: BankLedger,
    directory: KeyDirectory,
    regulator_key: KeyPair | None = None,
) -> Verdict:
    """Decide which bank, if any, misbehaved in the session behind ``case``.

    Pure with respect to its inputs: it reads the presented certificates
    and the two banks' journals and inboxes, and mutates nothing.
    """
    if not verify(case.message, directory) or case.message.kind is not Kind.DISPUTE:
        raise Inadmissible("dispute filing does not verify")
    auth = _authorization(case, directory)
    if auth is None:
        raise Inadmissible("no countersigned order for the referenced session")
    certs = _bank_evidence(case, directory)
    terms = auth.body
    if not certs and not (case.claim == "order_not_executed" and case.claimant.name == terms["payer"]):
        raise Inadmissible("no verifying bank certificate")
    if (terms["bank_a"], terms["bank_i"]) != (bank_a.name, bank_i.name):
        raise Inadmissible("ledgers do not belong to the banks named in the order")
    ref = case.session_ref
    faults = _faults(terms, ref, bank_a, bank_i, certs, directory, case.message.body.get("filed_at", 0))
    culprits = tuple(dict.fromkeys(b for b, _ in faults))

    debited = bool(bank_a.entries(ref, "debit")) and not bank_a.entries(ref, "reversed")
    credited = bool(bank_i.entries(ref, "credit") or bank_i.entries(ref, "recouped")) and not bank_i.entries(
        ref, "reversed"
    )
    rate = terms["fiat_amount"] // terms["amount"] if terms["amount"] else 1
    remedies: list[Remedy] = []
    if culprits:
        home = {terms["payer"]: bank_a.name, terms["payee"]: bank_i.name}
        for party, loss in shortfalls(terms, case.outcome, debited, credited, rate).items():
            if loss:
                remedies.append(Remedy(culprits[0], party, home[party], fiat(loss)))
        rationale = faults[0][1]
    else:
        rationale = "completed" if credited else "no_fault"
    verdict = Verdict(case.session, ref, culprits, tuple(faults), tuple(remedies), rationale)
    if regulator_key is not None:
        msg = new_message(Kind.VERDICT, case.session, case.message.channel, (regulator_key.party,), verdict.body())
        verdict = Verdict(verdict.session, ref, culprits, verdict.faults, verdict.remedies, rationale,
                          sign(regulator_key, msg))
    return verdict


def enforce(verdict: Verdict, banks: Mapping[str, BankLedger], now: int) -> list[Remedy]:
    """Move remedy amounts from culprit equity to the wronged customers.

    A remedy is a target, not an increment: whatever was already paid to
    the same beneficiary for the same session is deducted, so repeating a
    verdict pays nothing and a larger later verdict pays only the rest.
    """
    applied = []
    ref = verdict.session_ref or ""
    for r in verdict.remedies:
        debtor, home = banks[r.debtor], banks[r.bank]
        paid = sum(e.get("amount") for b in banks.values() for e in b.entries(ref, "remedy_paid")
                   if e.get("to") == r.beneficiary)
        owed = r.amount.amount - paid
        if owed <= 0:
            continue
        amount = fiat(owed)
        debtor.equity = debtor.equity - amount
        # a cross-bank remedy settles through the inter-bank rail within the same tick
        home.accounts[r.beneficiary] = home.accounts[r.beneficiary] + amount
        debtor.record(now, "remedy_paid", ref, to=r.beneficiary, amount=owed)
        if home is not debtor:
            home.record(now, "remedy_received", ref, account=r.beneficiary, amount=owed)
        applied.append(Remedy(r.debtor, r.beneficiary, r.bank, amount))
    return applied


def fiat_total(banks: Iterable[BankLedger]) -> Value:
    acc = Value(0, Unit.FIAT)
    for b in banks:
        acc = acc + b.holdings()
    return acc
