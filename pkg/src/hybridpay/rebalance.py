"""External re-balancing sessions.

The payer (Alice) pays the payee (Ingrid) outside the channel; in exchange
the channel is re-balanced by the same amount toward the payer.  A session
is a pure state machine: every operation takes the current
:class:`RebalanceSession` and :class:`~hybridpay.channel.ChannelState` and
returns updated copies.

Phase graph::

    PROPOSED ──m_A1I1──▶ ACCEPTED_LOCKED ──Cert1──▶ SETTLED (alt 1, design 1)
        │                    │  │   └───Cert1──▶ AWAITING_RECEIPT (alt 1, design 2)
        │ expiry             │  └─m_A1I1BA1──▶ TRANSFER_TRIGGERED
        ▼                    │                     │ m_A1I1BA1BI1
    REJECTED                 │ timeout             ▼
                             ▼             SETTLED | AWAITING_RECEIPT
                          REVERTED
    AWAITING_RECEIPT ──Cert2──▶ SETTLED
    AWAITING_RECEIPT ──t_transfer_max──▶ SETTLED_WITH_COMPENSATION
    terminal ──dispute──▶ DISPUTED
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable

from .channel import (
    NEVER,
    TIMEOUT,
    CertificateFrom,
    ChannelState,
    CounterpartySigned,
    Disposition,
    Lock,
    apply_lock_transition,
    lock_funds,
    state_digest,
)
from .core import (
    KeyDirectory,
    KeyPair,
    Kind,
    PartyId,
    Role,
    SignedMessage,
    Value,
    channel,
    digest_hex,
    fiat,
    new_message,
    sign,
    verify,
)
from .errors import (
    AmountExceedsBalance,
    BadSignature,
    InsufficientEvidence,
    InvalidRole,
    NoDeadlinePending,
    NotCountersigned,
    PhaseError,
    SessionAlreadyActive,
    UnregisteredIssuer,
    WrongSession,
)
from .extrail import DisputeCase, Mode, TransferOrder


class Alternative(str, enum.Enum):
    ALT1_DESIGN1 = "ALT1_DESIGN1"
    ALT1_DESIGN2 = "ALT1_DESIGN2"
    ALT2 = "ALT2"
    ALT2_RECEIPT = "ALT2_RECEIPT"

    @property
    def bank_chain(self) -> bool:
        return self in (Alternative.ALT2, Alternative.ALT2_RECEIPT)

    @property
    def receipt_based(self) -> bool:
        return self in (Alternative.ALT1_DESIGN2, Alternative.ALT2_RECEIPT)


class Phase(str, enum.Enum):
    PROPOSED = "PROPOSED"
    ACCEPTED_LOCKED = "ACCEPTED_LOCKED"
    TRANSFER_TRIGGERED = "TRANSFER_TRIGGERED"
    AWAITING_RECEIPT = "AWAITING_RECEIPT"
    SETTLED = "SETTLED"
    SETTLED_WITH_COMPENSATION = "SETTLED_WITH_COMPENSATION"
    REVERTED = "REVERTED"
    REJECTED = "REJECTED"
    DISPUTED = "DISPUTED"


TERMINAL = frozenset({Phase.SETTLED, Phase.SETTLED_WITH_COMPENSATION, Phase.REVERTED, Phase.REJECTED})

PHASE_EDGES: dict[Phase, frozenset[Phase]] = {
    Phase.PROPOSED: frozenset({Phase.ACCEPTED_LOCKED, Phase.REJECTED}),
    Phase.ACCEPTED_LOCKED: frozenset(
        {Phase.SETTLED, Phase.AWAITING_RECEIPT, Phase.TRANSFER_TRIGGERED, Phase.REVERTED}
    ),
    Phase.TRANSFER_TRIGGERED: frozenset({Phase.SETTLED, Phase.AWAITING_RECEIPT, Phase.REVERTED}),
    Phase.AWAITING_RECEIPT: frozenset({Phase.SETTLED, Phase.SETTLED_WITH_COMPENSATION}),
    Phase.SETTLED: frozenset({Phase.DISPUTED}),
    Phase.SETTLED_WITH_COMPENSATION: frozenset({Phase.DISPUTED}),
    Phase.REVERTED: frozenset({Phase.DISPUTED}),
    Phase.REJECTED: frozenset({Phase.DISPUTED}),
    Phase.DISPUTED: frozenset({Phase.DISPUTED}),
}


def legal_transition(old: Phase, new: Phase) -> bool:
    return old == new or new in PHASE_EDGES[old]


@dataclass(frozen=True)
class Deadlines:
    initiation_timeout: int = 20
    t_actual_transfer: int = 5
    t_transfer_max: int = 15


@dataclass(frozen=True)
class Dispositions:
    """Who receives collateral on the failure paths.

    ``payer_collateral_on_revert``: recipient of C_A when an accepted
    session times out.  ``payee_collateral_on_compensation``: recipient of
    C_I when the receipt stage times out after a valid Cert1.
    """

    payer_collateral_on_revert: str = "payee"
    payee_collateral_on_compensation: str = "payer"


@dataclass(frozen=True)
class RebalanceSession:
    session_id: str
    channel_id: str
    payer: PartyId
    payee: PartyId
    bank_a: PartyId
    bank_i: PartyId
    amount: Value
    fiat_amount: Value
    collateral_payer: Value
    collateral_payee: Value
    alternative: Alternative
    method: Mode
    deadlines: Deadlines
    dispositions: Dispositions
    proposed_at: int
    phase: Phase = Phase.PROPOSED
    outcome: Phase | None = None
    registered_sources: frozenset[str] = frozenset()
    transcript: tuple[SignedMessage, ...] = ()
    history: tuple[tuple[int, Phase], ...] = ()
    order_ref: str | None = None  # digest of m_A1I1

    @property
    def proposal(self) -> SignedMessage | None:
        return self._first(Kind.M_A1)

    @property
    def acceptance(self) -> SignedMessage | None:
        return self._first(Kind.M_A1I1)

    @property
    def registration(self) -> SignedMessage | None:
        regs = [m for m in self.transcript if m.kind is Kind.REGISTRATION and m.complete]
        return regs[-1] if regs else None

    def _first(self, kind: Kind) -> SignedMessage | None:
        for m in self.transcript:
            if m.kind is kind:
                return m
        return None

    @property
    def proposal_expiry(self) -> int:
        return self.proposed_at + self.deadlines.initiation_timeout

    @property
    def terminal(self) -> bool:
        return self.outcome is not None

    def lock_ids(self, state: ChannelState) -> list[str]:
        prefix = self.session_id + "/"
        return [l.lock_id for l in state.locks if l.lock_id.startswith(prefix)]

    def next_deadline(self, state: ChannelState) -> int | None:
        """Last tick at which the current phase can still progress without a timeout."""
        if self.phase is Phase.PROPOSED:
            return self.proposal_expiry
        if self.terminal or self.phase is Phase.DISPUTED:
            return None
        timeouts = [state.lock(i).timeout for i in self.lock_ids(state)]
        return min(timeouts) if timeouts else None

    def _advance(self, phase: Phase, now: int, msg: SignedMessage | None = None) -> RebalanceSession:
        if not legal_transition(self.phase, phase):
            raise PhaseError(f"{self.phase.value} -> {phase.value}")
        outcome = phase if phase in TERMINAL else self.outcome
        transcript = self.transcript + ((msg,) if msg is not None else ())
        return replace(self, phase=phase, outcome=outcome, transcript=transcript,
                       history=self.history + ((now, phase),))


# --------------------------------------------------------------------------
# lock tables

def _credits(*pairs: tuple[str, int]) -> tuple[tuple[str, int], ...]:
    merged: dict[str, int] = {}
    for p, a in pairs:
        if a:
            merged[p] = merged.get(p, 0) + a
    return tuple(merged.items())


def build_locks(
    session_id: str,
    payer: str,
    payee: str,
    bank_a: str,
    bank_i: str,
    amount: int,
    collateral_payer: int,
    collateral_payee: int,
    alternative: Alternative,
    deadlines: Deadlines,
    dispositions: Dispositions,
    proposed_at: int,
) -> tuple[Lock, ...]:
    """Locks created when the payee accepts, per alternative and disposition table."""
    who = {"payer": payer, "payee": payee}
    timeout = proposed_at + deadlines.initiation_timeout
    payee_stake = amount + collateral_payee

    settle_payee = Disposition(_credits((payer, amount), (payee, collateral_payee)))
    settle_payer = Disposition(_credits((payer, collateral_payer)))
    revert_payee = Disposition(_credits((payee, payee_stake)))
    revert_payer = Disposition(_credits((who[dispositions.payer_collateral_on_revert], collateral_payer)))

    cert2 = CertificateFrom(frozenset({bank_i}), Kind.CERT2, session_id)
    comp_to = who[dispositions.payee_collateral_on_compensation]
    stage2_payee = Lock(
        f"{session_id}/payee/2", payee, channel(payee_stake), cert2, 0,
        settle_payee, Disposition(_credits((payer, amount), (comp_to, collateral_payee))),
    )
    stage2_payer = None
    if collateral_payer:
        stage2_payer = Lock(
            f"{session_id}/payer/2", payer, channel(collateral_payer), cert2, 0,
            settle_payer, Disposition(_credits((payer, collateral_payer))),
        )

    if alternative.bank_chain:
        trigger = CounterpartySigned(Kind.M_A1I1BA1BI1, session_id)
        reset, reset_window = CounterpartySigned(Kind.M_A1I1BA1, session_id), deadlines.initiation_timeout
    else:
        trigger = CertificateFrom(frozenset({bank_a}), Kind.CERT1, session_id)
        reset, reset_window = NEVER, 0

    if alternative.receipt_based:
        window = deadlines.t_transfer_max
        on_payee = Disposition(relock=(stage2_payee,), relock_window=window)
        on_payer = Disposition(relock=(stage2_payer,), relock_window=window) if stage2_payer else None
    else:
        on_payee, on_payer = settle_payee, settle_payer

    locks = [
        Lock(f"{session_id}/payee", payee, channel(payee_stake), trigger, timeout,
             on_payee, revert_payee, reset, reset_window)
    ]
    if collateral_payer:
        locks.append(
            Lock(f"{session_id}/payer", payer, channel(collateral_payer), trigger, timeout,
                 on_payer, revert_payer, reset, reset_window)
        )
    return tuple(locks)


# --------------------------------------------------------------------------
# operations

def initiate(
    state: ChannelState,
    payer_key: KeyPair,
    amount: Value | int,
    collateral_payer: Value | int = 0,
    collateral_payee: Value | int = 0,
    alternative: Alternative | str = Alternative.ALT1_DESIGN2,
    *,
    bank_a: PartyId,
    bank_i: PartyId,
    session_id: str = "rb-1",
    now: int = 0,
    method: Mode | str = Mode.PUSH,
    rate: int = 1,
    deadlines: Deadlines = Deadlines(),
    dispositions: Dispositions = Dispositions(),
    active: RebalanceSession | None = None,
) -> tuple[RebalanceSession, SignedMessage]:
    """Build and sign the payer's proposal ``m_A1``."""
    amount = amount.amount if isinstance(amount, Value) else amount
    c_a = collateral_payer.amount if isinstance(collateral_payer, Value) else collateral_payer
    c_i = collateral_payee.amount if isinstance(collateral_payee, Value) else collateral_payee
    alternative = Alternative(alternative)
    payer = payer_key.party
    payee = state.counterparty(payer)
    if (active is not None and not active.terminal) or state.locks:
        raise SessionAlreadyActive(f"channel {state.channel_id} already has a re-balancing in progress")
    if amount <= 0:
        raise AmountExceedsBalance("amount must be positive")
    if amount > state.balance(payee.name).amount:
        raise AmountExceedsBalance(
            f"amount {amount} exceeds {payee.name}'s balance {state.balance(payee.name).amount}"
        )
    if c_a < 0 or c_i < 0:
        raise ValueError("collaterals must be non-negative")
    if bank_a.role is not Role.BANK or bank_i.role is not Role.BANK:
        raise InvalidRole("external transfer parties must be banks")
    locks = build_locks(
        session_id, payer.name, payee.name, bank_a.name, bank_i.name,
        amount, c_a, c_i, alternative, deadlines, dispositions, now,
    )
    body = {
        "session": session_id,
        "payer": payer.name,
        "payee": payee.name,
        "bank_a": bank_a.name,
        "bank_i": bank_i.name,
        "amount": amount,
        "fiat_amount": amount * rate,
        "collateral_payer": c_a,
        "collateral_payee": c_i,
        "alternative": alternative.value,
        "method": Mode(method).value,
        "deadlines": {
            "initiation_timeout": deadlines.initiation_timeout,
            "t_actual_transfer": deadlines.t_actual_transfer,
            "t_transfer_max": deadlines.t_transfer_max,
        },
        "dispositions": {
            "payer_collateral_on_revert": dispositions.payer_collateral_on_revert,
            "payee_collateral_on_compensation": dispositions.payee_collateral_on_compensation,
        },
        "proposed_at": now,
        "base": {"seq": state.seq, "digest": state_digest(state)},
        "locks": [l.to_body() for l in locks],
    }
    route = (payer, payee, bank_a, bank_i) if alternative.bank_chain else (payer, payee)
    m_a1 = sign(payer_key, new_message(Kind.M_A1, session_id, state.channel_id, route, body))
    return session_from_proposal(m_a1, now), m_a1


def session_from_proposal(m_a1: SignedMessage, now: int | None = None) -> RebalanceSession:
    """Reconstruct the session terms a proposal describes (the payee's view)."""
    b = m_a1.body
    route = {p.name: p for p in m_a1.signers}
    payer, payee = m_a1.signers[0], m_a1.signers[1]
    bank_a = route.get(b["bank_a"], PartyId(b["bank_a"], Role.BANK))
    bank_i = route.get(b["bank_i"], PartyId(b["bank_i"], Role.BANK))
    at = b["proposed_at"] if now is None else now
    return RebalanceSession(
        session_id=b["session"],
        channel_id=m_a1.channel,
        payer=payer,
        payee=payee,
        bank_a=bank_a,
        bank_i=bank_i,
        amount=channel(b["amount"]),
        fiat_amount=fiat(b["fiat_amount"]),
        collateral_payer=channel(b["collateral_payer"]),
        collateral_payee=channel(b["collateral_payee"]),
        alternative=Alternative(b["alternative"]),
        method=Mode(b["method"]),
        deadlines=Deadlines(**b["deadlines"]),
        dispositions=Dispositions(**b["dispositions"]),
        proposed_at=b["proposed_at"],
        transcript=(m_a1,),
        history=((at, Phase.PROPOSED),),
    )


def accept(
    session: RebalanceSession,
    m_a1: SignedMessage,
    state: ChannelState,
    payee_key: KeyPair,
    directory: KeyDirectory,
    now: int,
) -> tuple[RebalanceSession, SignedMessage, ChannelState]:
    """Payee countersigns ``m_a1``; the countersignature locks the stakes."""
    if session.phase is not Phase.PROPOSED:
        raise PhaseError(f"cannot accept in {session.phase.value}")
    if m_a1.kind is not Kind.M_A1 or not verify(m_a1, directory) or m_a1.session != session.session_id:
        raise BadSignature("m_A1 does not verify")
    if now > session.proposal_expiry:
        raise PhaseError(f"proposal expired at {session.proposal_expiry}")
    m_a1i1 = sign(payee_key, m_a1)
    locked = lock_funds(state, m_a1i1, directory, now)
    session = replace(session, order_ref=digest_hex(m_a1i1))._advance(Phase.ACCEPTED_LOCKED, now, m_a1i1)
    return session, m_a1i1, locked


def propose_registration(
    session: RebalanceSession, key: KeyPair, sources: Iterable[PartyId]
) -> SignedMessage:
    """Half-signed REGISTRATION naming the banks allowed to issue certificates."""
    sources = sorted(sources)
    for s in sources:
        if s.role is not Role.BANK:
            raise InvalidRole(f"{s.name} is a {s.role.value}; only banks issue certificates")
    other = session.payee if key.party == session.payer else session.payer
    body = {"session": session.session_id, "sources": [[s.name, s.role.value] for s in sources]}
    return sign(key, new_message(Kind.REGISTRATION, session.session_id, session.channel_id, (key.party, other), body))


def register_sources(
    session: RebalanceSession, registration: SignedMessage, directory: KeyDirectory
) -> RebalanceSession:
    """Adopt the sources listed in a REGISTRATION both participants signed."""
    if registration.kind is not Kind.REGISTRATION or registration.session != session.session_id:
        raise WrongSession("registration is for another session")
    for name, role in registration.body["sources"]:
        if role != Role.BANK.value or name not in directory or directory.party(name).role is not Role.BANK:
            raise InvalidRole(f"{name} cannot be registered as a certificate source")
    signers = {s.signer for s in registration.signatures}
    if not verify(registration, directory) or signers != {session.payer.name, session.payee.name}:
        raise NotCountersigned("registration lacks a verifying signature from both participants")
    sources = frozenset(name for name, _ in registration.body["sources"])
    return replace(session, registered_sources=sources, transcript=session.transcript + (registration,))


def submit_to_bank(
    session: RebalanceSession,
    m_a1i1: SignedMessage,
    now: int,
    order_id: str | None = None,
    irreversible_after: int = 0,
) -> TransferOrder:
    """Package ``m_a1i1`` as a transfer order for the payer's bank.

    No validation happens here; the bank decides whether to honour it.
    """
    body = m_a1i1.body
    return TransferOrder(
        order_id=order_id or f"{session.session_id}/order",
        payer=session.payer.name,
        payee=session.payee.name,
        payer_bank=session.bank_a.name,
        payee_bank=session.bank_i.name,
        amount=fiat(body.get("fiat_amount", session.fiat_amount.amount)),
        session=session.session_id,
        session_ref=digest_hex(m_a1i1),
        triggered_at=now,
        mode=session.method,
        irreversible_after=0 if session.method is Mode.REQUEST_TO_PAY else irreversible_after,
        authorization=m_a1i1,
        registration=session.registration,
    )


def _session_locks_apply(session, state, trigger, now, directory):
    ids = session.lock_ids(state)
    if not ids:
        raise PhaseError("session holds no locks")
    for lock_id in ids:
        state = apply_lock_transition(state, lock_id, trigger, now, directory)
    return state


def accept_certificate(
    session: RebalanceSession,
    state: ChannelState,
    cert: SignedMessage,
    directory: KeyDirectory,
    now: int,
) -> tuple[RebalanceSession, ChannelState]:
    """Apply a bank certificate or bank-countersigned chain message to the session locks."""
    if not verify(cert, directory):
        raise BadSignature(f"{cert.kind.value} does not verify")
    if cert.session != session.session_id or session.order_ref is None:
        raise WrongSession(f"{cert.kind.value} belongs to session {cert.session!r}")
    alt = session.alternative
    if cert.kind in (Kind.CERT1, Kind.CERT2):
        if cert.body.get("ref") != session.order_ref:
            raise WrongSession("certificate references a different order")
        issuer = cert.issuer.name
        expected = session.bank_a.name if cert.kind is Kind.CERT1 else session.bank_i.name
        if issuer not in session.registered_sources or issuer != expected:
            raise UnregisteredIssuer(f"{issuer} is not a registered source of {cert.kind.value}")
    elif cert.kind in (Kind.M_A1I1BA1, Kind.M_A1I1BA1BI1):
        if digest_hex(cert.prefix(2)) != session.order_ref:
            raise WrongSession("bank chain does not extend this session's m_A1I1")
        for p in cert.signers[2 : len(cert.signatures)]:
            if p.name not in session.registered_sources:
                raise UnregisteredIssuer(f"{p.name} is not a registered source")
    else:
        raise PhaseError(f"{cert.kind.value} is not a settlement message")

    if cert.kind is Kind.CERT1 and not alt.bank_chain and session.phase is Phase.ACCEPTED_LOCKED:
        nxt = Phase.AWAITING_RECEIPT if alt.receipt_based else Phase.SETTLED
    elif cert.kind is Kind.CERT2 and session.phase is Phase.AWAITING_RECEIPT:
        nxt = Phase.SETTLED
    elif cert.kind is Kind.M_A1I1BA1 and alt.bank_chain and session.phase is Phase.ACCEPTED_LOCKED:
        nxt = Phase.TRANSFER_TRIGGERED
    elif (
        cert.kind is Kind.M_A1I1BA1BI1
        and alt.bank_chain
        and session.phase in (Phase.ACCEPTED_LOCKED, Phase.TRANSFER_TRIGGERED)
    ):
        nxt = Phase.AWAITING_RECEIPT if alt.receipt_based else Phase.SETTLED
    else:
        raise PhaseError(f"{cert.kind.value} not expected in {session.phase.value} ({alt.value})")

    state = _session_locks_apply(session, state, cert, now, directory)
    if nxt is Phase.SETTLED and session.lock_ids(state):
        raise PhaseError("locks remain after settlement")
    return session._advance(nxt, now, cert), state


def on_timeout(
    session: RebalanceSession, state: ChannelState, now: int, directory: KeyDirectory
) -> tuple[RebalanceSession, ChannelState]:
    """Fire the session's elapsed deadline, if any."""
    deadline = session.next_deadline(state)
    if deadline is None or now <= deadline:
        raise NoDeadlinePending(f"nothing due at {now} (next deadline {deadline})")
    if session.phase is Phase.PROPOSED:
        return session._advance(Phase.REJECTED, now), state
    for lock_id in session.lock_ids(state):
        if now > state.lock(lock_id).timeout:
            state = apply_lock_transition(state, lock_id, TIMEOUT, now, directory)
    if session.lock_ids(state):
        return session, state
    if session.phase is Phase.AWAITING_RECEIPT:
        return session._advance(Phase.SETTLED_WITH_COMPENSATION, now), state
    return session._advance(Phase.REVERTED, now), state


SETTLING_KINDS = (Kind.CERT1, Kind.CERT2, Kind.M_A1I1BA1, Kind.M_A1I1BA1BI1)


def admissible_evidence(
    session: RebalanceSession, evidence: Iterable[SignedMessage], directory: KeyDirectory
) -> list[SignedMessage]:
    """Bank-signed messages in ``evidence`` that verify and belong to this session."""
    out = []
    for m in evidence:
        if m.kind not in SETTLING_KINDS or m.session != session.session_id or not verify(m, directory):
            continue
        if m.kind in (Kind.CERT1, Kind.CERT2) and m.body.get("ref") != session.order_ref:
            continue
        if m.kind in (Kind.M_A1I1BA1, Kind.M_A1I1BA1BI1) and digest_hex(m.prefix(2)) != session.order_ref:
            continue
        out.append(m)
    return out


def raise_dispute(
    session: RebalanceSession,
    claimant_key: KeyPair,
    evidence: Iterable[SignedMessage],
    directory: KeyDirectory,
    now: int,
) -> tuple[RebalanceSession, DisputeCase]:
    """Assemble a case for the regulator.

    The payee needs at least one bank-signed commitment.  The payer may also
    claim that her bank ignored a valid order, using the countersigned
    ``m_A1I1`` she submitted.
    """
    if not session.terminal:
        raise PhaseError("channel-side resolution must finish before a dispute")
    claimant = claimant_key.party
    certs = admissible_evidence(session, evidence, directory)
    acceptance = session.acceptance
    if claimant == session.payee:
        claim = "not_credited"
        if not certs:
            raise InsufficientEvidence("no verifying bank certificate for this session")
    elif claimant == session.payer:
        claim = "not_credited" if certs else "order_not_executed"
        if not certs and (acceptance is None or not verify(acceptance, directory)):
            raise InsufficientEvidence("no countersigned order to show")
    else:
        raise InvalidRole(f"{claimant.name} is not a participant of {session.session_id}")
    bundle = tuple(m for m in (acceptance, session.registration) if m is not None) + tuple(certs)
    body = {
        "session": session.session_id,
        "ref": session.order_ref,
        "claim": claim,
        "evidence": [digest_hex(m) for m in bundle],
        "filed_at": now,
    }
    msg = sign(claimant_key, new_message(Kind.DISPUTE, session.session_id, session.channel_id, (claimant,), body))
    case = DisputeCase(
        claimant, claim, session.session_id, session.order_ref, bundle, msg,
        session.outcome.value if session.outcome else None,
    )
    return session._advance(Phase.DISPUTED, now, msg), case
