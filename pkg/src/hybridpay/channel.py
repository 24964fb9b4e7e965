"""Two-party trustless channel: countersigned states, locks and ledger dispute.

A :class:`ChannelState` is *enforceable* when either

* it is committed to by a message both participants signed (``proof``), or
* it was derived from an enforceable state by a recorded
  :class:`Transition` -- a lock release, timer reset, timeout, or lock
  creation authorised by a both-signed message.

Derived states carry their parent, so the full evidence chain can be handed
to the :class:`LedgerAnchor` and replayed there.  Lock creation bumps the
sequence number; lock releases and timeouts keep it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Union

from .core import (
    KeyDirectory,
    KeyPair,
    Kind,
    PartyId,
    Role,
    SignedMessage,
    Unit,
    Value,
    channel,
    new_message,
    sign,
    verify,
    verify_partial,
)
from .errors import (
    AlreadyClosed,
    BadSignature,
    ChannelBusy,
    ConditionNotMet,
    ConservationViolation,
    DisputeWindowOpen,
    InsufficientBalance,
    InvalidParty,
    LocksPending,
    StaleSeq,
    UnknownLock,
    ZeroDeposit,
)

DEFAULT_DISPUTE_WINDOW = 10


def _cv(x: Value | int) -> Value:
    if isinstance(x, Value):
        if x.unit is not Unit.CHANNEL:
            raise TypeError("channel amounts must use the channel unit")
        return x
    return channel(x)


# --------------------------------------------------------------------------
# lock conditions

@dataclass(frozen=True)
class CertificateFrom:
    """Released by a certificate of ``kind`` issued by one of ``senders`` for ``session``."""

    senders: frozenset[str]
    kind: Kind
    session: str

    def matches(self, msg: SignedMessage) -> bool:
        return (
            msg.kind is self.kind
            and msg.session == self.session
            and msg.issuer is not None
            and msg.issuer.name in self.senders
        )

    def to_body(self) -> dict:
        return {"type": "certificate", "senders": sorted(self.senders), "kind": self.kind.value, "session": self.session}


@dataclass(frozen=True)
class CounterpartySigned:
    """Released by a fully signed message of ``kind`` belonging to ``session``."""

    kind: Kind
    session: str

    def matches(self, msg: SignedMessage) -> bool:
        return msg.kind is self.kind and msg.session == self.session

    def to_body(self) -> dict:
        return {"type": "countersigned", "kind": self.kind.value, "session": self.session}


@dataclass(frozen=True)
class Never:
    def matches(self, msg: SignedMessage) -> bool:
        return False

    def to_body(self) -> dict:
        return {"type": "never"}


LockCondition = Union[CertificateFrom, CounterpartySigned, Never]
NEVER = Never()


def condition_from_body(body: Mapping[str, Any]) -> LockCondition:
    t = body["type"]
    if t == "certificate":
        return CertificateFrom(frozenset(body["senders"]), Kind(body["kind"]), body["session"])
    if t == "countersigned":
        return CounterpartySigned(Kind(body["kind"]), body["session"])
    if t == "never":
        return NEVER
    raise ValueError(f"unknown lock condition {t!r}")


# --------------------------------------------------------------------------
# locks

@dataclass(frozen=True)
class Disposition:
    """What a lock turns into when it fires.

    ``credits`` pays parties directly; ``relock`` replaces the lock with
    successor locks whose timeouts are ``relock_window`` ticks after firing.
    """

    credits: tuple[tuple[str, int], ...] = ()
    relock: tuple["Lock", ...] = ()
    relock_window: int = 0

    @property
    def total(self) -> int:
        return sum(a for _, a in self.credits) + sum(l.amount.amount for l in self.relock)

    def to_body(self) -> dict:
        return {
            "credits": [[p, a] for p, a in self.credits],
            "relock": [l.to_body() for l in self.relock],
            "window": self.relock_window,
        }

    @classmethod
    def from_body(cls, body: Mapping[str, Any]) -> Disposition:
        return cls(
            tuple((p, a) for p, a in body["credits"]),
            tuple(Lock.from_body(l) for l in body["relock"]),
            body["window"],
        )


def pay(**credits: int) -> Disposition:
    return Disposition(tuple((p, a) for p, a in credits.items() if a))


@dataclass(frozen=True)
class Lock:
    lock_id: str
    owner: str
    amount: Value
    condition: LockCondition
    timeout: int
    on_condition: Disposition
    on_timeout: Disposition
    reset_on: LockCondition = NEVER
    reset_window: int = 0

    def __post_init__(self) -> None:
        if self.amount.amount <= 0:
            raise ValueError(f"lock {self.lock_id}: amount must be positive")
        for name, d in (("on_condition", self.on_condition), ("on_timeout", self.on_timeout)):
            if d.total != self.amount.amount:
                raise ConservationViolation(
                    f"lock {self.lock_id}: {name} disposes {d.total}, lock holds {self.amount.amount}"
                )

    def to_body(self) -> dict:
        return {
            "id": self.lock_id,
            "owner": self.owner,
            "amount": self.amount.amount,
            "condition": self.condition.to_body(),
            "timeout": self.timeout,
            "on_condition": self.on_condition.to_body(),
            "on_timeout": self.on_timeout.to_body(),
            "reset_on": self.reset_on.to_body(),
            "reset_window": self.reset_window,
        }

    @classmethod
    def from_body(cls, body: Mapping[str, Any]) -> Lock:
        return cls(
            body["id"],
            body["owner"],
            channel(body["amount"]),
            condition_from_body(body["condition"]),
            body["timeout"],
            Disposition.from_body(body["on_condition"]),
            Disposition.from_body(body["on_timeout"]),
            condition_from_body(body["reset_on"]),
            body["reset_window"],
        )


@dataclass(frozen=True)
class Timeout:
    """Trigger standing for an elapsed lock deadline."""


TIMEOUT = Timeout()


@dataclass(frozen=True)
class Transition:
    at: int
    cause: SignedMessage | None  # None: timeout
    lock_id: str | None  # None: lock creation authorised by ``cause``


# --------------------------------------------------------------------------
# channel state

@dataclass(frozen=True)
class ChannelState:
    channel_id: str
    party_a: PartyId
    party_i: PartyId
    capacity: Value
    seq: int
    balance_a: Value
    balance_i: Value
    locks: tuple[Lock, ...] = ()
    proof: SignedMessage | None = field(default=None, repr=False, compare=False)
    parent: ChannelState | None = field(default=None, repr=False, compare=False)
    transition: Transition | None = field(default=None, repr=False, compare=False)

    @property
    def parties(self) -> tuple[PartyId, PartyId]:
        return (self.party_a, self.party_i)

    def balance(self, name: str) -> Value:
        if name == self.party_a.name:
            return self.balance_a
        if name == self.party_i.name:
            return self.balance_i
        raise InvalidParty(name)

    def counterparty(self, party: PartyId) -> PartyId:
        if party == self.party_a:
            return self.party_i
        if party == self.party_i:
            return self.party_a
        raise InvalidParty(party.name)

    @property
    def locked(self) -> Value:
        acc = channel(0)
        for l in self.locks:
            acc = acc + l.amount
        return acc

    def lock(self, lock_id: str) -> Lock:
        for l in self.locks:
            if l.lock_id == lock_id:
                return l
        raise UnknownLock(lock_id)

    @property
    def root(self) -> ChannelState:
        s = self
        while s.parent is not None:
            s = s.parent
        return s

    @property
    def evidence(self) -> tuple[Transition, ...]:
        out = []
        s = self
        while s.transition is not None:
            out.append(s.transition)
            s = s.parent
        return tuple(reversed(out))

    @property
    def final_capable(self) -> bool:
        root = self.root
        return root.proof is not None and root.proof.complete

    def descends_from(self, other: ChannelState) -> bool:
        s = self.parent
        while s is not None:
            if s is other or (s == other and s.evidence == other.evidence):
                return True
            s = s.parent
        return False

    def body(self) -> dict:
        return state_body(self)


def state_body(state: ChannelState) -> dict:
    return {
        "channel": state.channel_id,
        "a": state.party_a.name,
        "i": state.party_i.name,
        "capacity": state.capacity.amount,
        "seq": state.seq,
        "balance_a": state.balance_a.amount,
        "balance_i": state.balance_i.amount,
        "locks": [l.to_body() for l in state.locks],
    }


def state_digest(state: ChannelState) -> str:
    raw = json.dumps(state_body(state), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(raw).hexdigest()


def check_conservation(state: ChannelState) -> None:
    held = state.balance_a + state.balance_i + state.locked
    if held != state.capacity:
        raise ConservationViolation(
            f"{state.channel_id} seq {state.seq}: balances+locks={held.amount} capacity={state.capacity.amount}"
        )


def _from_body(body: Mapping[str, Any], like: ChannelState) -> ChannelState:
    if body["channel"] != like.channel_id or body["a"] != like.party_a.name or body["i"] != like.party_i.name:
        raise BadSignature("update is for a different channel")
    return ChannelState(
        like.channel_id,
        like.party_a,
        like.party_i,
        channel(body["capacity"]),
        body["seq"],
        channel(body["balance_a"]),
        channel(body["balance_i"]),
        tuple(Lock.from_body(l) for l in body["locks"]),
    )


# --------------------------------------------------------------------------
# ledger anchoring

class LedgerAnchor:
    """On-ledger side of a channel: deposits, dispute window and payout.

    The first submitted state opens the dispute window; any state with a
    higher sequence number (or a longer evidence chain over the same signed
    state) replaces it while ``now <= deadline``.  The deadline is inclusive.
    """

    def __init__(
        self,
        channel_id: str,
        party_a: PartyId,
        party_i: PartyId,
        deposits: Mapping[str, Value],
        dispute_window: int,
        directory: KeyDirectory,
    ):
        self.channel_id = channel_id
        self.party_a = party_a
        self.party_i = party_i
        self.deposits = dict(deposits)
        self.dispute_window = dispute_window
        self.directory = directory
        self.status = "open"
        self.best: ChannelState | None = None
        self.deadline: int | None = None
        self.latest_seen_seq = -1
        self.payout: dict[str, Value] | None = None
        self.submissions: list[tuple[int, int, bool]] = []

    @property
    def capacity(self) -> Value:
        acc = channel(0)
        for v in self.deposits.values():
            acc = acc + v
        return acc

    def dispute(self, state: ChannelState, now: int) -> bool:
        """Submit ``state``; returns True if it became the state of record."""
        if self.status == "closed":
            raise AlreadyClosed(self.channel_id)
        if state.channel_id != self.channel_id or not verify_state(state, self.directory):
            raise BadSignature(f"submitted state for {state.channel_id} does not verify")
        self.latest_seen_seq = max(self.latest_seen_seq, state.seq)
        if self.status == "open":
            self.status = "disputed"
            self.deadline = now + self.dispute_window
            self.best = state
            accepted = True
        elif now > self.deadline:
            accepted = False
        else:
            accepted = supersedes(state, self.best)
            if accepted:
                self.best = state
        self.submissions.append((now, state.seq, accepted))
        return accepted

    def earliest_close(self) -> int:
        if self.deadline is None:
            raise DisputeWindowOpen("no state submitted")
        t = self.deadline + 1
        pending = list(self.best.locks)
        while pending:
            l = pending.pop()
            t = max(t, l.timeout + 1)
            for succ in l.on_timeout.relock:
                pending.append(replace(succ, timeout=l.timeout + 1 + l.on_timeout.relock_window))
        return t

    def close(self, now: int) -> dict[str, Value]:
        if self.status == "closed":
            raise AlreadyClosed(self.channel_id)
        if self.status != "disputed" or now <= self.deadline:
            raise DisputeWindowOpen(f"dispute window open until {self.deadline}")
        final = expire_locks(self.best, now, self.directory)
        if final.locks:
            raise LocksPending(", ".join(l.lock_id for l in final.locks))
        payout = {self.party_a.name: final.balance_a, self.party_i.name: final.balance_i}
        if payout[self.party_a.name] + payout[self.party_i.name] != self.capacity:
            raise ConservationViolation("payout does not match deposits")
        self.status = "closed"
        self.best = final
        self.payout = payout
        return payout


def supersedes(new: ChannelState, old: ChannelState) -> bool:
    if new.seq != old.seq:
        return new.seq > old.seq
    return new.descends_from(old)


def dispute_and_close(anchor: LedgerAnchor, submitted: ChannelState, now: int) -> dict[str, Value]:
    """Uncontested close: submit ``submitted`` and settle once the window has passed."""
    anchor.dispute(submitted, now)
    return anchor.close(anchor.earliest_close())


# --------------------------------------------------------------------------
# operations

def open_channel(
    key_a: KeyPair,
    key_i: KeyPair,
    deposit_a: Value | int,
    deposit_i: Value | int,
    dispute_window: int = DEFAULT_DISPUTE_WINDOW,
    channel_id: str = "channel-1",
    directory: KeyDirectory | None = None,
) -> tuple[ChannelState, LedgerAnchor]:
    """Fund a channel and return the both-signed seq-0 state plus its anchor."""
    a, i = key_a.party, key_i.party
    if a.name == i.name:
        raise InvalidParty("channel parties must be distinct")
    for p in (a, i):
        if p.role is not Role.PARTICIPANT:
            raise InvalidParty(f"{p.name} is a {p.role.value}, not a channel participant")
    deposit_a, deposit_i = _cv(deposit_a), _cv(deposit_i)
    if not deposit_a or not deposit_i:
        raise ZeroDeposit("both deposits must be positive")
    state = ChannelState(channel_id, a, i, deposit_a + deposit_i, 0, deposit_a, deposit_i)
    msg = new_message(Kind.CHANNEL_UPDATE, "", channel_id, (a, i), {"state": state_body(state)})
    msg = sign(key_i, sign(key_a, msg))
    state = replace(state, proof=msg)
    if directory is None:
        directory = KeyDirectory([key_a, key_i])
    anchor = LedgerAnchor(channel_id, a, i, {a.name: deposit_a, i.name: deposit_i}, dispute_window, directory)
    return state, anchor


def propose_update(
    state: ChannelState,
    key: KeyPair,
    balance_a: Value | int,
    balance_i: Value | int,
    locks: Iterable[Lock] = (),
    seq: int | None = None,
) -> SignedMessage:
    """Half-signed CHANNEL_UPDATE moving ``state`` to the given balances."""
    proposer = key.party
    other = state.counterparty(proposer)
    if state.locks:
        raise ChannelBusy(f"{len(state.locks)} lock(s) outstanding")
    seq = state.seq + 1 if seq is None else seq
    if seq <= state.seq:
        raise StaleSeq(f"proposed seq {seq} is not above current {state.seq}")
    new = ChannelState(
        state.channel_id, state.party_a, state.party_i, state.capacity, seq,
        _cv(balance_a), _cv(balance_i), tuple(locks),
    )
    check_conservation(new)
    msg = new_message(Kind.CHANNEL_UPDATE, "", state.channel_id, (proposer, other), {"state": state_body(new)})
    return sign(key, msg)


def accept_update(
    state: ChannelState, update: SignedMessage, key: KeyPair, directory: KeyDirectory
) -> ChannelState:
    """Countersign ``update`` and return the resulting both-signed state."""
    if update.kind is not Kind.CHANNEL_UPDATE or update.channel != state.channel_id:
        raise BadSignature("not an update for this channel")
    if len(update.signatures) != 1 or not verify_partial(update, directory):
        raise BadSignature("proposer signature does not verify")
    if update.signers[0] != state.counterparty(key.party):
        raise BadSignature("update not proposed by the counterparty")
    if state.locks:
        raise ChannelBusy(f"{len(state.locks)} lock(s) outstanding")
    new = _from_body(update.body["state"], state)
    if new.seq != state.seq + 1:
        raise StaleSeq(f"update seq {new.seq}, expected {state.seq + 1}")
    if new.capacity != state.capacity:
        raise ConservationViolation("update changes channel capacity")
    check_conservation(new)
    return replace(new, proof=sign(key, update))


def lock_funds(
    state: ChannelState, authorization: SignedMessage, directory: KeyDirectory, now: int
) -> ChannelState:
    """Move the locks listed in a both-signed ``authorization`` out of the balances.

    The authorization body must carry ``locks`` (encoded :class:`Lock`) and
    ``base`` (``{"seq", "digest"}`` of the state it applies to).
    """
    if not verify(authorization, directory):
        raise BadSignature("lock authorization does not verify")
    names = {s.signer for s in authorization.signatures}
    if not {state.party_a.name, state.party_i.name} <= names:
        raise BadSignature("lock authorization lacks a participant signature")
    if authorization.channel != state.channel_id:
        raise BadSignature("authorization is for a different channel")
    locks = tuple(Lock.from_body(l) for l in authorization.body["locks"])
    base = authorization.body["base"]
    debit = {state.party_a.name: channel(0), state.party_i.name: channel(0)}
    for l in locks:
        if l.owner not in debit:
            raise InvalidParty(l.owner)
        debit[l.owner] = debit[l.owner] + l.amount
    for name, amt in debit.items():
        if state.balance(name).amount < amt.amount:
            raise InsufficientBalance(f"{name} holds {state.balance(name).amount}, needs {amt.amount}")
    if base["seq"] != state.seq or base["digest"] != state_digest(state):
        raise StaleSeq(f"authorization built on seq {base['seq']}, channel is at {state.seq}")
    new = replace(
        state,
        seq=state.seq + 1,
        balance_a=state.balance_a - debit[state.party_a.name],
        balance_i=state.balance_i - debit[state.party_i.name],
        locks=state.locks + locks,
        proof=None,
        parent=state,
        transition=Transition(now, authorization, None),
    )
    check_conservation(new)
    return new


def _fire(state: ChannelState, lock: Lock, disp: Disposition, now: int, transition: Transition) -> ChannelState:
    bal = {state.party_a.name: state.balance_a, state.party_i.name: state.balance_i}
    for party, amt in disp.credits:
        if party not in bal:
            raise InvalidParty(party)
        bal[party] = bal[party] + channel(amt)
    successors = tuple(replace(s, timeout=now + disp.relock_window) for s in disp.relock)
    locks = tuple(l for l in state.locks if l.lock_id != lock.lock_id) + successors
    new = replace(
        state,
        balance_a=bal[state.party_a.name],
        balance_i=bal[state.party_i.name],
        locks=locks,
        proof=None,
        parent=state,
        transition=transition,
    )
    check_conservation(new)
    return new


def apply_lock_transition(
    state: ChannelState,
    lock_id: str,
    trigger: SignedMessage | Timeout,
    now: int,
    directory: KeyDirectory,
) -> ChannelState:
    """Release, reset or time out one lock.

    Conditions and resets are honoured up to and including the lock's
    timeout tick; a :data:`TIMEOUT` trigger is valid only after it.
    """
    lock = state.lock(lock_id)
    if isinstance(trigger, Timeout):
        if now <= lock.timeout:
            raise ConditionNotMet(f"lock {lock_id} runs until {lock.timeout}")
        return _fire(state, lock, lock.on_timeout, now, Transition(now, None, lock_id))
    if not verify(trigger, directory):
        raise BadSignature(f"{trigger.kind.value} does not verify")
    if now > lock.timeout:
        raise ConditionNotMet(f"lock {lock_id} expired at {lock.timeout}")
    if lock.condition.matches(trigger):
        return _fire(state, lock, lock.on_condition, now, Transition(now, trigger, lock_id))
    if lock.reset_on.matches(trigger):
        reset = replace(lock, timeout=max(lock.timeout, now + lock.reset_window))
        locks = tuple(reset if l.lock_id == lock_id else l for l in state.locks)
        return replace(state, locks=locks, proof=None, parent=state, transition=Transition(now, trigger, lock_id))
    raise ConditionNotMet(f"{trigger.kind.value} from {trigger.issuer} does not satisfy lock {lock_id}")


def expire_locks(state: ChannelState, now: int, directory: KeyDirectory) -> ChannelState:
    """Apply every timeout that has elapsed by ``now``, including relocked successors."""
    changed = True
    while changed:
        changed = False
        for l in sorted(state.locks, key=lambda l: (l.timeout, l.lock_id)):
            if now > l.timeout:
                state = apply_lock_transition(state, l.lock_id, TIMEOUT, now, directory)
                changed = True
                break
    return state


def verify_state(state: ChannelState, directory: KeyDirectory) -> bool:
    """True iff ``state`` is enforceable: a both-signed root plus valid transitions."""
    try:
        check_conservation(state)
        if state.parent is None:
            proof = state.proof
            if proof is None or proof.kind is not Kind.CHANNEL_UPDATE or not verify(proof, directory):
                return False
            if {s.signer for s in proof.signatures} != {state.party_a.name, state.party_i.name}:
                return False
            return proof.channel == state.channel_id and proof.body["state"] == state_body(state)
        if not verify_state(state.parent, directory):
            return False
        return replay(state.parent, state.transition, directory) == state
    except Exception:
        return False


def replay(parent: ChannelState, t: Transition, directory: KeyDirectory) -> ChannelState:
    if t.lock_id is None:
        return lock_funds(parent, t.cause, directory, t.at)
    return apply_lock_transition(parent, t.lock_id, TIMEOUT if t.cause is None else t.cause, t.at, directory)
