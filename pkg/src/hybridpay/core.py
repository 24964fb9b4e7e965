"""Identities, values, keys and the authenticated message envelope.

Every protocol payload travels as a :class:`SignedMessage`.  A message
declares the route of parties expected to sign it (``signers``) and its
``kind`` fixes how many of them must have signed and which roles they
hold.  Countersigning one of the order-chain kinds
(``M_A1 -> M_A1I1 -> M_A1I1BA1 -> M_A1I1BA1BI1``) upgrades the kind and
appends one signature; each signature commits to the canonical bytes of
the message as it stood when that signature was added, so a countersignature
covers the full message it countersigns.

The byte layout of :func:`canonical_serialize` is documented in
``docs/serialization.md``.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization as _keyser
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    NegativeValue,
    SerializationError,
    UnitMismatch,
    UnknownParty,
    ValueOverflow,
    WrongSigner,
)

MAX_AMOUNT = 2**63 - 1


class Role(str, enum.Enum):
    PARTICIPANT = "participant"
    BANK = "bank"
    REGULATOR = "regulator"
    LEDGER = "ledger"


ROLE_CODES = {Role.PARTICIPANT: 1, Role.BANK: 2, Role.REGULATOR: 3, Role.LEDGER: 4}


@dataclass(frozen=True, order=True)
class PartyId:
    name: str
    role: Role

    def __str__(self) -> str:
        return self.name


class Unit(str, enum.Enum):
    CHANNEL = "channel"
    FIAT = "fiat"


@dataclass(frozen=True, order=True)
class Value:
    """Non-negative integer amount in minor units of a single unit of account."""

    amount: int
    unit: Unit = Unit.CHANNEL

    def __post_init__(self) -> None:
        if isinstance(self.amount, bool) or not isinstance(self.amount, int):
            raise TypeError(f"amount must be int, got {type(self.amount).__name__}")
        if self.amount < 0:
            raise NegativeValue(f"negative amount {self.amount}")
        if self.amount > MAX_AMOUNT:
            raise ValueOverflow(f"amount {self.amount} exceeds {MAX_AMOUNT}")

    def _same_unit(self, other: Value) -> None:
        if not isinstance(other, Value):
            raise TypeError(f"cannot combine Value with {type(other).__name__}")
        if other.unit is not self.unit:
            raise UnitMismatch(f"{self.unit.value} vs {other.unit.value}")

    def __add__(self, other: Value) -> Value:
        self._same_unit(other)
        return Value(self.amount + other.amount, self.unit)

    def __sub__(self, other: Value) -> Value:
        self._same_unit(other)
        return Value(self.amount - other.amount, self.unit)

    def __bool__(self) -> bool:
        return self.amount != 0

    def __str__(self) -> str:
        return f"{self.amount} {self.unit.value}"

    @classmethod
    def zero(cls, unit: Unit = Unit.CHANNEL) -> Value:
        return cls(0, unit)


def channel(amount: int) -> Value:
    return Value(amount, Unit.CHANNEL)


def fiat(amount: int) -> Value:
    return Value(amount, Unit.FIAT)


def total(values: Iterable[Value], unit: Unit = Unit.CHANNEL) -> Value:
    acc = Value.zero(unit)
    for v in values:
        acc = acc + v
    return acc


# --------------------------------------------------------------------------
# message kinds

class Kind(str, enum.Enum):
    M_A1 = "M_A1"
    M_A1I1 = "M_A1I1"
    M_A1I1BA1 = "M_A1I1BA1"
    M_A1I1BA1BI1 = "M_A1I1BA1BI1"
    CERT1 = "CERT1"
    CERT2 = "CERT2"
    CHANNEL_UPDATE = "CHANNEL_UPDATE"
    REGISTRATION = "REGISTRATION"
    DISPUTE = "DISPUTE"
    VERDICT = "VERDICT"


KIND_CODES = {k: i + 1 for i, k in enumerate(Kind)}
_KIND_BY_CODE = {v: k for k, v in KIND_CODES.items()}
_ROLE_BY_CODE = {v: k for k, v in ROLE_CODES.items()}

CHAIN = (Kind.M_A1, Kind.M_A1I1, Kind.M_A1I1BA1, Kind.M_A1I1BA1BI1)
_CHAIN_ROLES = (Role.PARTICIPANT, Role.PARTICIPANT, Role.BANK, Role.BANK)

_SIGNER_ROLES: dict[Kind, tuple[Role, ...]] = {
    Kind.CERT1: (Role.BANK,),
    Kind.CERT2: (Role.BANK,),
    Kind.CHANNEL_UPDATE: (Role.PARTICIPANT, Role.PARTICIPANT),
    Kind.REGISTRATION: (Role.PARTICIPANT, Role.PARTICIPANT),
    Kind.DISPUTE: (Role.PARTICIPANT,),
    Kind.VERDICT: (Role.REGULATOR,),
}
for _i, _k in enumerate(CHAIN):
    _SIGNER_ROLES[_k] = _CHAIN_ROLES[: _i + 1]


def required_roles(kind: Kind) -> tuple[Role, ...]:
    """Roles of the signers a complete message of ``kind`` carries, in order."""
    return _SIGNER_ROLES[kind]


def stage_kind(kind: Kind, index: int) -> Kind:
    """Kind the message had when its ``index``-th signature was added."""
    if kind in CHAIN:
        return CHAIN[index]
    return kind


# --------------------------------------------------------------------------
# keys and signatures

class Scheme(str, enum.Enum):
    ED25519 = "ed25519"
    HMAC_SHA256 = "hmac-sha256"


@dataclass(frozen=True)
class Signature:
    signer: str
    value: bytes


@dataclass(frozen=True)
class KeyPair:
    party: PartyId
    scheme: Scheme
    public: bytes
    secret: bytes = field(repr=False)


@lru_cache(maxsize=256)
def _ed25519_private(secret: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret)


@lru_cache(maxsize=256)
def _ed25519_public(public: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(public)


def derive_keypair(party: PartyId, seed: int = 0, scheme: Scheme = Scheme.ED25519) -> KeyPair:
    """Deterministically derive a key pair for ``party`` from a scenario seed."""
    secret = hashlib.sha256(f"hybridpay-key:{seed}:{party.name}".encode()).digest()
    if scheme is Scheme.ED25519:
        public = _ed25519_private(secret).public_key().public_bytes(
            _keyser.Encoding.Raw, _keyser.PublicFormat.Raw
        )
    else:
        # stand-in scheme: the verification key is the MAC key itself
        public = secret
    return KeyPair(party, scheme, public, secret)


def raw_sign(key: KeyPair, data: bytes) -> bytes:
    if key.scheme is Scheme.ED25519:
        return _ed25519_private(key.secret).sign(data)
    return hmac.new(key.secret, data, hashlib.sha256).digest()


def raw_verify(scheme: Scheme, public: bytes, data: bytes, sig: bytes) -> bool:
    if scheme is Scheme.ED25519:
        try:
            _ed25519_public(public).verify(sig, data)
        except (InvalidSignature, ValueError):
            return False
        return True
    return hmac.compare_digest(hmac.new(public, data, hashlib.sha256).digest(), sig)


class KeyDirectory:
    """Scenario-level registry of parties and their verification keys."""

    def __init__(self, keys: Iterable[KeyPair] = ()):
        self._entries: dict[str, tuple[PartyId, Scheme, bytes]] = {}
        self._verified: dict[bytes, bool] = {}
        for k in keys:
            self.add(k.party, k.scheme, k.public)

    def add(self, party: PartyId, scheme: Scheme, public: bytes) -> None:
        self._entries[party.name] = (party, scheme, public)
        self._verified.clear()

    def party(self, name: str) -> PartyId:
        try:
            return self._entries[name][0]
        except KeyError:
            raise UnknownParty(name) from None

    def lookup(self, name: str) -> tuple[PartyId, Scheme, bytes] | None:
        return self._entries.get(name)

    def __contains__(self, name: object) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.values())


# --------------------------------------------------------------------------
# message envelope

def _normalize(value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return _normalize(value.value)
    if value is None or isinstance(value, (bool, str, bytes)):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, Mapping):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise SerializationError(f"body keys must be str, got {k!r}")
            out[k] = _normalize(v)
        return out
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    raise SerializationError(f"unsupported body value {value!r}")


@dataclass(frozen=True)
class SignedMessage:
    """Authenticated protocol payload.

    ``body`` is normalised to plain dicts/lists on construction and must be
    treated as read-only.
    """

    kind: Kind
    session: str
    channel: str
    signers: tuple[PartyId, ...]
    body: dict
    signatures: tuple[Signature, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "signers", tuple(self.signers))
        object.__setattr__(self, "signatures", tuple(self.signatures))
        body = _normalize(self.body)
        if not isinstance(body, dict):
            raise SerializationError("message body must be a mapping")
        object.__setattr__(self, "body", body)

    def __hash__(self) -> int:
        return hash(canonical_serialize(self))

    @property
    def complete(self) -> bool:
        return len(self.signatures) >= len(required_roles(self.kind))

    @property
    def issuer(self) -> PartyId | None:
        """First declared signer: the originator of the message."""
        return self.signers[0] if self.signers else None

    @property
    def next_signer(self) -> PartyId | None:
        n = len(self.signatures)
        if n < len(required_roles(self.kind)):
            return self.signers[n] if n < len(self.signers) else None
        if self.kind in CHAIN and self.kind is not CHAIN[-1] and n < len(self.signers):
            return self.signers[n]
        return None

    def prefix(self, count: int) -> SignedMessage:
        """The message as it stood with only its first ``count`` signatures."""
        if count < 1 or count > len(self.signatures):
            raise ValueError(f"prefix length {count} out of range")
        return replace(self, kind=stage_kind(self.kind, count - 1), signatures=self.signatures[:count])


def new_message(
    kind: Kind,
    session: str,
    channel: str,
    signers: Iterable[PartyId],
    body: Mapping[str, Any],
) -> SignedMessage:
    """Create an unsigned message, checking the declared route against the kind."""
    kind = Kind(kind)
    signers = tuple(signers)
    roles = _CHAIN_ROLES if kind in CHAIN else required_roles(kind)
    need = len(required_roles(kind))
    if len(signers) < need or len(signers) > len(roles):
        raise WrongSigner(f"{kind.value} needs {need}..{len(roles)} signers, got {len(signers)}")
    for p, r in zip(signers, roles):
        if p.role is not r:
            raise WrongSigner(f"{p.name} has role {p.role.value}, {kind.value} expects {r.value}")
    return SignedMessage(kind, session, channel, signers, dict(body), ())


_SIG_DOMAIN = b"HPS\x01"


def signing_payload(message: SignedMessage, index: int) -> bytes:
    """Bytes covered by the ``index``-th signature of ``message``."""
    stage = replace(message, kind=stage_kind(message.kind, index), signatures=message.signatures[:index])
    return _SIG_DOMAIN + canonical_serialize(stage)


def sign(key: KeyPair, message: SignedMessage) -> SignedMessage:
    """Return ``message`` with one more signature by ``key``.

    Signing a complete chain message countersigns it, upgrading the kind
    (``M_A1`` signed by the payee becomes ``M_A1I1``).
    """
    expected = message.next_signer
    if expected is None:
        raise WrongSigner(f"{message.kind.value} expects no further signatures")
    if key.party != expected:
        raise WrongSigner(f"{key.party.name} is not the next signer ({expected.name}) of {message.kind.value}")
    n = len(message.signatures)
    kind = message.kind
    if n >= len(required_roles(kind)):
        kind = CHAIN[CHAIN.index(kind) + 1]
    staged = replace(message, kind=kind)
    sig = Signature(key.party.name, raw_sign(key, signing_payload(staged, n)))
    return replace(staged, signatures=message.signatures + (sig,))


def verify(message: SignedMessage, directory: KeyDirectory) -> bool:
    """True iff every required signature is present and verifies. Never raises."""
    try:
        data = canonical_serialize(message)
    except Exception:
        return False
    cached = directory._verified.get(data)
    if cached is not None:
        return cached
    ok = _verify_uncached(message, directory, partial=False)
    directory._verified[data] = ok
    return ok


def verify_partial(message: SignedMessage, directory: KeyDirectory) -> bool:
    """Like :func:`verify` but accepts a message still missing signatures."""
    try:
        return bool(message.signatures) and _verify_uncached(message, directory, partial=True)
    except Exception:
        return False


def _verify_uncached(message: SignedMessage, directory: KeyDirectory, partial: bool) -> bool:
    roles = required_roles(message.kind)
    if len(message.signers) < len(roles):
        return False
    if len(message.signatures) > len(roles) or (not partial and len(message.signatures) != len(roles)):
        return False
    for i, (role, sig) in enumerate(zip(roles, message.signatures)):
        declared = message.signers[i]
        if declared.role is not role or sig.signer != declared.name:
            return False
        entry = directory.lookup(declared.name)
        if entry is None or entry[0] != declared:
            return False
        _, scheme, public = entry
        if not raw_verify(scheme, public, signing_payload(message, i), sig.value):
            return False
    return True


def signed_by(message: SignedMessage) -> tuple[str, ...]:
    return tuple(s.signer for s in message.signatures)


# --------------------------------------------------------------------------
# canonical serialization

_MAGIC = b"HPM\x01"


def _put_str(out: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    out += struct.pack(">I", len(raw))
    out += raw


def _put_bytes(out: bytearray, b: bytes) -> None:
    out += struct.pack(">I", len(b))
    out += b


def _put_value(out: bytearray, v: Any) -> None:
    if v is None:
        out += b"N"
    elif v is True:
        out += b"T"
    elif v is False:
        out += b"F"
    elif isinstance(v, int):
        if not -(2**63) <= v < 2**63:
            raise SerializationError(f"integer {v} outside int64")
        out += b"I" + struct.pack(">q", v)
    elif isinstance(v, str):
        out += b"S"
        _put_str(out, v)
    elif isinstance(v, bytes):
        out += b"B"
        _put_bytes(out, v)
    elif isinstance(v, list):
        out += b"L" + struct.pack(">I", len(v))
        for item in v:
            _put_value(out, item)
    elif isinstance(v, dict):
        out += b"D" + struct.pack(">I", len(v))
        for k in sorted(v):
            _put_str(out, k)
            _put_value(out, v[k])
    else:
        raise SerializationError(f"unsupported body value {v!r}")


def canonical_serialize(message: SignedMessage) -> bytes:
    out = bytearray(_MAGIC)
    out += struct.pack(">B", KIND_CODES[message.kind])
    _put_str(out, message.session)
    _put_str(out, message.channel)
    out += struct.pack(">H", len(message.signers))
    for p in message.signers:
        _put_str(out, p.name)
        out += struct.pack(">B", ROLE_CODES[p.role])
    _put_value(out, message.body)
    out += struct.pack(">H", len(message.signatures))
    for s in message.signatures:
        _put_str(out, s.signer)
        _put_bytes(out, s.value)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SerializationError("truncated message")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def string(self) -> str:
        try:
            return self.take(self.unpack(">I")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SerializationError(str(exc)) from None

    def raw(self) -> bytes:
        return self.take(self.unpack(">I"))

    def value(self) -> Any:
        tag = self.take(1)
        if tag == b"N":
            return None
        if tag == b"T":
            return True
        if tag == b"F":
            return False
        if tag == b"I":
            return self.unpack(">q")
        if tag == b"S":
            return self.string()
        if tag == b"B":
            return self.raw()
        if tag == b"L":
            return [self.value() for _ in range(self.unpack(">I"))]
        if tag == b"D":
            out = {}
            prev = None
            for _ in range(self.unpack(">I")):
                k = self.string()
                if prev is not None and k <= prev:
                    raise SerializationError("dict keys not in canonical order")
                prev = k
                out[k] = self.value()
            return out
        raise SerializationError(f"unknown value tag {tag!r}")


def canonical_deserialize(data: bytes) -> SignedMessage:
    r = _Reader(data)
    if r.take(4) != _MAGIC:
        raise SerializationError("bad magic")
    try:
        kind = _KIND_BY_CODE[r.unpack(">B")]
    except KeyError:
        raise SerializationError("unknown kind code") from None
    session = r.string()
    channel_id = r.string()
    signers = []
    for _ in range(r.unpack(">H")):
        name = r.string()
        try:
            role = _ROLE_BY_CODE[r.unpack(">B")]
        except KeyError:
            raise SerializationError("unknown role code") from None
        signers.append(PartyId(name, role))
    body = r.value()
    if not isinstance(body, dict):
        raise SerializationError("body is not a mapping")
    sigs = []
    for _ in range(r.unpack(">H")):
        signer = r.string()
        sigs.append(Signature(signer, r.raw()))
    if r.pos != len(data):
        raise SerializationError("trailing bytes")
    return SignedMessage(kind, session, channel_id, tuple(signers), body, tuple(sigs))


def digest(message: SignedMessage) -> bytes:
    return hashlib.sha256(canonical_serialize(message)).digest()


def digest_hex(message: SignedMessage) -> str:
    return digest(message).hex()
