from __future__ import annotations

import hashlib
import struct
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridpay.core import (
    CHAIN,
    KeyDirectory,
    Kind,
    PartyId,
    Role,
    Scheme,
    Signature,
    Unit,
    Value,
    canonical_deserialize,
    canonical_serialize,
    channel,
    derive_keypair,
    digest_hex,
    fiat,
    new_message,
    sign,
    total,
    verify,
    verify_partial,
)
from hybridpay.errors import (
    NegativeValue,
    SerializationError,
    UnitMismatch,
    ValueOverflow,
    WrongSigner,
)

from .conftest import make_keys

ALICE = PartyId("alice", Role.PARTICIPANT)
INGRID = PartyId("ingrid", Role.PARTICIPANT)
BANK_A = PartyId("bank_a", Role.BANK)
BANK_I = PartyId("bank_i", Role.BANK)


# ---------------------------------------------------------------- values


def test_value_rejects_negative_and_float():
    with pytest.raises(NegativeValue):
        channel(-1)
    with pytest.raises(TypeError):
        Value(1.5)
    with pytest.raises(TypeError):
        Value(True)
    with pytest.raises(ValueOverflow):
        channel(2**63)


def test_value_units_do_not_mix():
    with pytest.raises(UnitMismatch):
        channel(1) + fiat(1)
    with pytest.raises(TypeError):
        channel(1) + 1


def test_subtraction_below_zero_raises():
    with pytest.raises(NegativeValue):
        channel(3) - channel(4)


def test_total_and_str():
    assert total([channel(1), channel(2), channel(3)]) == channel(6)
    assert total([], Unit.FIAT) == fiat(0)
    assert str(fiat(12)) == "12 fiat"
    assert not Value.zero()


amounts = st.integers(min_value=0, max_value=2**40)


@given(amounts, amounts, amounts)
def test_value_addition_is_associative_and_commutative(a, b, c):
    x, y, z = channel(a), channel(b), channel(c)
    assert x + y == y + x
    assert (x + y) + z == x + (y + z)


@given(amounts, amounts)
def test_subtraction_inverts_addition(a, b):
    assert (channel(a) + channel(b)) - channel(b) == channel(a)


# ---------------------------------------------------------------- serialization

# Byte layout written out by hand, independently of the encoder.
def _s(text: str) -> bytes:
    raw = text.encode()
    return struct.pack(">I", len(raw)) + raw


def test_serialization_matches_hand_built_bytes():
    msg = new_message(Kind.CERT1, "s", "c", (BANK_A,), {"a": 5, "b": [True, None, "x"]})
    expected = (
        b"HPM\x01"
        + bytes([5])  # CERT1 is the fifth kind
        + _s("s")
        + _s("c")
        + struct.pack(">H", 1)
        + _s("bank_a")
        + bytes([2])  # bank role code
        + b"D" + struct.pack(">I", 2)
        + _s("a") + b"I" + struct.pack(">q", 5)
        + _s("b") + b"L" + struct.pack(">I", 3) + b"T" + b"N" + b"S" + _s("x")
        + struct.pack(">H", 0)
    )
    assert canonical_serialize(msg) == expected
    assert digest_hex(msg) == hashlib.sha256(expected).hexdigest()


def test_body_key_order_does_not_matter():
    m1 = new_message(Kind.CERT1, "s", "c", (BANK_A,), {"x": 1, "y": 2})
    m2 = new_message(Kind.CERT1, "s", "c", (BANK_A,), {"y": 2, "x": 1})
    assert canonical_serialize(m1) == canonical_serialize(m2)


def test_tuples_normalize_to_lists():
    m = new_message(Kind.CERT1, "s", "c", (BANK_A,), {"t": (1, 2)})
    assert m.body == {"t": [1, 2]}


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b[:-1],
        lambda b: b + b"\x00",
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:4] + bytes([200]) + b[5:],
    ],
    ids=["truncated", "trailing", "magic", "kind"],
)
def test_deserialize_rejects_malformed(mutate):
    raw = canonical_serialize(new_message(Kind.CERT1, "s", "c", (BANK_A,), {"a": 1}))
    with pytest.raises(SerializationError):
        canonical_deserialize(mutate(raw))


def test_deserialize_rejects_unsorted_keys():
    raw = bytearray(canonical_serialize(new_message(Kind.CERT1, "s", "c", (BANK_A,), {"a": 1, "b": 2})))
    i, j = raw.index(_s("a")), raw.index(_s("b"))
    raw[i + 4], raw[j + 4] = raw[j + 4], raw[i + 4]
    with pytest.raises(SerializationError):
        canonical_deserialize(bytes(raw))


def test_unsupported_body_values():
    with pytest.raises(SerializationError):
        canonical_serialize(new_message(Kind.CERT1, "s", "c", (BANK_A,), {"f": 1.0}))
    with pytest.raises(SerializationError):
        canonical_serialize(new_message(Kind.CERT1, "s", "c", (BANK_A,), {"n": 2**70}))


json_like = st.recursive(
    st.none() | st.booleans() | st.integers(-(2**63), 2**63 - 1) | st.text(max_size=8) | st.binary(max_size=8),
    lambda inner: st.lists(inner, max_size=4) | st.dictionaries(st.text(max_size=6), inner, max_size=4),
    max_leaves=12,
)


@given(st.dictionaries(st.text(max_size=6), json_like, max_size=5), st.text(max_size=10), st.text(max_size=10))
def test_serialization_round_trip(body, session, chan):
    msg = new_message(Kind.DISPUTE, session, chan, (ALICE,), body)
    raw = canonical_serialize(msg)
    back = canonical_deserialize(raw)
    assert back == msg
    assert canonical_serialize(back) == raw


# ---------------------------------------------------------------- signatures


@pytest.fixture(scope="module", params=[Scheme.ED25519, Scheme.HMAC_SHA256], ids=lambda s: s.value)
def world(request):
    keys = make_keys(3, request.param)
    return keys, KeyDirectory(keys.values())


def test_keys_are_deterministic_per_seed():
    p = PartyId("alice", Role.PARTICIPANT)
    assert derive_keypair(p, 1).public == derive_keypair(p, 1).public
    assert derive_keypair(p, 1).public != derive_keypair(p, 2).public
    assert len(derive_keypair(p, 1).public) == 32


def test_chain_upgrades_kind_as_signatures_accumulate(world):
    keys, d = world
    m = new_message(Kind.M_A1, "s", "c", (ALICE, INGRID, BANK_A, BANK_I), {"amount": 10})
    kinds = []
    for who in ("alice", "ingrid", "bank_a", "bank_i"):
        m = sign(keys[who], m)
        kinds.append(m.kind)
        assert verify(m, d)
    assert tuple(kinds) == CHAIN
    assert m.next_signer is None
    with pytest.raises(WrongSigner):
        sign(keys["bank_i"], m)


def test_prefix_recovers_earlier_stages(world):
    keys, d = world
    m = new_message(Kind.M_A1, "s", "c", (ALICE, INGRID, BANK_A, BANK_I), {"amount": 10})
    m_a1 = sign(keys["alice"], m)
    m_a1i1 = sign(keys["ingrid"], m_a1)
    full = sign(keys["bank_i"], sign(keys["bank_a"], m_a1i1))
    assert full.prefix(2) == m_a1i1
    assert full.prefix(1) == m_a1
    assert verify(full.prefix(3), d)
    with pytest.raises(ValueError):
        full.prefix(5)


def test_two_party_chain_stops_at_countersignature(world):
    keys, d = world
    m = sign(keys["ingrid"], sign(keys["alice"], new_message(Kind.M_A1, "s", "c", (ALICE, INGRID), {})))
    assert m.kind is Kind.M_A1I1 and m.complete and m.next_signer is None
    assert verify(m, d)


def test_wrong_signer_and_wrong_role(keys):
    with pytest.raises(WrongSigner):
        new_message(Kind.CERT1, "s", "c", (ALICE,), {})
    m = new_message(Kind.CHANNEL_UPDATE, "", "c", (ALICE, INGRID), {})
    with pytest.raises(WrongSigner):
        sign(keys["ingrid"], m)


def test_partial_verification(keys, directory):
    m = sign(keys["alice"], new_message(Kind.CHANNEL_UPDATE, "", "c", (ALICE, INGRID), {"x": 1}))
    assert not verify(m, directory)
    assert verify_partial(m, directory)
    assert not verify_partial(replace(m, body={"x": 2}), directory)


def test_unknown_signer_fails(keys):
    d = KeyDirectory([keys["alice"]])
    m = sign(keys["bank_a"], new_message(Kind.CERT1, "s", "c", (BANK_A,), {}))
    assert not verify(m, d)


def test_impostor_with_same_name_other_role_fails(keys, directory):
    fake = PartyId("bank_a", Role.PARTICIPANT)
    k = derive_keypair(fake, 7)
    m = new_message(Kind.DISPUTE, "s", "c", (fake,), {})
    m = replace(m, signatures=(Signature("bank_a", b"\x00" * 64),))
    assert not verify(m, directory)
    assert k.party != directory.party("bank_a")


_SOUND_KEYS = make_keys(11)
_SOUND_DIR = KeyDirectory(_SOUND_KEYS.values())
_BASE = sign(
    _SOUND_KEYS["ingrid"],
    sign(_SOUND_KEYS["alice"], new_message(Kind.M_A1, "rb", "ch", (ALICE, INGRID), {"amount": 10, "ref": "x"})),
)
_RAW = canonical_serialize(_BASE)


@settings(max_examples=1000, deadline=None)
@given(st.integers(min_value=0, max_value=len(_RAW) - 1), st.integers(min_value=1, max_value=255))
def test_any_single_byte_change_breaks_verification(pos, flip):
    raw = bytearray(_RAW)
    raw[pos] ^= flip
    try:
        msg = canonical_deserialize(bytes(raw))
    except (SerializationError, ValueError):
        return
    assert not verify(msg, _SOUND_DIR)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(st.text(max_size=5), st.integers(-1000, 1000), min_size=1, max_size=4))
def test_signature_does_not_transfer_to_other_bodies(body):
    if body == _BASE.body:
        return
    assert not verify(replace(_BASE, body=body), _SOUND_DIR)
