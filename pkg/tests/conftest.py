from __future__ import annotations

import pytest

from hybridpay.channel import accept_update, open_channel, propose_update
from hybridpay.core import KeyDirectory, PartyId, Role, Scheme, derive_keypair

NAMES = {
    "alice": Role.PARTICIPANT,
    "ingrid": Role.PARTICIPANT,
    "bank_a": Role.BANK,
    "bank_i": Role.BANK,
    "regulator": Role.REGULATOR,
}


def make_keys(seed: int = 7, scheme: Scheme = Scheme.ED25519) -> dict:
    return {n: derive_keypair(PartyId(n, r), seed, scheme) for n, r in NAMES.items()}


@pytest.fixture(scope="session")
def keys():
    return make_keys()


@pytest.fixture(scope="session")
def directory(keys):
    return KeyDirectory(keys.values())


@pytest.fixture
def opened(keys, directory):
    """A {20, 10} channel and its anchor."""
    return open_channel(keys["alice"], keys["ingrid"], 20, 10, 10, "ch", directory)


@pytest.fixture
def shifted(opened, keys, directory):
    """The worked-example starting point: {20, 10} moved to {10, 20} by one update."""
    state, anchor = opened
    msg = propose_update(state, keys["alice"], 10, 20)
    return accept_update(state, msg, keys["ingrid"], directory), anchor


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
