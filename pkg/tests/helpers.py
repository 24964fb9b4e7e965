from __future__ import annotations

import time

from hybridpay.core import new_message, sign
from hybridpay.rebalance import accept, accept_certificate, initiate, on_timeout, propose_registration, register_sources


def balances(state):
    return state.balance_a.amount, state.balance_i.amount


class Flow:
    """Drives one session through the channel-side steps with hand-made bank messages."""

    def __init__(self, shifted, keys, directory, alternative, c_a=2, c_i=3, **kw):
        self.keys, self.d = keys, directory
        self.state, _ = shifted
        self.session, self.m_a1 = initiate(
            self.state, keys["alice"], 10, c_a, c_i, alternative,
            bank_a=keys["bank_a"].party, bank_i=keys["bank_i"].party, now=2, **kw,
        )
        self.session, self.m_a1i1, self.state = accept(self.session, self.m_a1, self.state, keys["ingrid"], directory, 3)
        reg = propose_registration(self.session, keys["alice"], [keys["bank_a"].party, keys["bank_i"].party])
        self.session = register_sources(self.session, sign(keys["ingrid"], reg), directory)

    def cert(self, kind, bank, ref=None):
        body = {"ref": ref or self.session.order_ref, "assertion": "x"}
        msg = new_message(kind, self.session.session_id, self.state.channel_id, (self.keys[bank].party,), body)
        return sign(self.keys[bank], msg)

    def chain(self, n):
        m = self.m_a1i1
        for bank in ("bank_a", "bank_i")[: n - 2]:
            m = sign(self.keys[bank], m)
        return m

    def apply(self, msg, now):
        self.session, self.state = accept_certificate(self.session, self.state, msg, self.d, now)
        return self

    def timeout(self, now):
        self.session, self.state = on_timeout(self.session, self.state, now, self.d)
        return self


# acceptance criteria record their verdicts here; conftest prints them at the end of the session
ACCEPTANCE: dict[int, str] = {}


class Criterion:
    """Times one acceptance criterion and records a single PASS/FAIL line for it."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.detail = ""
        self.elapsed = None  # set when the measured work ran outside the block (cached grids)

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = self.elapsed if self.elapsed is not None else time.perf_counter() - self.start
        status = "PASS" if exc_type is None else "FAIL"
        extra = self.detail if exc_type is None else (str(exc).splitlines() or [exc_type.__name__])[0]
        line = f"criterion {self.number} {status}: {self.title} [{elapsed:.2f}s] {extra}".rstrip()
        ACCEPTANCE[self.number] = line
        print(line)
        return False
