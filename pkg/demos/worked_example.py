"""Re-balance a channel by hand, one protocol step at a time.

Alice and Ingrid open a channel {20, 10}, trade it down to {10, 20}, then
restore {20, 10} by having Alice's bank wire 10 to Ingrid's bank. Every
message below is really signed and verified.

    python demos/worked_example.py
"""

from hybridpay.channel import accept_update, open_channel, propose_update
from hybridpay.core import KeyDirectory, PartyId, Role, derive_keypair, sign
from hybridpay.extrail import BankLedger, Deliver, Emit, process_order, receive_delivery
from hybridpay.rebalance import accept, accept_certificate, initiate, propose_registration, register_sources, submit_to_bank

roles = {"alice": Role.PARTICIPANT, "ingrid": Role.PARTICIPANT, "bank_a": Role.BANK, "bank_i": Role.BANK}
keys = {n: derive_keypair(PartyId(n, r), seed=1) for n, r in roles.items()}
directory = KeyDirectory(keys.values())


def show(label, state):
    locked = sum(l.amount.amount for l in state.locks)
    print(f"{label:<34} alice={state.balance_a.amount:<3} ingrid={state.balance_i.amount:<3} locked={locked}")


state, anchor = open_channel(keys["alice"], keys["ingrid"], 20, 10, 10, "demo", directory)
show("opened", state)

state = accept_update(state, propose_update(state, keys["alice"], 10, 20), keys["ingrid"], directory)
show("after trading", state)

# Alice proposes; Ingrid countersigns, which locks both sides' stakes
session, m_a1 = initiate(
    state, keys["alice"], 10, 2, 3, "ALT1_DESIGN1",
    bank_a=keys["bank_a"].party, bank_i=keys["bank_i"].party, now=2,
)
session, m_a1i1, state = accept(session, m_a1, state, keys["ingrid"], directory, now=3)
show("accepted, stakes locked", state)

reg = propose_registration(session, keys["alice"], [keys["bank_a"].party, keys["bank_i"].party])
session = register_sources(session, sign(keys["ingrid"], reg), directory)

bank_a = BankLedger(keys["bank_a"], {"alice": 100})
bank_i = BankLedger(keys["bank_i"], {"ingrid": 100})

order = submit_to_bank(session, m_a1i1, now=4)
certs = []
for effect in process_order(bank_a, order, 5, directory):
    if isinstance(effect, Emit):
        certs.append(effect.message)
    elif isinstance(effect, Deliver):
        print(f"bank_a debits alice, funds arrive at tick {effect.at}")
        for e in receive_delivery(bank_i, bank_a, effect.order, effect.at):
            if isinstance(e, Emit):
                certs.append(e.message)

for cert in certs:
    print(f"  {cert.kind.value} signed by {cert.signers[0].name}")
    session, state = accept_certificate(session, state, cert, directory, now=7)
show(f"session {session.phase.value}", state)

print(f"fiat: alice={bank_a.accounts['alice'].amount} ingrid={bank_i.accounts['ingrid'].amount}")
