from __future__ import annotations

from dataclasses import replace

import pytest

from hybridpay.core import Kind, fiat, sign
from hybridpay.errors import InsufficientFiat, ReversalRefused
from hybridpay.extrail import (
    BankLedger,
    Deliver,
    Emit,
    Inadmissible,
    adjudicate,
    enforce,
    execute_agreed,
    fiat_total,
    order_defect,
    process_order,
    receive_delivery,
    relay_alternative2,
    request_reversal,
    shortfalls,
)
from hybridpay.rebalance import raise_dispute, submit_to_bank

from .helpers import Flow


def banks(keys, a="HONEST", i="HONEST", alice=100):
    return (
        BankLedger(keys["bank_a"], {"alice": alice}, 1000, a),
        BankLedger(keys["bank_i"], {"ingrid": 100}, 1000, i),
    )


def setup(shifted, keys, directory, alternative="ALT1_DESIGN1", a="HONEST", i="HONEST", **kw):
    f = Flow(shifted, keys, directory, alternative, **kw)
    order = submit_to_bank(f.session, f.m_a1i1, 4)
    bank_a, bank_i = banks(keys, a, i)
    bank_a.receive(5, order=order)
    return f, order, bank_a, bank_i


def run_alt1(f, order, bank_a, bank_i, directory):
    """Push an Alternative-1 order through both banks; returns the certificates emitted."""
    effects = process_order(bank_a, order, 5, directory)
    certs = [e.message for e in effects if isinstance(e, Emit)]
    for d in (e for e in effects if isinstance(e, Deliver)):
        bank_i.receive(d.at, order=d.order)
        certs += [e.message for e in receive_delivery(bank_i, bank_a, d.order, d.at + 1, d.at)]
    return certs


def money(bank_a, bank_i):
    return bank_a.accounts["alice"].amount, bank_i.accounts["ingrid"].amount


# ---------------------------------------------------------------- banks


def test_honest_alt1_moves_money_and_certifies(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory)
    total0 = fiat_total([a, i])
    certs = run_alt1(f, order, a, i, directory)
    assert money(a, i) == (90, 110)
    assert [c.kind for c in certs] == [Kind.CERT1]
    assert certs[0].body["ref"] == f.session.order_ref
    assert fiat_total([a, i]) == total0
    assert not a.deviations and not i.deviations


def test_receipt_design_adds_cert2(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, "ALT1_DESIGN2")
    assert [c.kind for c in run_alt1(f, order, a, i, directory)] == [Kind.CERT1, Kind.CERT2]


def test_confirm_no_execute_certifies_without_debit(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, a="CONFIRM_NO_EXECUTE")
    certs = run_alt1(f, order, a, i, directory)
    assert [c.kind for c in certs] == [Kind.CERT1]
    assert money(a, i) == (100, 100)
    assert [w for _, _, w in a.deviations] == ["confirmed_not_executed"]


def test_receive_no_credit_parks_value_in_suspense(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, i="RECEIVE_NO_CREDIT")
    run_alt1(f, order, a, i, directory)
    assert money(a, i) == (90, 100)
    assert i.suspense == fiat(10)
    assert [w for _, _, w in i.deviations] == ["received_not_credited"]


def test_silent_bank_does_nothing(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, a="SILENT")
    assert process_order(a, order, 5, directory) == []
    assert money(a, i) == (100, 100)
    assert [w for _, _, w in a.deviations] == ["order_ignored"]


def test_slow_bank_is_late_only_past_deadline(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, a="SLOW")
    process_order(a, order, 5 + 5, directory)
    assert not a.deviations
    f, order, a, i = setup(shifted, keys, directory, a="SLOW")
    process_order(a, order, 5 + 6, directory)
    assert [w for _, _, w in a.deviations] == ["late"]


def test_invalid_orders_are_refused(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory)
    assert order_defect(a, replace(order, registration=None), directory) == "not_registered"
    assert order_defect(a, replace(order, amount=fiat(20)), directory) == "terms_mismatch"
    forged = replace(order.authorization, body=dict(order.authorization.body, fiat_amount=20))
    assert order_defect(a, replace(order, authorization=forged), directory) == "authorization_invalid"
    assert process_order(a, replace(order, registration=None), 5, directory) == []
    assert a.entries(order.session_ref, "order_refused")[0].get("reason") == "not_registered"


def test_insufficient_funds(shifted, keys, directory):
    f = Flow(shifted, keys, directory, "ALT1_DESIGN1")
    order = submit_to_bank(f.session, f.m_a1i1, 4)
    a, _ = banks(keys, alice=5)
    with pytest.raises(InsufficientFiat):
        process_order(a, order, 5, directory)
    assert a.accounts["alice"] == fiat(5)


def test_alt2_forward_agree_execute(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, "ALT2")
    (fwd,) = process_order(a, order, 5, directory)
    assert fwd.message.kind is Kind.M_A1I1BA1 and money(a, i) == (100, 100)
    agreed = relay_alternative2(i, fwd.message, 6, directory)
    assert agreed.kind is Kind.M_A1I1BA1BI1
    (d,) = execute_agreed(a, agreed, 7, directory)
    receive_delivery(i, a, d.order, 8)
    assert money(a, i) == (90, 110)
    assert execute_agreed(a, agreed, 9, directory) == []


def test_alt2_relay_refuses_broken_chain(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, "ALT2")
    (fwd,) = process_order(a, order, 5, directory)
    bad = replace(fwd.message, body=dict(fwd.message.body, amount=1))
    assert relay_alternative2(i, bad, 6, directory) is None
    # the tampered chain's prefix hashes to another reference
    assert [e.get("reason") for e in i.journal if e.event == "relay_refused"] == ["chain_invalid"]


def test_request_to_pay_is_never_reversible(shifted, keys, directory):
    f = Flow(shifted, keys, directory, "ALT1_DESIGN1", method="request-to-pay")
    order = submit_to_bank(f.session, f.m_a1i1, 4, irreversible_after=50)
    a, i = banks(keys)
    process_order(a, order, 5, directory)
    with pytest.raises(ReversalRefused):
        request_reversal(a, i, order, 5)


def test_push_reversal_window(shifted, keys, directory):
    f = Flow(shifted, keys, directory, "ALT1_DESIGN1")
    order = submit_to_bank(f.session, f.m_a1i1, 4, irreversible_after=3)
    a, i = banks(keys)
    process_order(a, order, 5, directory)
    request_reversal(a, i, order, 6)
    assert money(a, i) == (100, 100) and not a.in_flight
    order2 = replace(order, order_id="o2")
    a2, i2 = banks(keys)
    process_order(a2, order2, 5, directory)
    with pytest.raises(ReversalRefused):
        request_reversal(a2, i2, order2, 8)


# ---------------------------------------------------------------- shortfalls

TERMS = {
    "payer": "alice", "payee": "ingrid", "amount": 10, "fiat_amount": 10,
    "collateral_payer": 2, "collateral_payee": 3,
    "dispositions": {"payer_collateral_on_revert": "payee", "payee_collateral_on_compensation": "payer"},
}


@pytest.mark.parametrize(
    "outcome,debited,credited,expected",
    [
        ("SETTLED", True, True, {"alice": 0, "ingrid": 0}),
        ("SETTLED", False, False, {"alice": 0, "ingrid": 10}),
        ("SETTLED", True, False, {"alice": 0, "ingrid": 10}),
        ("REVERTED", False, False, {"alice": 2, "ingrid": 0}),
        ("REVERTED", True, False, {"alice": 12, "ingrid": 0}),
        ("SETTLED_WITH_COMPENSATION", True, False, {"alice": 0, "ingrid": 13}),
        ("SETTLED_WITH_COMPENSATION", True, True, {"alice": 0, "ingrid": 3}),
        (None, False, False, {"alice": 0, "ingrid": 0}),
    ],
)
def test_shortfalls(outcome, debited, credited, expected):
    assert shortfalls(TERMS, outcome, debited, credited, 1) == expected


def test_shortfalls_scale_with_rate():
    terms = dict(TERMS, fiat_amount=30)
    assert shortfalls(terms, "REVERTED", True, False, 3) == {"alice": 36, "ingrid": 0}


# ---------------------------------------------------------------- regulator


def _settle(f, certs, now=9):
    for c in certs:
        if c.kind is Kind.CERT1:
            f.apply(c, now)


def test_verdict_blames_confirming_bank(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, a="CONFIRM_NO_EXECUTE")
    certs = run_alt1(f, order, a, i, directory)
    _settle(f, certs)
    _, case = raise_dispute(f.session, keys["ingrid"], certs, directory, 30)
    v = adjudicate(case, a, i, directory, keys["regulator"])
    assert v.culprits == ("bank_a",) and v.faults == (("bank_a", "confirmed_not_executed"),)
    assert [(r.debtor, r.beneficiary, r.amount.amount) for r in v.remedies] == [("bank_a", "ingrid", 10)]
    assert v.message.kind is Kind.VERDICT
    enforce(v, {"bank_a": a, "bank_i": i}, 31)
    assert money(a, i) == (100, 110) and a.equity == fiat(990)


def test_verdict_blames_withholding_bank(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, i="RECEIVE_NO_CREDIT")
    certs = run_alt1(f, order, a, i, directory)
    _settle(f, certs)
    _, case = raise_dispute(f.session, keys["ingrid"], certs, directory, 30)
    v = adjudicate(case, a, i, directory)
    assert v.culprit == "bank_i" and v.rationale == "received_not_credited"


def test_honest_run_has_no_culprit(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory)
    certs = run_alt1(f, order, a, i, directory)
    _settle(f, certs)
    _, case = raise_dispute(f.session, keys["ingrid"], certs, directory, 30)
    v = adjudicate(case, a, i, directory)
    assert v.culprits == () and v.remedies == () and v.rationale == "completed"


def test_unprocessed_order_is_late_at_filing_time(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, a="SLOW")
    f.timeout(23)
    _, case = raise_dispute(f.session, keys["alice"], [], directory, 30)
    v = adjudicate(case, a, i, directory)
    assert v.culprit == "bank_a"
    assert [(r.beneficiary, r.amount.amount) for r in v.remedies] == [("alice", 2)]


def test_inadmissible_cases(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory)
    certs = run_alt1(f, order, a, i, directory)
    _settle(f, certs)
    _, case = raise_dispute(f.session, keys["ingrid"], certs, directory, 30)
    with pytest.raises(Inadmissible):
        adjudicate(replace(case, message=replace(case.message, body={"forged": True})), a, i, directory)
    with pytest.raises(Inadmissible):
        adjudicate(replace(case, evidence=certs), a, i, directory)
    with pytest.raises(Inadmissible):
        adjudicate(replace(case, evidence=(f.m_a1i1,)), a, i, directory)
    with pytest.raises(Inadmissible):
        adjudicate(case, i, a, directory)


def test_enforce_pays_only_what_is_still_owed(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, a="CONFIRM_NO_EXECUTE")
    certs = run_alt1(f, order, a, i, directory)
    _settle(f, certs)
    _, case = raise_dispute(f.session, keys["ingrid"], certs, directory, 30)
    v = adjudicate(case, a, i, directory)
    all_banks = {"bank_a": a, "bank_i": i}
    assert len(enforce(v, all_banks, 31)) == 1
    assert enforce(v, all_banks, 32) == []
    bigger = replace(v, remedies=(replace(v.remedies[0], amount=fiat(14)),))
    (topup,) = enforce(bigger, all_banks, 33)
    assert topup.amount == fiat(4)
    assert money(a, i) == (100, 114)


def test_recoup_after_remedy(shifted, keys, directory):
    f, order, a, i = setup(shifted, keys, directory, i="SLOW")
    (cert1, d) = process_order(a, order, 5, directory)
    i.receive(d.at, order=d.order)
    i.equity = i.equity - fiat(10)
    i.accounts["ingrid"] = i.accounts["ingrid"] + fiat(10)
    i.record(20, "remedy_paid", order.session_ref, to="ingrid", amount=10)
    receive_delivery(i, a, d.order, 30, d.at)
    assert money(a, i) == (90, 110) and i.equity == fiat(1000)
    assert i.entries(order.session_ref, "recouped")
