"""Exception hierarchy shared by every hybridpay module."""

from __future__ import annotations


class HybridPayError(Exception):
    """Base class for all errors raised by hybridpay."""


# core

class InvalidValue(HybridPayError):
    """Base for invalid `Value` arithmetic."""


class NegativeValue(InvalidValue):
    pass


class UnitMismatch(InvalidValue):
    pass


class ValueOverflow(InvalidValue):
    pass


class WrongSigner(HybridPayError):
    """The key does not belong to the next required signer."""


class SerializationError(HybridPayError):
    pass


class UnknownParty(HybridPayError):
    pass


# channel

class InvalidParty(HybridPayError):
    pass


class ZeroDeposit(HybridPayError):
    pass


class ConservationViolation(HybridPayError):
    pass


class StaleSeq(HybridPayError):
    pass


class BadSignature(HybridPayError):
    pass


class UnknownLock(HybridPayError):
    pass


class ConditionNotMet(HybridPayError):
    pass


class AlreadyClosed(HybridPayError):
    pass


class ChannelBusy(HybridPayError):
    """Ordinary updates are refused while locks are outstanding."""


class LocksPending(HybridPayError):
    """Close requested while a lock can neither release nor time out yet."""


class DisputeWindowOpen(HybridPayError):
    pass


class InsufficientBalance(HybridPayError):
    pass


# rebalance

class AmountExceedsBalance(HybridPayError):
    pass


class SessionAlreadyActive(HybridPayError):
    pass


class NotCountersigned(HybridPayError):
    pass


class InvalidRole(HybridPayError):
    pass


class UnregisteredIssuer(HybridPayError):
    pass


class WrongSession(HybridPayError):
    pass


class PhaseError(HybridPayError):
    pass


class NoDeadlinePending(HybridPayError):
    pass


class InsufficientEvidence(HybridPayError):
    pass


# extrail

class InsufficientFiat(HybridPayError):
    pass


class UnknownCustomer(HybridPayError):
    pass


class Inadmissible(HybridPayError):
    pass


class ReversalRefused(HybridPayError):
    pass


# sim / cli

class InvalidScenario(HybridPayError):
    pass


class GridTooLarge(HybridPayError):
    pass


class TraceFormatError(HybridPayError):
    pass
