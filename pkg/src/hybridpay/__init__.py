"""Payment channels re-balanced through ordinary bank transfers.

Two channel participants swap channel value for an equivalent fiat transfer
between their banks.  Channel-side locks release on bank certificates or
expire to collateral-backed fallbacks, and a regulator adjudicates bank
misbehaviour after the fact.
"""

from .channel import ChannelState, LedgerAnchor, open_channel
from .core import KeyDirectory, PartyId, Role, Scheme, SignedMessage, Value, derive_keypair, sign, verify
from .errors import HybridPayError
from .rebalance import Alternative, Phase, RebalanceSession
from .sim import audit_trace, run

__version__ = "0.1.0"

__all__ = [
    "Alternative",
    "ChannelState",
    "HybridPayError",
    "KeyDirectory",
    "LedgerAnchor",
    "PartyId",
    "Phase",
    "RebalanceSession",
    "Role",
    "Scheme",
    "SignedMessage",
    "Value",
    "audit_trace",
    "derive_keypair",
    "open_channel",
    "run",
    "sign",
    "verify",
]
