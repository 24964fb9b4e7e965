"""Discrete-event simulation, trace auditing and fault-grid enumeration."""

from .audit import audit_text, audit_trace, parse_trace
from .config import library, library_names, load
from .engine import SimResult, Simulation, run

__all__ = [
    "SimResult",
    "Simulation",
    "audit_text",
    "audit_trace",
    "library",
    "library_names",
    "load",
    "parse_trace",
    "run",
]
