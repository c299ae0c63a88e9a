"""Exception hierarchy shared by all toolkit modules.

Exit-code mapping for the CLI: precondition / contract violations exit
with 2, numerical failures with 3.
"""

from __future__ import annotations


class OckrError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class PreconditionError(OckrError):
    """A caller violated an operation's contract (bad inputs, bad files)."""

    exit_code = 2


class PackFormatError(PreconditionError):
    """A feature pack on disk is malformed or inconsistent."""


class ProtocolError(PreconditionError):
    """A training-protocol violation, e.g. attack-labelled rows in enrolment."""


class NumericalError(OckrError):
    """A numerical procedure failed beyond recovery (jitter escalation exhausted)."""

    exit_code = 3
