"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so every failure mode that a
user can trigger from the outside has a dedicated class here.
"""

from __future__ import annotations


class CodesmoothError(Exception):
    """Base class for all errors raised by this package."""


class LexError(CodesmoothError):
    """Malformed source input, such as an unterminated string or comment."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class AlignmentError(CodesmoothError):
    """Two snippets do not share the structure a comparison requires."""


class RenameError(CodesmoothError):
    """An identifier rename is unknown, invalid, or collides."""


class PerturbationError(CodesmoothError):
    """No valid perturbed name could be produced within the attempt budget."""


class NumericsError(CodesmoothError):
    """A numeric routine was called outside its domain or failed to converge."""


class DataError(CodesmoothError):
    """A dataset, certificate, or report file is malformed."""


class AdapterError(CodesmoothError):
    """Base class for classifier adapter failures."""


class TransportError(AdapterError):
    """The classifier could not be reached or timed out; retried per policy."""


class ProtocolError(AdapterError):
    """The classifier answered, but the payload violates the wire contract."""
