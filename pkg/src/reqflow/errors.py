"""Error taxonomy shared by every layer.

Each exception carries a stable machine-readable ``code`` (the class name)
plus a ``details`` dict that survives into API error envelopes and CLI
output unchanged.
"""

from __future__ import annotations

from typing import Any


class ReqflowError(Exception):
    """Base class; ``code`` is the wire-visible error identifier."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    @property
    def code(self) -> str:
        return type(self).__name__

    def envelope(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


# -- core-domain ------------------------------------------------------------

class MissingRequirement(ReqflowError):
    pass


class DuplicateRequirement(ReqflowError):
    pass


class DeprecatedRequirement(ReqflowError):
    pass


# -- workflow ---------------------------------------------------------------

class IllegalTransition(ReqflowError):
    pass


class ForbiddenRole(ReqflowError):
    pass


class InconsistentDelta(ReqflowError):
    pass


class UnknownActor(ReqflowError):
    pass


class UnknownRequirement(ReqflowError):
    pass


class UnknownChangeRequest(ReqflowError):
    pass


class UnknownSite(ReqflowError):
    pass


class EmptyTargets(ReqflowError):
    pass


class InvalidSeverity(ReqflowError):
    pass


class ValidationFailed(ReqflowError):
    pass


class NoVotes(ReqflowError):
    pass


class QuorumUnreachable(ReqflowError):
    pass


class VerificationIncomplete(ReqflowError):
    pass


# -- impact -----------------------------------------------------------------

class NoSites(ReqflowError):
    pass


class MissingScore(ReqflowError):
    pass


# -- replication ------------------------------------------------------------

class IllegalState(ReqflowError):
    pass


class ApplyFailed(ReqflowError):
    pass


class HashMismatch(ReqflowError):
    pass


# -- persistence ------------------------------------------------------------

class StorageFailure(ReqflowError):
    pass


class ChainBroken(ReqflowError):
    pass


class UnknownEventKind(ReqflowError):
    pass


# -- boundary ---------------------------------------------------------------

class NotFound(ReqflowError):
    pass


class MalformedBody(ReqflowError):
    pass


class UsageError(ReqflowError):
    pass


class ConfigError(ReqflowError):
    pass
