"""Protocol error hierarchy.

Every error carries a wire-level reason code (a short PascalCase string). When a
manager rejects a request, the reason code travels in the response envelope and is
re-raised on the calling side as the matching exception type.
"""

from __future__ import annotations


class BerytusError(Exception):
    """Base class; ``code`` is the wire-level reason string."""

    code = "GeneralError"
    _registry: dict[str, type["BerytusError"]] = {}

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        BerytusError._registry[cls.code] = cls

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


def error_for_code(code: str, message: str = "") -> BerytusError:
    """Build the exception registered for ``code`` (generic fallback otherwise)."""
    cls = BerytusError._registry.get(code)
    if cls is None:
        err = BerytusError(message or code)
        err.code = code
        return err
    return cls(message)


# --- actor / certificate errors -------------------------------------------------

class NonHttpsScheme(BerytusError):
    code = "NonHttpsScheme"

class MalformedUri(BerytusError):
    code = "MalformedUri"

class UntrustedRoot(BerytusError):
    code = "UntrustedRoot"

class SignatureInvalid(BerytusError):
    code = "SignatureInvalid"

class Expired(BerytusError):
    code = "Expired"

class NotYetValid(BerytusError):
    code = "NotYetValid"

class KeyNotAllowlisted(BerytusError):
    code = "KeyNotAllowlisted"

class UriNotPermitted(BerytusError):
    code = "UriNotPermitted"


# --- crypto kernel errors -------------------------------------------------------

class UnencodableValue(BerytusError):
    code = "UnencodableValue"

class AllZeroOutput(BerytusError):
    code = "AllZeroOutput"

class AuthFailure(BerytusError):
    code = "AuthFailure"

class ReplayDetected(BerytusError):
    code = "ReplayDetected"


# --- channel / orchestrator errors ----------------------------------------------

class DuplicateManagerId(BerytusError):
    code = "DuplicateManagerId"

class UnknownManager(BerytusError):
    code = "UnknownManager"

class NoManagerAvailable(BerytusError):
    code = "NoManagerAvailable"

class ActorValidationFailed(BerytusError):
    code = "ActorValidationFailed"

class ManagerRejectedChannel(BerytusError):
    code = "ManagerRejectedChannel"

class ChannelBusy(BerytusError):
    code = "ChannelBusy"

class ChannelClosed(BerytusError):
    code = "ChannelClosed"

class E2EEUnavailable(BerytusError):
    code = "E2EEUnavailable"

class KeyConfirmationFailed(BerytusError):
    code = "KeyConfirmationFailed"

class UnknownKind(BerytusError):
    code = "UnknownKind"

class SealOpenFailed(BerytusError):
    code = "SealOpenFailed"


# --- operation / field errors ---------------------------------------------------

class ManagerRejectedOperation(BerytusError):
    code = "ManagerRejectedOperation"

class IntentMismatch(BerytusError):
    code = "IntentMismatch"

class WebAppCannotProduce(BerytusError):
    code = "WebAppCannotProduce"

class DuplicateFieldId(BerytusError):
    code = "DuplicateFieldId"

class ValueViolatesOptions(BerytusError):
    code = "ValueViolatesOptions"

class UnknownField(BerytusError):
    code = "UnknownField"

class RevisionNotAllowed(BerytusError):
    code = "RevisionNotAllowed"

class ManagerRefusedRevision(BerytusError):
    code = "ManagerRefusedRevision"

class UnknownClaimName(BerytusError):
    code = "UnknownClaimName"

class ManagerDeclined(BerytusError):
    code = "ManagerDeclined"

class IncompleteFields(BerytusError):
    code = "IncompleteFields"

class StorageFailure(BerytusError):
    code = "StorageFailure"

class NothingSaved(BerytusError):
    code = "NothingSaved"


# --- challenge errors -----------------------------------------------------------

class ManagerRejectedChallenge(BerytusError):
    code = "ManagerRejectedChallenge"

class ChallengeAlreadyActive(BerytusError):
    code = "ChallengeAlreadyActive"

class InvalidSchema(BerytusError):
    code = "InvalidSchema"

class ProtocolViolation(BerytusError):
    code = "ProtocolViolation"

class SchemaViolation(BerytusError):
    code = "SchemaViolation"

class NotActive(BerytusError):
    code = "NotActive"

class NotAbortable(BerytusError):
    code = "NotAbortable"

class UnsupportedSchemaFeature(BerytusError):
    code = "UnsupportedSchemaFeature"


class ManagerAborted(BerytusError):
    """The manager aborted the running challenge; ``reason`` is an AbortReason code."""

    code = "ManagerAborted"

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or f"challenge aborted: {reason}")
        self.reason = reason


# --- SRP errors -----------------------------------------------------------------

class InvalidServerEphemeral(BerytusError):
    code = "InvalidServerEphemeral"

class InvalidClientEphemeral(BerytusError):
    code = "InvalidClientEphemeral"

class ProofMismatch(BerytusError):
    code = "ProofMismatch"


# --- manager / store errors -----------------------------------------------------

class UnsatisfiablePolicy(BerytusError):
    code = "UnsatisfiablePolicy"

class StrategyMismatch(BerytusError):
    code = "StrategyMismatch"

class MappingMismatch(BerytusError):
    code = "MappingMismatch"


# --- web app / harness errors ---------------------------------------------------

class UnknownIdentity(BerytusError):
    code = "UnknownIdentity"

class ParseError(BerytusError):
    code = "ParseError"

class ExpectationFailed(BerytusError):
    code = "ExpectationFailed"
