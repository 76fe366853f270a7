"""Web-app-side challenge lifecycle.

Challenges run strictly one at a time per operation. A challenge is created in
PendingApproval, becomes Active once the manager approves it, and ends in exactly
one of Closed (success) or Aborted. The manager signals its own aborts by
rejecting a message with an ``Aborted:<reason>`` code, which surfaces here as
:class:`~berytus.errors.ManagerAborted`.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from . import errors
from .errors import BerytusError
from .operations import LoginOperation
from .schema import check_schema

KIND_IDENTIFICATION = "Identification"
KIND_PASSWORD = "Password"
KIND_DIGITAL_SIGNATURE = "DigitalSignature"
KIND_SECURE_REMOTE_PASSWORD = "SecureRemotePassword"
KIND_OFF_CHANNEL_OTP = "OffChannelOtp"
KIND_CUSTOM = "Custom"

CHALLENGE_KINDS = (
    KIND_IDENTIFICATION,
    KIND_PASSWORD,
    KIND_DIGITAL_SIGNATURE,
    KIND_SECURE_REMOTE_PASSWORD,
    KIND_OFF_CHANNEL_OTP,
    KIND_CUSTOM,
)

ABORT_GENERAL_ERROR = "GeneralError"
ABORT_USER_INTERRUPT = "UserInterrupt"
ABORT_INCORRECT_RESPONSE = "IncorrectResponse"
ABORT_UNSUPPORTED = "UnsupportedChallenge"
ABORT_REASONS = (
    ABORT_GENERAL_ERROR,
    ABORT_USER_INTERRUPT,
    ABORT_INCORRECT_RESPONSE,
    ABORT_UNSUPPORTED,
)

PENDING = "PendingApproval"
ACTIVE = "Active"
CLOSED = "Closed"
ABORTED = "Aborted"
TERMINAL_STATES = (CLOSED, ABORTED)

# transport-level failures pass through approve_challenge unwrapped
_PASSTHROUGH = (
    errors.ChannelClosed,
    errors.ChannelBusy,
    errors.SealOpenFailed,
    errors.AuthFailure,
    errors.ReplayDetected,
)


@dataclass
class Challenge:
    operation: LoginOperation
    challenge_id: str
    kind: str
    parameters: dict = dc_field(default_factory=dict)
    state: str = PENDING
    abort_reason: str | None = None
    messages: list = dc_field(default_factory=list)

    def _finish(self, state: str, reason: str | None = None) -> None:
        self.state = state
        self.abort_reason = reason
        if self.operation.active_challenge is self:
            self.operation.active_challenge = None
        self.operation.challenge_log.append((self.challenge_id, self.kind, state))


def approve_challenge(
    operation: LoginOperation,
    kind: str,
    parameters: dict | None = None,
    *,
    challenge_id: str | None = None,
) -> Challenge:
    if operation.state != "Authenticating":
        raise errors.ProtocolViolation(
            f"operation is {operation.state}; challenges need Authenticating"
        )
    active = operation.active_challenge
    if active is not None and active.state not in TERMINAL_STATES:
        raise errors.ChallengeAlreadyActive(active.challenge_id)
    parameters = dict(parameters or {})
    if kind == KIND_CUSTOM:
        check_schema(parameters.get("schema"))
    operation.challenge_counter += 1
    challenge = Challenge(
        operation=operation,
        challenge_id=challenge_id or f"ch-{operation.challenge_counter}",
        kind=kind,
        parameters=parameters,
    )
    try:
        operation.channel.dispatch(
            "challenge.approve",
            {
                "operationId": operation.operation_id,
                "challengeId": challenge.challenge_id,
                "kind": kind,
                "parameters": parameters,
            },
        )
    except _PASSTHROUGH:
        raise
    except BerytusError as exc:
        raise errors.ManagerRejectedChallenge(exc.code) from exc
    challenge.state = ACTIVE
    operation.active_challenge = challenge
    return challenge


def challenge_send(challenge: Challenge, name: str, payload: dict) -> dict:
    """One request/response round inside an active challenge."""
    if challenge.state != ACTIVE:
        raise errors.NotActive(f"challenge is {challenge.state}")
    try:
        result = challenge.operation.channel.dispatch(
            "challenge.message",
            {
                "challengeId": challenge.challenge_id,
                "name": name,
                "payload": payload,
            },
        )
    except BerytusError as exc:
        if exc.code.startswith("Aborted:"):
            reason = exc.code.split(":", 1)[1]
            challenge._finish(ABORTED, reason)
            raise errors.ManagerAborted(reason) from exc
        raise
    challenge.messages.append((name, result.get("name")))
    return result


def close_challenge(challenge: Challenge) -> None:
    if challenge.state != ACTIVE:
        raise errors.NotActive(f"challenge is {challenge.state}")
    challenge.operation.channel.dispatch(
        "challenge.close", {"challengeId": challenge.challenge_id}
    )
    challenge._finish(CLOSED)


def abort_challenge(challenge: Challenge, reason: str) -> None:
    if reason not in ABORT_REASONS:
        raise errors.ProtocolViolation(f"unknown abort reason {reason!r}")
    if challenge.state in TERMINAL_STATES:
        raise errors.NotAbortable(f"challenge is {challenge.state}")
    if challenge.state == ACTIVE:
        try:
            challenge.operation.channel.dispatch(
                "challenge.abort",
                {"challengeId": challenge.challenge_id, "reason": reason},
            )
        except BerytusError:
            pass  # local teardown wins; the manager context may already be gone
    challenge._finish(ABORTED, reason)
