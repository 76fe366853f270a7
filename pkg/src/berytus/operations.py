"""Web-app-side login operation drivers.

Each function performs local prechecks, then issues the matching channel request.
The manager re-validates everything independently; neither side trusts the other's
checks (tests exercise both routes).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from . import errors, fields
from .channel import Channel

INTENT_ANY = "Any"
INTENT_REGISTER_ONLY = "RegisterOnly"
INTENT_AUTHENTICATE_ONLY = "AuthenticateOnly"
REQUESTED_INTENTS = (INTENT_ANY, INTENT_REGISTER_ONLY, INTENT_AUTHENTICATE_ONLY)

OPENID_CLAIMS = frozenset(
    {
        "name",
        "given_name",
        "family_name",
        "middle_name",
        "nickname",
        "preferred_username",
        "email",
        "email_verified",
        "phone_number",
        "picture",
        "birthdate",
        "address",
    }
)


@dataclass
class LoginOperation:
    channel: Channel
    operation_id: str
    intent: str  # Register | Authenticate
    state: str = "Created"
    fields: dict = dc_field(default_factory=dict)
    attributes: dict = dc_field(default_factory=dict)
    saved_account: dict | None = None
    active_challenge: object = None
    challenge_counter: int = 0
    challenge_log: list = dc_field(default_factory=list)


def approve_operation(
    channel: Channel,
    requested_intent: str = INTENT_ANY,
    *,
    category: str | None = None,
    operation_id: str | None = None,
) -> LoginOperation:
    if requested_intent not in REQUESTED_INTENTS:
        raise errors.ProtocolViolation(f"unknown requested intent {requested_intent!r}")
    operation_id = operation_id or f"op-{len(channel.operations) + 1}"
    payload = {"operationId": operation_id, "requestedIntent": requested_intent}
    if category is not None:
        payload["category"] = category
    result = channel.dispatch("login.approveOperation", payload)
    intent = result["intent"]
    if requested_intent == INTENT_REGISTER_ONLY and intent != "Register":
        raise errors.IntentMismatch(intent)
    if requested_intent == INTENT_AUTHENTICATE_ONLY and intent != "Authenticate":
        raise errors.IntentMismatch(intent)
    channel.operations.append(operation_id)
    return LoginOperation(
        channel=channel,
        operation_id=result.get("operationId", operation_id),
        intent=intent,
        state="Creating" if intent == "Register" else "Authenticating",
    )


def _require_creating(operation: LoginOperation) -> None:
    if operation.state != "Creating":
        raise errors.ProtocolViolation(
            f"operation is {operation.state}; registration steps need Creating"
        )


def add_fields(
    operation: LoginOperation, *descriptors: fields.FieldDescriptor
) -> list[fields.FieldDescriptor]:
    """Register fields; the manager fills in any missing values."""
    _require_creating(operation)
    for descriptor in descriptors:
        if descriptor.id in operation.fields:
            raise errors.DuplicateFieldId(descriptor.id)
        if descriptor.kind not in fields.PRODUCIBLE_BY:
            raise errors.ValueViolatesOptions(f"unknown kind {descriptor.kind!r}")
        if descriptor.value is not None:
            if "app" not in fields.PRODUCIBLE_BY[descriptor.kind]:
                raise errors.WebAppCannotProduce(
                    f"{descriptor.kind} values are producible by the manager only"
                )
            fields.validate_value(descriptor.kind, descriptor.options, descriptor.value)
    result = operation.channel.dispatch(
        "login.addFields",
        {
            "operationId": operation.operation_id,
            "fields": [d.to_record() for d in descriptors],
        },
    )
    settled = [fields.FieldDescriptor.from_record(r) for r in result["fields"]]
    for descriptor in settled:
        operation.fields[descriptor.id] = descriptor
    return settled


def reject_field(
    operation: LoginOperation,
    field_id: str,
    reason_code: str,
    proposed_revision: fields.FieldValue | None = None,
) -> fields.FieldDescriptor:
    """Ask the manager to revise a produced value (or accept our proposal)."""
    _require_creating(operation)
    current = operation.fields.get(field_id)
    if current is None:
        raise errors.UnknownField(field_id)
    payload = {
        "operationId": operation.operation_id,
        "fieldId": field_id,
        "reasonCode": reason_code,
    }
    if proposed_revision is not None:
        if "app" not in fields.PRODUCIBLE_BY[current.kind]:
            raise errors.RevisionNotAllowed(
                f"{current.kind} values cannot be proposed by the web app"
            )
        payload["proposedRevision"] = proposed_revision.to_record()
    result = operation.channel.dispatch("login.rejectField", payload)
    revised = fields.FieldDescriptor.from_record(result["field"])
    operation.fields[revised.id] = revised
    for record in result.get("rebound", []):
        dependent = fields.FieldDescriptor.from_record(record)
        operation.fields[dependent.id] = dependent
    return revised


def get_user_attributes(operation: LoginOperation, claims: list[str]) -> dict:
    _require_creating(operation)
    for claim in claims:
        if claim not in OPENID_CLAIMS:
            raise errors.UnknownClaimName(claim)
    result = operation.channel.dispatch(
        "login.getUserAttributes",
        {"operationId": operation.operation_id, "claims": sorted(claims)},
    )
    operation.attributes.update(result["attributes"])
    return result["attributes"]


def save_account(operation: LoginOperation, category: str | None = None) -> dict:
    # idempotent: repeated saves re-resolve with the already-stored account
    if operation.state not in ("Creating", "Saved"):
        raise errors.ProtocolViolation(f"operation is {operation.state}")
    for descriptor in operation.fields.values():
        if descriptor.value is None:
            raise errors.IncompleteFields(descriptor.id)
    payload = {"operationId": operation.operation_id}
    if category is not None:
        payload["category"] = category
    result = operation.channel.dispatch("login.saveAccount", payload)
    operation.saved_account = result["account"]
    operation.state = "Saved"
    return result["account"]


def transition_to_authentication(operation: LoginOperation) -> LoginOperation:
    if operation.saved_account is None:
        raise errors.NothingSaved("save the account before transitioning")
    operation.channel.dispatch(
        "login.transitionToAuthentication", {"operationId": operation.operation_id}
    )
    operation.state = "Authenticating"
    operation.intent = "Authenticate"
    return operation
