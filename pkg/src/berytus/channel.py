"""Channel lifecycle, manager registry, request routing, and the key exchange.

A channel is the logical link between one web app and one selected secret manager.
All traffic flows through :meth:`Channel.dispatch`, which enforces the
single-outstanding-request rule, seals payloads once the channel is secured, and
turns manager rejections into typed errors.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field
from typing import Callable

from . import errors
from .actors import (
    ActorIdentity,
    CryptoActor,
    TrustStore,
    actor_mapping_id,
    actor_to_record,
    validate_crypto_actor,
)
from .encoding import canonical_encode, canonical_decode
from .errors import BerytusError, error_for_code
from .kernel import (
    DIR_APP_TO_SM,
    DIR_SM_TO_APP,
    KeyAgreementTranscript,
    SealedEnvelope,
    SigningKeyPair,
    derive_session_keys,
    generate_exchange_keypair,
    open_envelope,
    seal,
    sign,
    verify,
    x25519,
)

STATE_CREATED = "Created"
STATE_KEY_EXCHANGE = "KeyExchangeInProgress"
STATE_SECURED = "Secured"
STATE_CLOSED = "Closed"

LEGAL_TRANSITIONS = {
    (STATE_CREATED, STATE_KEY_EXCHANGE),
    (STATE_CREATED, STATE_CLOSED),
    (STATE_KEY_EXCHANGE, STATE_SECURED),
    (STATE_KEY_EXCHANGE, STATE_CLOSED),
    (STATE_SECURED, STATE_CLOSED),
}

_KEY_EXCHANGE_PREFIX = "channel.keyExchange"


@dataclass
class RequestEnvelope:
    channel_id: bytes
    request_id: int
    kind: str
    payload: dict

    def to_record(self) -> dict:
        return {
            "channelId": self.channel_id,
            "requestId": self.request_id,
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_record(cls, record: dict) -> "RequestEnvelope":
        channel_id = record["channelId"]
        if isinstance(channel_id, str):
            channel_id = bytes.fromhex(channel_id)
        return cls(
            channel_id=channel_id,
            request_id=record["requestId"],
            kind=record["kind"],
            payload=record["payload"],
        )


@dataclass
class ResponseEnvelope:
    request_id: int
    resolved: dict | None = None
    rejected: str | None = None

    def to_record(self) -> dict:
        outcome = (
            {"resolved": self.resolved} if self.rejected is None else {"rejected": self.rejected}
        )
        return {"requestId": self.request_id, "outcome": outcome}

    @classmethod
    def from_record(cls, record: dict) -> "ResponseEnvelope":
        outcome = record["outcome"]
        if "rejected" in outcome:
            return cls(request_id=record["requestId"], rejected=outcome["rejected"])
        return cls(request_id=record["requestId"], resolved=outcome["resolved"])


@dataclass
class ManagerRegistration:
    manager_id: str
    handler: Callable[[RequestEnvelope], ResponseEnvelope]
    label: str
    manager_actor: ActorIdentity
    account_count: Callable[[str], int]


@dataclass
class SelectionPolicy:
    """Models the user's manager-selection prompt.

    ``web_app_allowlist`` restricts candidates; ``chooser`` picks among what is
    left (default: highest stored-account count, ties by manager id).
    """

    web_app_allowlist: set[str] | None = None
    chooser: Callable[[list[dict]], str] | None = None


def _default_chooser(candidates: list[dict]) -> str:
    top_count = max(c["accountCount"] for c in candidates)
    return min(c["managerId"] for c in candidates if c["accountCount"] == top_count)


class Channel:
    def __init__(
        self,
        *,
        channel_id: bytes,
        web_app_actor: ActorIdentity,
        manager_actor: ActorIdentity,
        manager_id: str,
        orchestrator: "Orchestrator",
        relay=None,
        rng: random.Random | None = None,
    ):
        self.channel_id = channel_id
        self.web_app_actor = web_app_actor
        self.manager_actor = manager_actor
        self.manager_id = manager_id
        self.orchestrator = orchestrator
        self.relay = relay
        self.rng = rng or random.SystemRandom()
        self.state = STATE_CREATED
        self.session_keys = None
        self.pending_request: int | None = None
        self.operations: list[str] = []
        self.transcript: KeyAgreementTranscript | None = None
        self.transitions: list[tuple[str, str]] = []
        self.close_reason: str | None = None
        self.plain_log: list | None = None  # optional debugging shadow of unsealed payloads
        self._request_counter = 0
        self._closed_during_pending = False

    def _set_state(self, new_state: str) -> None:
        if new_state == self.state:
            return
        self.transitions.append((self.state, new_state))
        self.state = new_state

    # -- request plumbing ---------------------------------------------------------

    def _aad(self, kind: str) -> bytes:
        return canonical_encode({"channelId": self.channel_id, "requestKind": kind})

    def dispatch(self, kind: str, payload: dict) -> dict:
        """Send one request to the manager and return the resolved payload.

        Payloads are sealed while the channel is secured, except for the
        key-exchange kinds which by definition run before keys exist.
        """
        if self.state == STATE_CLOSED:
            raise errors.ChannelClosed(f"channel closed ({self.close_reason})")
        if self.pending_request is not None:
            raise errors.ChannelBusy("a request is already outstanding")
        self._request_counter += 1
        request_id = self._request_counter
        self.pending_request = request_id
        self._closed_during_pending = False
        try:
            wire_payload = payload
            sealed = self.state == STATE_SECURED and not kind.startswith(_KEY_EXCHANGE_PREFIX)
            if sealed:
                envelope = seal(
                    self.session_keys, DIR_APP_TO_SM, canonical_encode(payload), self._aad(kind)
                )
                wire_payload = {"sealed": envelope.to_record()}
            request = RequestEnvelope(
                channel_id=self.channel_id,
                request_id=request_id,
                kind=kind,
                payload=wire_payload,
            )
            response = self.orchestrator._route(self, request)
        finally:
            self.pending_request = None
        if self._closed_during_pending:
            raise errors.ChannelClosed("channel closed while the request was pending")
        if response.request_id != request_id:
            raise errors.ProtocolViolation(
                f"response for request {response.request_id}, expected {request_id}"
            )
        if response.rejected is not None:
            raise error_for_code(response.rejected)
        result = response.resolved
        if isinstance(result, dict) and "sealed" in result and self.session_keys is not None:
            envelope = SealedEnvelope.from_record(result["sealed"])
            result = canonical_decode(open_envelope(self.session_keys, envelope, self._aad(kind)))
        if self.plain_log is not None:
            self.plain_log.append({"kind": kind, "request": payload, "response": result})
        return result

    # -- key exchange ---------------------------------------------------------------

    def run_key_exchange(self, web_app_signing_key: SigningKeyPair) -> "Channel":
        """Authenticated X25519 exchange; on success the channel is Secured."""
        if self.state == STATE_CLOSED:
            raise errors.ChannelClosed(f"channel closed ({self.close_reason})")
        if self.state != STATE_CREATED:
            raise errors.ProtocolViolation(f"cannot start key exchange in state {self.state}")
        if not isinstance(self.web_app_actor, CryptoActor):
            raise errors.E2EEUnavailable("web app has no signing identity")
        if not isinstance(self.manager_actor, CryptoActor):
            raise errors.E2EEUnavailable("manager has no signing identity")
        if web_app_signing_key.public != self.web_app_actor.signing_public_key:
            raise errors.SignatureInvalid("signing key does not belong to the web app actor")

        secret, share = generate_exchange_keypair(self.rng)
        transcript = KeyAgreementTranscript(
            channel_id=self.channel_id,
            web_app_actor_id=actor_mapping_id(self.web_app_actor),
            manager_actor_id=actor_mapping_id(self.manager_actor),
            web_app_share=share,
        )
        transcript.web_app_signature = sign(
            web_app_signing_key, transcript.web_app_signing_payload()
        )
        self._set_state(STATE_KEY_EXCHANGE)
        try:
            offer_response = self.dispatch(
                "channel.keyExchange.offer",
                {
                    "channelId": self.channel_id,
                    "webAppActorId": transcript.web_app_actor_id,
                    "managerActorId": transcript.manager_actor_id,
                    "webAppShare": share,
                    "webAppSignature": transcript.web_app_signature,
                },
            )
            transcript.manager_share = bytes.fromhex(offer_response["managerShare"])
            transcript.manager_signature = bytes.fromhex(offer_response["managerSignature"])
            if not verify(
                self.manager_actor.signing_public_key,
                transcript.manager_signing_payload(),
                transcript.manager_signature,
            ):
                raise errors.SignatureInvalid("manager handshake signature does not verify")
            shared = x25519(secret, transcript.manager_share)
            keys = derive_session_keys(shared, transcript.transcript_hash())
            self.dispatch(
                "channel.keyExchange.accept",
                {"channelId": self.channel_id, "transcriptHash": transcript.transcript_hash()},
            )
        except BerytusError:
            self.orchestrator.close_channel(self, "KeyExchangeFailed")
            raise
        self.session_keys = keys
        self.transcript = transcript
        self._set_state(STATE_SECURED)
        return self


class Orchestrator:
    """Registry of secret managers plus channel creation and teardown."""

    def __init__(self):
        self._registry: dict[str, ManagerRegistration] = {}
        self._channels: dict[str, list[Channel]] = {}
        self._lock = threading.Lock()

    # -- registry -------------------------------------------------------------------

    def register_manager(self, registration: ManagerRegistration) -> str:
        with self._lock:
            if registration.manager_id in self._registry:
                raise errors.DuplicateManagerId(registration.manager_id)
            self._registry[registration.manager_id] = registration
            self._channels.setdefault(registration.manager_id, [])
        return registration.manager_id

    def unregister_manager(self, manager_id: str) -> None:
        with self._lock:
            if manager_id not in self._registry:
                raise errors.UnknownManager(manager_id)
            del self._registry[manager_id]
            open_channels = self._channels.pop(manager_id, [])
        for channel in open_channels:
            if channel.state != STATE_CLOSED:
                self._close_locally(channel, "ManagerGone")

    def registered_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._registry)

    # -- channels ---------------------------------------------------------------------

    def create_channel(
        self,
        web_app_actor: ActorIdentity,
        policy: SelectionPolicy,
        store: TrustStore,
        now: int,
        *,
        relay=None,
        rng: random.Random | None = None,
    ) -> Channel:
        if isinstance(web_app_actor, CryptoActor):
            try:
                validate_crypto_actor(
                    web_app_actor, web_app_actor.claimed_origin.uri, store, now
                )
            except BerytusError as exc:
                raise errors.ActorValidationFailed(f"{exc.code}: {exc}") from exc

        mapping_id = actor_mapping_id(web_app_actor)
        with self._lock:
            candidates = []
            for manager_id, registration in self._registry.items():
                if policy.web_app_allowlist is not None and manager_id not in policy.web_app_allowlist:
                    continue
                candidates.append(
                    {
                        "managerId": manager_id,
                        "label": registration.label,
                        "accountCount": registration.account_count(mapping_id),
                    }
                )
        if not candidates:
            raise errors.NoManagerAvailable("no registered manager matches the allowlist")
        chooser = policy.chooser or _default_chooser
        chosen = chooser(candidates)
        if chosen not in {c["managerId"] for c in candidates}:
            raise errors.NoManagerAvailable(f"chooser picked a non-candidate {chosen!r}")
        registration = self._registry[chosen]

        rng = rng or random.SystemRandom()
        channel = Channel(
            channel_id=rng.randbytes(16),
            web_app_actor=web_app_actor,
            manager_actor=registration.manager_actor,
            manager_id=chosen,
            orchestrator=self,
            relay=relay,
            rng=rng,
        )
        with self._lock:
            self._channels.setdefault(chosen, []).append(channel)
        try:
            channel.dispatch(
                "channel.approveCreation",
                {
                    "channelId": channel.channel_id,
                    "webAppActor": actor_to_record(web_app_actor),
                    "managerActor": actor_to_record(registration.manager_actor),
                },
            )
        except BerytusError as exc:
            self._close_locally(channel, exc.code)
            if isinstance(exc, errors.ChannelClosed):
                raise errors.ManagerRejectedChannel(str(exc)) from exc
            raise errors.ManagerRejectedChannel(exc.code) from exc
        return channel

    def close_channel(self, channel: Channel, reason: str = "Done") -> None:
        """Idempotent teardown; notifies the manager when that is still possible."""
        if channel.state == STATE_CLOSED:
            return
        if channel.pending_request is None and channel.manager_id in self._registry:
            try:
                channel.dispatch("channel.close", {"reasonCode": reason})
            except BerytusError:
                pass
        self._close_locally(channel, reason)

    def _close_locally(self, channel: Channel, reason: str) -> None:
        if channel.state == STATE_CLOSED:
            return
        if channel.pending_request is not None:
            channel._closed_during_pending = True
        channel._set_state(STATE_CLOSED)
        channel.close_reason = reason
        if channel.session_keys is not None:
            channel.session_keys.zeroize()
            channel.session_keys = None

    # -- routing ----------------------------------------------------------------------

    def _route(self, channel: Channel, request: RequestEnvelope) -> ResponseEnvelope:
        registration = self._registry.get(channel.manager_id)
        if registration is None:
            self._close_locally(channel, "ManagerGone")
            raise errors.ChannelClosed("manager is no longer registered")
        request_record = request.to_record()
        if channel.relay is not None:
            request_record = channel.relay.send(DIR_APP_TO_SM, request_record)
        else:
            # keep wire semantics (bytes become hex text) even without a relay
            request_record = canonical_decode(canonical_encode(request_record))
        try:
            response = registration.handler(RequestEnvelope.from_record(request_record))
        except BerytusError as exc:
            response = ResponseEnvelope(request_id=request.request_id, rejected=exc.code)
        response_record = response.to_record()
        if channel.relay is not None:
            response_record = channel.relay.send(DIR_SM_TO_APP, response_record)
        else:
            response_record = canonical_decode(canonical_encode(response_record))
        return ResponseEnvelope.from_record(response_record)
