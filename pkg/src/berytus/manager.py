"""A complete reference secret manager.

Implements the request-handler contract: channel approval, the manager half of the
key exchange, field production with a vault-backed credential store, and all
challenge kinds. Behavior is a pure function of (config seed, fixtures, request
sequence), so scenario runs replay bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

from . import errors, fields, srp
from .actors import (
    ActorIdentity,
    CryptoActor,
    actor_from_record,
    actor_mapping_id,
)
from .channel import ManagerRegistration, RequestEnvelope, ResponseEnvelope
from .encoding import canonical_encode, canonical_decode
from .errors import BerytusError
from .kernel import (
    DIR_SM_TO_APP,
    KeyAgreementTranscript,
    SealedEnvelope,
    SigningKeyPair,
    derive_session_keys,
    generate_exchange_keypair,
    open_envelope,
    rng_from_seed,
    seal,
    sign,
    verify,
    x25519,
)

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

CHALLENGE_KINDS = (
    "Identification",
    "Password",
    "DigitalSignature",
    "SecureRemotePassword",
    "OffChannelOtp",
    "Custom",
)

_REJECTION_ROUND_CAP = 8
_PASSWORD_DRAW_CAP = 10_000


# --- persistent store ---------------------------------------------------------------

@dataclass
class StoredAccount:
    account: dict
    mapping_strategy: str  # "Domain" | "AppKey"
    label: str
    secrets: dict
    created_at: int


class CredentialStore:
    """In-memory map backed by an append-only journal of canonical records."""

    def __init__(self, journal_path: str | Path | None = None):
        self.records: dict[str, list[StoredAccount]] = {}
        self.journal_path = Path(journal_path) if journal_path else None
        self._clock = 0

    def next_timestamp(self) -> int:
        self._clock += 1
        return self._clock

    def save(self, mapping_id: str, stored: StoredAccount) -> None:
        line = canonical_encode(
            {
                "type": "account.saved",
                "mappingId": mapping_id,
                "strategy": stored.mapping_strategy,
                "label": stored.label,
                "createdAt": stored.created_at,
                "account": stored.account,
                "secrets": stored.secrets,
            }
        )
        if self.journal_path is not None:
            try:
                with open(self.journal_path, "ab") as fh:
                    fh.write(line + b"\n")
            except OSError as exc:
                raise errors.StorageFailure(str(exc)) from exc
        self.records.setdefault(mapping_id, []).append(stored)

    def accounts_for(self, mapping_id: str) -> list[StoredAccount]:
        return list(self.records.get(mapping_id, []))

    def count(self, mapping_id: str) -> int:
        return len(self.records.get(mapping_id, []))

    @classmethod
    def replay(cls, journal_path: str | Path) -> "CredentialStore":
        """Rebuild a store from its journal; lookups must agree with the original."""
        store = cls()
        with open(journal_path, "rb") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = canonical_decode(line)
                if record.get("type") != "account.saved":
                    continue
                stored = StoredAccount(
                    account=record["account"],
                    mapping_strategy=record["strategy"],
                    label=record["label"],
                    secrets=record["secrets"],
                    created_at=record["createdAt"],
                )
                store.records.setdefault(record["mappingId"], []).append(stored)
                store._clock = max(store._clock, stored.created_at)
        return store

    def dump_bytes(self) -> bytes:
        chunks = []
        for mapping_id in sorted(self.records):
            for stored in self.records[mapping_id]:
                chunks.append(canonical_encode(stored.account))
                chunks.append(canonical_encode(stored.secrets))
        return b"\n".join(chunks)


def select_account(
    store: CredentialStore, mapping_id: str, category: str | None = None
) -> StoredAccount | None:
    """Most recently created account under the mapping id (optionally by category)."""
    candidates = store.accounts_for(mapping_id)
    if category is not None:
        candidates = [s for s in candidates if s.account.get("category") == category]
    if not candidates:
        return None
    return max(candidates, key=lambda s: s.created_at)


def guard_mapping_strategy(stored: StoredAccount, current_actor: ActorIdentity) -> None:
    """Accounts only flow back under the same mapping strategy and mapping id."""
    current_strategy = "AppKey" if isinstance(current_actor, CryptoActor) else "Domain"
    if stored.mapping_strategy != current_strategy:
        raise errors.StrategyMismatch(
            f"stored under {stored.mapping_strategy}, requested via {current_strategy}"
        )
    if stored.account.get("mappingId") != actor_mapping_id(current_actor):
        raise errors.MappingMismatch("mapping id differs from the stored account")


# --- configuration -------------------------------------------------------------------

@dataclass
class ManagerConfig:
    seed: bytes = b"\x00" * 32
    auto_approve: bool = True
    user_profile: dict = dc_field(default_factory=dict)
    intent_policy: Callable[[int, str], str] | None = None
    supported_challenge_kinds: frozenset = frozenset(CHALLENGE_KINDS)
    srp_password_override: str | None = None
    custom_responders: dict = dc_field(default_factory=dict)
    side_channel: object = None  # assigned by the scenario world


def resolve_intent(account_count: int, requested: str, config: ManagerConfig | None = None) -> str:
    if requested == "RegisterOnly":
        return "Register"
    if requested == "AuthenticateOnly":
        return "Authenticate"
    if config is not None and config.intent_policy is not None:
        return config.intent_policy(account_count, requested)
    return "Register" if account_count == 0 else "Authenticate"


# --- per-channel runtime state --------------------------------------------------------

@dataclass
class _ChallengeCtx:
    challenge_id: str
    kind: str
    parameters: dict
    state: str = "Active"
    stage: int = 0
    srp_result: srp.SrpClientResult | None = None
    srp_profile: srp.SrpProfile | None = None
    selected_key_field: str | None = None


@dataclass
class _OperationCtx:
    operation_id: str
    intent: str
    state: str  # Creating | Authenticating | Finished
    fields: dict = dc_field(default_factory=dict)  # id -> FieldDescriptor
    history: dict = dc_field(default_factory=dict)  # id -> list of former values
    rounds: dict = dc_field(default_factory=dict)  # id -> rejection count
    secrets: dict = dc_field(default_factory=dict)  # id -> secret record
    attributes_served: dict = dc_field(default_factory=dict)
    saved: StoredAccount | None = None
    bound_account: StoredAccount | None = None
    challenge: _ChallengeCtx | None = None
    aborts_by_kind: dict = dc_field(default_factory=dict)
    finished_challenges: list = dc_field(default_factory=list)


@dataclass
class _ChannelCtx:
    channel_id: bytes
    web_app_actor: ActorIdentity
    mapping_id: str
    strategy: str
    keys: object = None
    pending_keys: tuple | None = None  # (SessionKeySet, transcript hash) before confirmation
    secured: bool = False
    closed: bool = False
    operation: _OperationCtx | None = None
    op_counter: int = 0


class ReferenceManager:
    def __init__(
        self,
        manager_id: str,
        *,
        label: str | None = None,
        signing_key: SigningKeyPair | None = None,
        actor: ActorIdentity | None = None,
        config: ManagerConfig | None = None,
        store: CredentialStore | None = None,
    ):
        self.manager_id = manager_id
        self.label = label or manager_id
        self.config = config or ManagerConfig()
        self.signing_key = signing_key
        self.actor = actor
        self.store = store or CredentialStore()
        self.rng = rng_from_seed(self.config.seed)
        self._channels: dict[str, _ChannelCtx] = {}
        self._handlers = {
            "channel.approveCreation": self._on_approve_creation,
            "channel.keyExchange.offer": self._on_key_exchange_offer,
            "channel.keyExchange.accept": self._on_key_exchange_accept,
            "channel.close": self._on_channel_close,
            "login.approveOperation": self._on_approve_operation,
            "login.addFields": self._on_add_fields,
            "login.rejectField": self._on_reject_field,
            "login.getUserAttributes": self._on_get_user_attributes,
            "login.saveAccount": self._on_save_account,
            "login.transitionToAuthentication": self._on_transition,
            "challenge.approve": self._on_challenge_approve,
            "challenge.message": self._on_challenge_message,
            "challenge.close": self._on_challenge_close,
            "challenge.abort": self._on_challenge_abort,
        }

    def registration(self) -> ManagerRegistration:
        return ManagerRegistration(
            manager_id=self.manager_id,
            handler=self.handle_request,
            label=self.label,
            manager_actor=self.actor,
            account_count=self.store.count,
        )

    # -- the request handler --------------------------------------------------------

    def handle_request(self, env: RequestEnvelope) -> ResponseEnvelope:
        ctx = self._channels.get(env.channel_id.hex())
        try:
            handler = self._handlers.get(env.kind)
            if handler is None:
                raise errors.UnknownKind(env.kind)
            payload = env.payload
            is_exchange_kind = env.kind.startswith("channel.keyExchange")
            if ctx is not None and ctx.secured and not is_exchange_kind:
                if not (isinstance(payload, dict) and "sealed" in payload):
                    raise errors.ProtocolViolation("expected a sealed payload")
                aad = canonical_encode({"channelId": env.channel_id, "requestKind": env.kind})
                try:
                    opened = open_envelope(
                        ctx.keys, SealedEnvelope.from_record(payload["sealed"]), aad
                    )
                except errors.ReplayDetected:
                    raise
                except BerytusError as exc:
                    raise errors.SealOpenFailed(str(exc)) from exc
                payload = canonical_decode(opened)
            result = handler(ctx, env, payload)
            if ctx is not None and ctx.secured and not is_exchange_kind:
                aad = canonical_encode({"channelId": env.channel_id, "requestKind": env.kind})
                blob = seal(ctx.keys, DIR_SM_TO_APP, canonical_encode(result), aad)
                result = {"sealed": blob.to_record()}
            return ResponseEnvelope(request_id=env.request_id, resolved=result)
        except errors.ManagerAborted as exc:
            return ResponseEnvelope(
                request_id=env.request_id, rejected=f"Aborted:{exc.reason}"
            )
        except BerytusError as exc:
            return ResponseEnvelope(request_id=env.request_id, rejected=exc.code)

    # -- channel handlers --------------------------------------------------------------

    def _on_approve_creation(self, ctx, env, payload):
        if not self.config.auto_approve:
            raise errors.error_for_code("UserRefused", "channel creation refused")
        web_app_actor = actor_from_record(payload["webAppActor"])
        mapping_id = actor_mapping_id(web_app_actor)
        strategy = "AppKey" if isinstance(web_app_actor, CryptoActor) else "Domain"
        self._channels[env.channel_id.hex()] = _ChannelCtx(
            channel_id=env.channel_id,
            web_app_actor=web_app_actor,
            mapping_id=mapping_id,
            strategy=strategy,
        )
        return {"ok": True}

    def _require_ctx(self, ctx) -> _ChannelCtx:
        if ctx is None or ctx.closed:
            raise errors.ProtocolViolation("no open channel context")
        return ctx

    def _on_key_exchange_offer(self, ctx, env, payload):
        ctx = self._require_ctx(ctx)
        if not isinstance(ctx.web_app_actor, CryptoActor):
            raise errors.E2EEUnavailable("web app has no signing identity")
        if self.signing_key is None or not isinstance(self.actor, CryptoActor):
            raise errors.E2EEUnavailable("manager has no signing identity")
        offered_channel = bytes.fromhex(payload["channelId"])
        if offered_channel != env.channel_id:
            raise errors.SignatureInvalid("offer bound to a different channel")
        if payload["managerActorId"] != actor_mapping_id(self.actor):
            raise errors.SignatureInvalid("offer addressed to a different manager")
        transcript = KeyAgreementTranscript(
            channel_id=env.channel_id,
            web_app_actor_id=payload["webAppActorId"],
            manager_actor_id=payload["managerActorId"],
            web_app_share=bytes.fromhex(payload["webAppShare"]),
        )
        web_app_signature = bytes.fromhex(payload["webAppSignature"])
        if not verify(
            ctx.web_app_actor.signing_public_key,
            transcript.web_app_signing_payload(),
            web_app_signature,
        ):
            raise errors.SignatureInvalid("web app handshake signature does not verify")
        secret, share = generate_exchange_keypair(self.rng)
        transcript.manager_share = share
        manager_signature = sign(self.signing_key, transcript.manager_signing_payload())
        shared = x25519(secret, transcript.web_app_share)
        transcript_hash = transcript.transcript_hash()
        ctx.pending_keys = (derive_session_keys(shared, transcript_hash), transcript_hash)
        return {"managerShare": share, "managerSignature": manager_signature}

    def _on_key_exchange_accept(self, ctx, env, payload):
        ctx = self._require_ctx(ctx)
        if ctx.pending_keys is None:
            raise errors.ProtocolViolation("no key exchange in progress")
        keys, transcript_hash = ctx.pending_keys
        confirmed = payload["transcriptHash"]
        if isinstance(confirmed, str):
            confirmed = bytes.fromhex(confirmed)
        if confirmed != transcript_hash:
            raise errors.KeyConfirmationFailed("transcript hash mismatch")
        ctx.keys = keys
        ctx.pending_keys = None
        ctx.secured = True
        return {"ok": True}

    def _on_channel_close(self, ctx, env, payload):
        if ctx is not None:
            ctx.closed = True
            ctx.keys = None
            ctx.secured = False
        return {"ok": True}

    # -- login operation handlers --------------------------------------------------------

    def _on_approve_operation(self, ctx, env, payload):
        ctx = self._require_ctx(ctx)
        if ctx.operation is not None and ctx.operation.state not in ("Finished",):
            raise errors.error_for_code("OperationActive", "an operation is already active")
        requested = payload["requestedIntent"]
        intent = resolve_intent(self.store.count(ctx.mapping_id), requested, self.config)
        ctx.op_counter += 1
        op = _OperationCtx(
            operation_id=payload.get("operationId", f"op-{ctx.op_counter}"),
            intent=intent,
            state="Creating" if intent == "Register" else "Authenticating",
        )
        if intent == "Authenticate":
            stored = select_account(self.store, ctx.mapping_id, payload.get("category"))
            if stored is not None:
                guard_mapping_strategy(stored, ctx.web_app_actor)
                op.bound_account = stored
        ctx.operation = op
        return {"operationId": op.operation_id, "intent": intent}

    def _require_op(self, ctx, state: str | None = None) -> _OperationCtx:
        ctx = self._require_ctx(ctx)
        op = ctx.operation
        if op is None:
            raise errors.ProtocolViolation("no active operation")
        if state is not None and op.state != state:
            raise errors.ProtocolViolation(f"operation in state {op.state}, needs {state}")
        return op

    def _on_add_fields(self, ctx, env, payload):
        op = self._require_op(ctx, "Creating")
        descriptors = [fields.FieldDescriptor.from_record(r) for r in payload["fields"]]
        produced = []
        for descriptor in descriptors:
            if descriptor.id in op.fields:
                raise errors.DuplicateFieldId(descriptor.id)
            if descriptor.kind not in fields.PRODUCIBLE_BY:
                raise errors.ValueViolatesOptions(f"unknown kind {descriptor.kind!r}")
            if descriptor.value is not None:
                if "app" not in fields.PRODUCIBLE_BY[descriptor.kind]:
                    raise errors.WebAppCannotProduce(
                        f"{descriptor.kind} values are producible by the manager only"
                    )
                self._check_transport(ctx, descriptor)
                fields.validate_value(descriptor.kind, descriptor.options, descriptor.value)
            else:
                descriptor.value = self._produce(ctx, op, descriptor, avoid=set())
            op.fields[descriptor.id] = descriptor
            op.history.setdefault(descriptor.id, []).append(descriptor.value)
            produced.append(descriptor.to_record())
        return {"fields": produced}

    def _check_transport(self, ctx, descriptor) -> None:
        # private key material may only cross a sealed channel
        if descriptor.kind == fields.KIND_PRIVATE_KEY and not ctx.secured:
            raise errors.ValueViolatesOptions(
                "private key values are transported sealed only; secure the channel first"
            )

    def _produce(self, ctx, op, descriptor, avoid: set) -> fields.FieldValue:
        kind, options = descriptor.kind, descriptor.options
        profile = self.config.user_profile
        if kind == fields.KIND_IDENTITY:
            base = profile.get("preferred_username", "user")
            base = "".join(c for c in base if c in fields.IDENTITY_ALPHABET) or "user"
            max_length = options.get("maxLength", 64)
            min_length = options.get("minLength", 1)
            while True:
                suffix = f"{self.rng.randrange(10_000):04d}"
                candidate = (base[: max(max_length - len(suffix), 0)] + suffix)[:max_length]
                while len(candidate) < min_length:
                    candidate += self.rng.choice(fields.IDENTITY_ALPHABET)
                if candidate not in avoid:
                    value = fields.TextValue(candidate)
                    fields.validate_value(kind, options, value)
                    return value
        if kind == fields.KIND_FOREIGN_IDENTITY:
            flavor = options.get("kind", "email")
            if flavor == "email":
                fixture = profile.get("email")
                while True:
                    candidate = fixture or f"user{self.rng.randrange(100_000)}@example.org"
                    if candidate not in avoid:
                        break
                    fixture = None
            else:
                fixture = profile.get("phone_number")
                while True:
                    candidate = fixture or f"+1555{self.rng.randrange(10_000_000):07d}"
                    if candidate not in avoid:
                        break
                    fixture = None
            value = fields.TextValue(candidate)
            fields.validate_value(kind, options, value)
            return value
        if kind == fields.KIND_PASSWORD:
            policy = fields.PasswordCompositionPolicy.from_record(options.get("policy"))
            policy.check_satisfiable()
            alphabet = policy.alphabet()
            length = min(max(policy.min_length, len(policy.required_classes), 1), policy.max_length)
            for _ in range(_PASSWORD_DRAW_CAP):
                candidate = "".join(self.rng.choice(alphabet) for _ in range(length))
                if policy.satisfied_by(candidate) and candidate not in avoid:
                    return fields.TextValue(candidate)
            raise errors.UnsatisfiablePolicy("could not draw a conforming password")
        if kind == fields.KIND_SECURE_PASSWORD:
            identity_field_id = options.get("identityFieldId")
            identity_descriptor = op.fields.get(identity_field_id)
            if identity_descriptor is None or not isinstance(
                identity_descriptor.value, fields.TextValue
            ):
                raise errors.ValueViolatesOptions(
                    "identityFieldId must reference an identity field with a value"
                )
            identity = identity_descriptor.value.text
            group_name = options.get("group", "2048")
            if group_name not in srp.GROUPS:
                raise errors.ValueViolatesOptions(f"unknown group {group_name!r}")
            srp_profile = srp.SrpProfile(group=srp.GROUPS[group_name], hash_name="sha256")
            alphabet = fields.IDENTITY_ALPHABET + "!#$%&*+?"
            internal_password = "".join(self.rng.choice(alphabet) for _ in range(24))
            salt = self.rng.randbytes(16)
            record = srp.compute_verifier(identity, internal_password, salt, srp_profile)
            op.secrets[descriptor.id] = {
                "kind": "srpPassword",
                "identity": identity,
                "password": internal_password,
                "group": group_name,
            }
            return fields.SecurePasswordRecordValue(
                salt=record.salt, verifier=record.verifier, group=group_name
            )
        if kind == fields.KIND_KEY:
            keypair = SigningKeyPair.generate(self.rng)
            op.secrets[descriptor.id] = {"kind": "signingSeed", "seed": keypair.secret}
            return fields.PublicKeyValue(keypair.public)
        if kind == fields.KIND_PRIVATE_KEY:
            self._check_transport(ctx, descriptor)
            keypair = SigningKeyPair.generate(self.rng)
            op.secrets[descriptor.id] = {"kind": "privateKey", "seed": keypair.secret}
            return fields.WrappedPrivateKeyValue(keypair.secret)
        raise errors.ValueViolatesOptions(f"unknown kind {kind!r}")

    def _on_reject_field(self, ctx, env, payload):
        op = self._require_op(ctx, "Creating")
        field_id = payload["fieldId"]
        descriptor = op.fields.get(field_id)
        if descriptor is None:
            raise errors.UnknownField(field_id)
        op.rounds[field_id] = op.rounds.get(field_id, 0) + 1
        if op.rounds[field_id] > _REJECTION_ROUND_CAP:
            raise errors.ManagerRefusedRevision("rejection round cap reached")
        revision = payload.get("proposedRevision")
        if revision is not None:
            if "app" not in fields.PRODUCIBLE_BY[descriptor.kind]:
                raise errors.RevisionNotAllowed(
                    f"{descriptor.kind} values cannot be proposed by the web app"
                )
            value = fields.value_from_record(revision)
            try:
                fields.validate_value(descriptor.kind, descriptor.options, value)
            except errors.ValueViolatesOptions as exc:
                raise errors.ManagerRefusedRevision(str(exc)) from exc
        else:
            avoid = set()
            for old in op.history.get(field_id, []):
                if isinstance(old, fields.TextValue):
                    avoid.add(old.text)
            value = self._produce(ctx, op, descriptor, avoid=avoid)
        descriptor.value = value
        op.history.setdefault(field_id, []).append(value)
        # a revised identity invalidates any verifier derived from it
        rebound = []
        if descriptor.kind == fields.KIND_IDENTITY:
            for other in op.fields.values():
                if (
                    other.kind == fields.KIND_SECURE_PASSWORD
                    and other.options.get("identityFieldId") == field_id
                ):
                    other.value = self._produce(ctx, op, other, avoid=set())
                    op.history.setdefault(other.id, []).append(other.value)
                    rebound.append(other.to_record())
        return {"field": descriptor.to_record(), "rebound": rebound}

    def _on_get_user_attributes(self, ctx, env, payload):
        op = self._require_op(ctx, "Creating")
        served = {}
        for claim in payload["claims"]:
            if claim in self.config.user_profile:
                served[claim] = self.config.user_profile[claim]
        op.attributes_served.update(served)
        return {"attributes": served}

    def _on_save_account(self, ctx, env, payload):
        ctx2 = self._require_ctx(ctx)
        op = self._require_op(ctx, "Creating")
        if op.saved is not None:
            return {"account": op.saved.account}
        if not op.fields:
            raise errors.IncompleteFields("no fields were added")
        for descriptor in op.fields.values():
            if descriptor.value is None:
                raise errors.IncompleteFields(descriptor.id)
        account = {
            "fields": [d.to_record() for d in op.fields.values()],
            "attributes": dict(op.attributes_served),
            "mappingId": ctx2.mapping_id,
            "createdAt": self.store.next_timestamp(),
        }
        category = payload.get("category")
        if category is not None:
            account["category"] = category
        label = next(
            (
                d.value.text
                for d in op.fields.values()
                if d.kind == fields.KIND_IDENTITY and isinstance(d.value, fields.TextValue)
            ),
            self.label,
        )
        stored = StoredAccount(
            account=account,
            mapping_strategy=ctx2.strategy,
            label=label,
            secrets=dict(op.secrets),
            created_at=account["createdAt"],
        )
        self.store.save(ctx2.mapping_id, stored)
        op.saved = stored
        return {"account": account}

    def _on_transition(self, ctx, env, payload):
        op = self._require_op(ctx)
        if op.state != "Creating":
            raise errors.ProtocolViolation(f"operation in state {op.state}")
        if op.saved is None:
            raise errors.NothingSaved("save the account before transitioning")
        op.state = "Authenticating"
        op.bound_account = op.saved
        return {"ok": True}

    # -- challenge handlers ----------------------------------------------------------------

    def _on_challenge_approve(self, ctx, env, payload):
        op = self._require_op(ctx, "Authenticating")
        if op.challenge is not None and op.challenge.state == "Active":
            raise errors.ChallengeAlreadyActive(op.challenge.challenge_id)
        kind = payload["kind"]
        if kind not in CHALLENGE_KINDS or kind not in self.config.supported_challenge_kinds:
            raise errors.error_for_code("UnsupportedChallenge", kind)
        if op.aborts_by_kind.get(kind, 0) > 1:
            raise errors.error_for_code("RetryExhausted", kind)
        parameters = payload.get("parameters", {})
        if kind == "Custom":
            from . import schema as msg_schema

            try:
                msg_schema.check_schema(parameters.get("schema"))
            except errors.UnsupportedSchemaFeature:
                raise
            except BerytusError as exc:
                raise errors.InvalidSchema(str(exc)) from exc
            responder = parameters.get("responder", "default")
            if responder not in self.config.custom_responders:
                raise errors.error_for_code("UnsupportedChallenge", f"no responder {responder!r}")
        elif op.bound_account is None:
            raise errors.error_for_code("NoAccount", "no stored account matches this web app")
        op.challenge = _ChallengeCtx(
            challenge_id=payload["challengeId"], kind=kind, parameters=parameters
        )
        return {"ok": True}

    def _require_challenge(self, ctx) -> tuple[_OperationCtx, _ChallengeCtx]:
        op = self._require_op(ctx, "Authenticating")
        challenge = op.challenge
        if challenge is None or challenge.state != "Active":
            raise errors.NotActive("no active challenge")
        return op, challenge

    def _account_field(self, op, field_id: str) -> dict:
        for record in op.bound_account.account["fields"]:
            if record["id"] == field_id:
                return record
        raise errors.UnknownField(field_id)

    def _abort(self, op, challenge, reason: str):
        challenge.state = "Aborted"
        op.aborts_by_kind[challenge.kind] = op.aborts_by_kind.get(challenge.kind, 0) + 1
        op.finished_challenges.append((challenge.challenge_id, "Aborted"))
        raise errors.ManagerAborted(reason)

    def _on_challenge_message(self, ctx, env, payload):
        op, challenge = self._require_challenge(ctx)
        name = payload["name"]
        body = payload.get("payload", {})
        kind = challenge.kind

        if kind == "Identification":
            if name != "GetIdentityFields":
                raise errors.ProtocolViolation(name)
            values = {}
            for field_id in body["fieldIds"]:
                record = self._account_field(op, field_id)
                if record["kind"] not in (fields.KIND_IDENTITY, fields.KIND_FOREIGN_IDENTITY):
                    raise errors.ProtocolViolation(f"{field_id} is not an identity field")
                values[field_id] = record["value"]["text"]
            return {"name": "IdentityFields", "payload": {"values": values}}

        if kind == "Password":
            if name != "GetPasswordFields":
                raise errors.ProtocolViolation(name)
            values = {}
            for field_id in body["fieldIds"]:
                record = self._account_field(op, field_id)
                if record["kind"] != fields.KIND_PASSWORD:
                    raise errors.ProtocolViolation(f"{field_id} is not a password field")
                values[field_id] = record["value"]["text"]
            return {"name": "PasswordFields", "payload": {"values": values}}

        if kind == "DigitalSignature":
            return self._signature_message(ctx, op, challenge, name, body)

        if kind == "SecureRemotePassword":
            return self._srp_message(op, challenge, name, body)

        if kind == "OffChannelOtp":
            if name != "ChallengeOtp":
                raise errors.ProtocolViolation(name)
            identity = self._bound_identity(op)
            side_channel = getattr(self.config, "side_channel", None)
            code = side_channel.receive(identity) if side_channel is not None else None
            if code is None:
                self._abort(op, challenge, "GeneralError")
            return {"name": "Otp", "payload": {"otp": code}}

        if kind == "Custom":
            from . import schema as msg_schema

            doc = challenge.parameters.get("schema")
            violations = msg_schema.validate(doc, body)
            if violations:
                raise errors.SchemaViolation(
                    "; ".join(f"{v.path}: {v.reason}" for v in violations)
                )
            responder = self.config.custom_responders[
                challenge.parameters.get("responder", "default")
            ]
            reply = responder(name, body)
            reply_violations = msg_schema.validate(doc, reply)
            if reply_violations:
                raise errors.SchemaViolation("manager reply does not conform")
            return {"name": f"{name}Reply", "payload": reply}

        raise errors.ProtocolViolation(f"unhandled challenge kind {kind}")

    def _bound_identity(self, op) -> str:
        for record in op.bound_account.account["fields"]:
            if record["kind"] == fields.KIND_IDENTITY:
                return record["value"]["text"]
        raise errors.UnknownField("no identity field on the account")

    def _signature_message(self, ctx, op, challenge, name, body):
        if name == "SelectKey":
            if challenge.stage != 0:
                raise errors.ProtocolViolation("key already selected")
            record = self._account_field(op, body["fieldId"])
            if record["kind"] != fields.KIND_KEY:
                raise errors.ProtocolViolation(f"{body['fieldId']} is not a key field")
            challenge.selected_key_field = body["fieldId"]
            challenge.stage = 1
            return {
                "name": "KeySelected",
                "payload": {"publicKey": record["value"]["publicKey"]},
            }
        if name == "SignNonce":
            if challenge.stage != 1:
                raise errors.ProtocolViolation("select a key first")
            secret = op.bound_account.secrets.get(challenge.selected_key_field)
            if secret is None or secret.get("kind") != "signingSeed":
                raise errors.UnknownField("no signing secret for the selected key")
            seed = secret["seed"]
            if isinstance(seed, str):
                seed = bytes.fromhex(seed)
            nonce = body["nonce"]
            if isinstance(nonce, str):
                nonce = bytes.fromhex(nonce)
            message = canonical_encode(
                {
                    "channelId": ctx.channel_id,
                    "challengeId": challenge.challenge_id,
                    "nonce": nonce,
                }
            )
            signature = sign(SigningKeyPair.from_seed(seed), message)
            challenge.stage = 2
            return {"name": "Signature", "payload": {"signature": signature}}
        raise errors.ProtocolViolation(name)

    def _srp_message(self, op, challenge, name, body):
        if name == "SrpSelectSecurePassword":
            if challenge.stage != 0:
                raise errors.ProtocolViolation("secure password already selected")
            field_id = body["fieldId"]
            record = self._account_field(op, field_id)
            if record["kind"] != fields.KIND_SECURE_PASSWORD:
                raise errors.ProtocolViolation(f"{field_id} is not a secure password field")
            secret = op.bound_account.secrets.get(field_id)
            if secret is None or secret.get("kind") != "srpPassword":
                raise errors.UnknownField("no secure password secret stored")
            challenge.parameters["_fieldId"] = field_id
            group_name = secret.get("group", "2048")
            challenge.srp_profile = srp.SrpProfile(
                group=srp.GROUPS[group_name], hash_name="sha256"
            )
            challenge.stage = 1
            return {"name": "SrpIdentity", "payload": {"identity": secret["identity"]}}
        if name == "SrpServerPublic":
            if challenge.stage != 1:
                raise errors.ProtocolViolation("select the secure password first")
            secret = op.bound_account.secrets[challenge.parameters["_fieldId"]]
            password = self.config.srp_password_override or secret["password"]
            salt = body["salt"]
            if isinstance(salt, str):
                salt = bytes.fromhex(salt)
            B = int(body["B"], 16)
            a = srp.generate_client_ephemeral(self.rng)
            try:
                result = srp.client_respond(
                    secret["identity"], password, salt, a, B, challenge.srp_profile
                )
            except errors.InvalidServerEphemeral:
                self._abort(op, challenge, "GeneralError")
            challenge.srp_result = result
            challenge.stage = 2
            return {
                "name": "SrpClientProof",
                "payload": {
                    "A": challenge.srp_profile.to_hex(result.A),
                    "M1": result.M1,
                },
            }
        if name == "SrpServerProof":
            if challenge.stage != 2:
                raise errors.ProtocolViolation("client proof not sent yet")
            M2 = body["M2"]
            if isinstance(M2, str):
                M2 = bytes.fromhex(M2)
            if not srp.client_check_server_proof(
                challenge.srp_result, M2, challenge.srp_profile
            ):
                self._abort(op, challenge, "IncorrectResponse")
            challenge.stage = 3
            return {"name": "SrpDone", "payload": {"ok": True}}
        raise errors.ProtocolViolation(name)

    def _on_challenge_close(self, ctx, env, payload):
        op, challenge = self._require_challenge(ctx)
        challenge.state = "Closed"
        op.finished_challenges.append((challenge.challenge_id, "Closed"))
        return {"ok": True}

    def _on_challenge_abort(self, ctx, env, payload):
        op = self._require_op(ctx, "Authenticating")
        challenge = op.challenge
        if challenge is None or challenge.state not in ("Active", "PendingApproval"):
            raise errors.NotAbortable("no abortable challenge")
        challenge.state = "Aborted"
        op.aborts_by_kind[challenge.kind] = op.aborts_by_kind.get(challenge.kind, 0) + 1
        op.finished_challenges.append((challenge.challenge_id, "Aborted"))
        return {"ok": True}
