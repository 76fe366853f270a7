"""The simulated web application: front-end relay, backend store, side channel,
world assembly, and ready-made drivers for every challenge kind.

The backend never stores raw passwords — only salted hashes, SRP verifier
records, and public keys — so a dump of it is fair game for the secret scanner.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field

from . import challenges, errors, fields, operations, srp
from .actors import (
    ActorIdentity,
    CryptoActor,
    OriginActor,
    SigningKeyAllowlistEntry,
    TrustStore,
    make_certificate,
    parse_origin,
)
from .channel import Channel, Orchestrator, SelectionPolicy
from .encoding import DecodeError, canonical_decode, canonical_encode
from .kernel import SigningKeyPair, rng_from_seed, sha256, verify
from .manager import ManagerConfig, ReferenceManager

DEFAULT_NOW = 1_700_000_000


# --- transport simulation ---------------------------------------------------------

class Tap:
    """Observation point on the front-end relay. Subclasses may record or mutate."""

    name = "tap"

    def observe(self, direction: str, data: bytes) -> bytes:
        return data


class FrontEndRelay:
    """Carries every request/response as canonical bytes through the taps, in order."""

    def __init__(self, taps: list[Tap] | None = None):
        self.taps: list[Tap] = list(taps or [])
        self.wire_log: list[tuple[str, bytes]] = []

    def send(self, direction: str, record: dict) -> dict:
        data = canonical_encode(record)
        for tap in self.taps:
            data = tap.observe(direction, data)
        self.wire_log.append((direction, data))
        try:
            return canonical_decode(data)
        except DecodeError as exc:
            raise errors.ParseError(f"relay carried a malformed record: {exc}") from exc


class SideChannel:
    """Out-of-band delivery (SMS/email stand-in). Codes are one-time."""

    def __init__(self):
        self._pending: dict[str, str] = {}
        self.deliveries: list[tuple[str, str]] = []

    def deposit(self, address: str, code: str) -> None:
        self._pending[address] = code
        self.deliveries.append((address, code))

    def receive(self, address: str) -> str | None:
        return self._pending.pop(address, None)


# --- backend ------------------------------------------------------------------------

@dataclass
class _UserRecord:
    identity: str
    password_hashes: dict = dc_field(default_factory=dict)  # field id -> (salt, digest)
    srp_records: dict = dc_field(default_factory=dict)  # field id -> verifier record
    signing_keys: dict = dc_field(default_factory=dict)  # field id -> public key bytes
    attributes: dict = dc_field(default_factory=dict)
    category: str | None = None


class BackendUserDB:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.users: dict[str, _UserRecord] = {}

    def ingest_account(self, account: dict) -> str:
        """Register the outcome of a save: hash passwords, keep verifiers and keys."""
        identity = None
        for record in account["fields"]:
            if record["kind"] == fields.KIND_IDENTITY:
                identity = record["value"]["text"]
                break
        if identity is None:
            for record in account["fields"]:
                if record["kind"] == fields.KIND_FOREIGN_IDENTITY:
                    identity = record["value"]["text"]
                    break
        if identity is None:
            raise errors.IncompleteFields("account has no identity field")
        user = _UserRecord(identity=identity)
        for record in account["fields"]:
            kind, value = record["kind"], record.get("value")
            if value is None:
                continue
            if kind == fields.KIND_PASSWORD:
                salt = self.rng.randbytes(16)
                digest = sha256(salt + value["text"].encode())
                user.password_hashes[record["id"]] = (salt, digest)
            elif kind == fields.KIND_SECURE_PASSWORD:
                raw_salt = value["salt"]
                user.srp_records[record["id"]] = {
                    "salt": bytes.fromhex(raw_salt) if isinstance(raw_salt, str) else raw_salt,
                    "verifier": int(value["verifier"], 16),
                    "group": value.get("group", "2048"),
                }
            elif kind == fields.KIND_KEY:
                key = value["publicKey"]
                user.signing_keys[record["id"]] = (
                    bytes.fromhex(key) if isinstance(key, str) else key
                )
        user.attributes = dict(account.get("attributes", {}))
        user.category = account.get("category")
        self.users[identity] = user
        return identity

    def lookup(self, identity: str) -> _UserRecord:
        user = self.users.get(identity)
        if user is None:
            raise errors.UnknownIdentity(identity)
        return user

    def verify_password(self, identity: str, field_id: str, password: str) -> bool:
        user = self.lookup(identity)
        entry = user.password_hashes.get(field_id)
        if entry is None:
            return False
        salt, digest = entry
        return sha256(salt + password.encode()) == digest

    def srp_start(self, identity: str, field_id: str):
        user = self.lookup(identity)
        entry = user.srp_records.get(field_id)
        if entry is None:
            raise errors.UnknownField(field_id)
        profile = srp.SrpProfile(group=srp.GROUPS[entry["group"]], hash_name="sha256")
        session, _B = srp.server_start(entry["verifier"], profile, self.rng)
        return entry["salt"], session, profile

    def key_for(self, identity: str, field_id: str) -> bytes:
        user = self.lookup(identity)
        key = user.signing_keys.get(field_id)
        if key is None:
            raise errors.UnknownField(field_id)
        return key

    def dump_bytes(self) -> bytes:
        chunks = []
        for identity in sorted(self.users):
            user = self.users[identity]
            record = {
                "identity": user.identity,
                "passwordHashes": {
                    fid: {"salt": salt, "digest": digest}
                    for fid, (salt, digest) in sorted(user.password_hashes.items())
                },
                "srp": {
                    fid: {
                        "salt": entry["salt"],
                        "verifier": srp.SrpProfile(
                            group=srp.GROUPS[entry["group"]], hash_name="sha256"
                        ).to_hex(entry["verifier"]),
                        "group": entry["group"],
                    }
                    for fid, entry in sorted(user.srp_records.items())
                },
                "signingKeys": {fid: key for fid, key in sorted(user.signing_keys.items())},
                "attributes": user.attributes,
            }
            if user.category is not None:
                record["category"] = user.category
            chunks.append(canonical_encode(record))
        return b"\n".join(chunks)


# --- world assembly --------------------------------------------------------------------

@dataclass
class World:
    rng: random.Random
    now: int
    orchestrator: Orchestrator
    trust_store: TrustStore
    relay: FrontEndRelay
    side_channel: SideChannel
    backend: BackendUserDB
    web_app_actor: ActorIdentity
    web_app_signing_key: SigningKeyPair | None
    managers: dict[str, ReferenceManager]
    root_key: SigningKeyPair | None = None


DEFAULT_PROFILE_FIXTURE = {
    "name": "Sam Doe",
    "given_name": "Sam",
    "family_name": "Doe",
    "nickname": "sam",
    "preferred_username": "sam.doe",
    "email": "sam.doe@example.org",
    "email_verified": True,
    "phone_number": "+15550001111",
    "picture": "https://pictures.example.org/sam.png",
    "birthdate": "1990-04-01",
    "address": {"locality": "Springfield", "country": "US"},
}


def make_crypto_actor(
    uri: str,
    signing_key: SigningKeyPair,
    root_key: SigningKeyPair,
    trust_store: TrustStore,
    now: int,
    allowlist_uris: list[str] | None = None,
) -> CryptoActor:
    """Issue a leaf certificate for the app key under the (registered) test root."""
    root_cert = make_certificate(
        serial=1,
        subject="test-root",
        issuer="test-root",
        issuer_key=root_key,
        subject_public_key=root_key.public,
        not_before=now - 1000,
        not_after=now + 10_000_000,
    )
    if not trust_store.contains(root_cert):
        trust_store.add_root(root_cert)
    allowlist = [
        SigningKeyAllowlistEntry(
            public_key=signing_key.public,
            uri_patterns=tuple(allowlist_uris or [uri + "*"]),
        )
    ]
    leaf = make_certificate(
        serial=2,
        subject="web-app",
        issuer="test-root",
        issuer_key=root_key,
        subject_public_key=signing_key.public,
        not_before=now - 1000,
        not_after=now + 10_000_000,
        allowlist=allowlist,
    )
    return CryptoActor(
        signing_public_key=signing_key.public,
        certificate_chain=(leaf, root_cert),
        claimed_origin=parse_origin(uri),
    )


def make_manager_actor(signing_key: SigningKeyPair, now: int) -> CryptoActor:
    # trust in the manager key comes from local registration, not a chain,
    # so a self-signed certificate is enough to carry the key
    cert = make_certificate(
        serial=1,
        subject="secret-manager",
        issuer="secret-manager",
        issuer_key=signing_key,
        subject_public_key=signing_key.public,
        not_before=now - 1000,
        not_after=now + 10_000_000,
    )
    return CryptoActor(
        signing_public_key=signing_key.public,
        certificate_chain=(cert,),
        claimed_origin=parse_origin("https://manager.local"),
    )


def build_world(
    seed,
    *,
    web_app_kind: str = "crypto",
    web_app_uri: str = "https://app.example.com",
    allowlist_uris: list[str] | None = None,
    manager_count: int = 1,
    taps: list[Tap] | None = None,
    user_profile: dict | None = None,
    manager_configs: list[ManagerConfig] | None = None,
    now: int = DEFAULT_NOW,
) -> World:
    rng = rng_from_seed(seed)
    orchestrator = Orchestrator()
    trust_store = TrustStore()
    relay = FrontEndRelay(taps)
    side_channel = SideChannel()
    backend = BackendUserDB(rng_from_seed(rng.randbytes(32)))

    root_key = SigningKeyPair.generate(rng)
    web_app_signing_key = None
    if web_app_kind == "crypto":
        web_app_signing_key = SigningKeyPair.generate(rng)
        web_app_actor: ActorIdentity = make_crypto_actor(
            web_app_uri, web_app_signing_key, root_key, trust_store, now, allowlist_uris
        )
    else:
        web_app_actor = parse_origin(web_app_uri)

    managers: dict[str, ReferenceManager] = {}
    for index in range(manager_count):
        manager_id = f"manager-{index + 1}"
        if manager_configs is not None and index < len(manager_configs):
            config = manager_configs[index]
        else:
            config = ManagerConfig(
                seed=rng.randbytes(32),
                user_profile=dict(user_profile or DEFAULT_PROFILE_FIXTURE),
            )
        config.side_channel = side_channel
        manager_key = SigningKeyPair.generate(rng)
        manager = ReferenceManager(
            manager_id,
            signing_key=manager_key,
            actor=make_manager_actor(manager_key, now),
            config=config,
        )
        orchestrator.register_manager(manager.registration())
        managers[manager_id] = manager

    return World(
        rng=rng,
        now=now,
        orchestrator=orchestrator,
        trust_store=trust_store,
        relay=relay,
        side_channel=side_channel,
        backend=backend,
        web_app_actor=web_app_actor,
        web_app_signing_key=web_app_signing_key,
        managers=managers,
        root_key=root_key,
    )


def open_channel(
    world: World,
    *,
    e2ee: bool = True,
    allowlist: set[str] | None = None,
    chooser=None,
) -> Channel:
    channel = world.orchestrator.create_channel(
        world.web_app_actor,
        SelectionPolicy(web_app_allowlist=allowlist, chooser=chooser),
        world.trust_store,
        world.now,
        relay=world.relay,
        rng=world.rng,
    )
    if e2ee:
        if world.web_app_signing_key is None:
            raise errors.E2EEUnavailable("origin-identified web app cannot run key exchange")
        channel.run_key_exchange(world.web_app_signing_key)
    return channel


# --- challenge drivers -----------------------------------------------------------------

@dataclass
class AuthOutcome:
    kind: str
    ok: bool
    detail: str = ""
    data: dict = dc_field(default_factory=dict)


def run_identification(operation, field_ids: list[str]) -> AuthOutcome:
    challenge = challenges.approve_challenge(operation, challenges.KIND_IDENTIFICATION)
    try:
        reply = challenges.challenge_send(
            challenge, "GetIdentityFields", {"fieldIds": list(field_ids)}
        )
    except errors.ManagerAborted as exc:
        return AuthOutcome("Identification", False, f"manager aborted: {exc.reason}")
    values = reply["payload"]["values"]
    challenges.close_challenge(challenge)
    return AuthOutcome("Identification", True, data={"values": values})


def run_password_auth(
    operation, backend: BackendUserDB, identity: str, field_ids: list[str]
) -> AuthOutcome:
    challenge = challenges.approve_challenge(operation, challenges.KIND_PASSWORD)
    try:
        reply = challenges.challenge_send(
            challenge, "GetPasswordFields", {"fieldIds": list(field_ids)}
        )
    except errors.ManagerAborted as exc:
        return AuthOutcome("Password", False, f"manager aborted: {exc.reason}")
    values = reply["payload"]["values"]
    for field_id in field_ids:
        if not backend.verify_password(identity, field_id, values.get(field_id, "")):
            challenges.abort_challenge(challenge, challenges.ABORT_INCORRECT_RESPONSE)
            return AuthOutcome("Password", False, f"backend rejected {field_id}")
    challenges.close_challenge(challenge)
    return AuthOutcome("Password", True, data={"values": values})


def run_signature_auth(
    operation, backend: BackendUserDB, identity: str, field_id: str, rng: random.Random
) -> AuthOutcome:
    challenge = challenges.approve_challenge(operation, challenges.KIND_DIGITAL_SIGNATURE)
    try:
        selected = challenges.challenge_send(challenge, "SelectKey", {"fieldId": field_id})
        offered_key = bytes.fromhex(selected["payload"]["publicKey"])
        if offered_key != backend.key_for(identity, field_id):
            challenges.abort_challenge(challenge, challenges.ABORT_INCORRECT_RESPONSE)
            return AuthOutcome("DigitalSignature", False, "unrecognized public key")
        nonce = rng.randbytes(32)
        signed = challenges.challenge_send(challenge, "SignNonce", {"nonce": nonce})
        signature = bytes.fromhex(signed["payload"]["signature"])
    except errors.ManagerAborted as exc:
        return AuthOutcome("DigitalSignature", False, f"manager aborted: {exc.reason}")
    message = canonical_encode(
        {
            "channelId": operation.channel.channel_id,
            "challengeId": challenge.challenge_id,
            "nonce": nonce,
        }
    )
    if not verify(offered_key, message, signature):
        challenges.abort_challenge(challenge, challenges.ABORT_INCORRECT_RESPONSE)
        return AuthOutcome("DigitalSignature", False, "signature does not verify")
    challenges.close_challenge(challenge)
    return AuthOutcome("DigitalSignature", True)


def run_srp_auth(operation, backend: BackendUserDB, field_id: str) -> AuthOutcome:
    challenge = challenges.approve_challenge(
        operation, challenges.KIND_SECURE_REMOTE_PASSWORD
    )
    try:
        hello = challenges.challenge_send(
            challenge, "SrpSelectSecurePassword", {"fieldId": field_id}
        )
        identity = hello["payload"]["identity"]
        try:
            salt, session, profile = backend.srp_start(identity, field_id)
        except (errors.UnknownIdentity, errors.UnknownField):
            challenges.abort_challenge(challenge, challenges.ABORT_GENERAL_ERROR)
            return AuthOutcome("SecureRemotePassword", False, "backend has no record")
        proof = challenges.challenge_send(
            challenge,
            "SrpServerPublic",
            {"salt": salt, "B": profile.to_hex(session.B)},
        )
        A = int(proof["payload"]["A"], 16)
        M1 = bytes.fromhex(proof["payload"]["M1"])
        try:
            M2, _session_key = srp.server_finish(session, A, M1)
        except (errors.ProofMismatch, errors.InvalidClientEphemeral):
            challenges.abort_challenge(challenge, challenges.ABORT_INCORRECT_RESPONSE)
            return AuthOutcome("SecureRemotePassword", False, "client proof rejected")
        done = challenges.challenge_send(challenge, "SrpServerProof", {"M2": M2})
    except errors.ManagerAborted as exc:
        return AuthOutcome("SecureRemotePassword", False, f"manager aborted: {exc.reason}")
    if not done["payload"].get("ok"):
        challenges.abort_challenge(challenge, challenges.ABORT_GENERAL_ERROR)
        return AuthOutcome("SecureRemotePassword", False, "manager did not accept the proof")
    challenges.close_challenge(challenge)
    return AuthOutcome("SecureRemotePassword", True, data={"identity": identity})


def run_otp_auth(
    operation,
    side_channel: SideChannel,
    identity: str,
    rng: random.Random,
    *,
    deliver: bool = True,
) -> AuthOutcome:
    challenge = challenges.approve_challenge(operation, challenges.KIND_OFF_CHANNEL_OTP)
    code = f"{rng.randrange(1_000_000):06d}"
    if deliver:
        side_channel.deposit(identity, code)
    try:
        reply = challenges.challenge_send(
            challenge, "ChallengeOtp", {"channelHint": "sms-sim"}
        )
    except errors.ManagerAborted as exc:
        return AuthOutcome("OffChannelOtp", False, f"manager aborted: {exc.reason}")
    if reply["payload"]["otp"] != code:
        challenges.abort_challenge(challenge, challenges.ABORT_INCORRECT_RESPONSE)
        return AuthOutcome("OffChannelOtp", False, "code mismatch")
    challenges.close_challenge(challenge)
    return AuthOutcome("OffChannelOtp", True)


def run_custom_auth(
    operation, schema: dict, request_payload: dict, *, responder: str = "default"
) -> AuthOutcome:
    challenge = challenges.approve_challenge(
        operation,
        challenges.KIND_CUSTOM,
        {"schema": schema, "responder": responder},
    )
    try:
        reply = challenges.challenge_send(challenge, "Echo", request_payload)
    except errors.ManagerAborted as exc:
        return AuthOutcome("Custom", False, f"manager aborted: {exc.reason}")
    challenges.close_challenge(challenge)
    return AuthOutcome("Custom", True, data={"reply": reply["payload"]})
