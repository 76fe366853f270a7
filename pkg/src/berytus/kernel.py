"""Crypto kernel: signing, key agreement, key derivation, sealing, hashing.

All primitives are deterministic given their inputs; randomness only enters through
explicitly passed generators so whole protocol runs can be replayed bit-for-bit.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives import hashes

from .encoding import canonical_encode
from .errors import AllZeroOutput, AuthFailure, ReplayDetected

DIR_APP_TO_SM = "app->sm"
DIR_SM_TO_APP = "sm->app"

_KDF_LABELS = {
    DIR_APP_TO_SM: b"berytus/e2ee/app->sm",
    DIR_SM_TO_APP: b"berytus/e2ee/sm->app",
}


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def rng_from_seed(seed) -> random.Random:
    """Deterministic generator from a seed (bytes, hex text, or int)."""
    if isinstance(seed, str):
        seed = bytes.fromhex(seed)
    if isinstance(seed, (bytes, bytearray)):
        seed = int.from_bytes(bytes(seed), "big")
    return random.Random(seed)


# --- signing ---------------------------------------------------------------------

@dataclass(frozen=True)
class SigningKeyPair:
    secret: bytes  # 32-byte seed
    public: bytes  # 32-byte verification key

    @classmethod
    def from_seed(cls, seed: bytes) -> "SigningKeyPair":
        if len(seed) != 32:
            raise ValueError("signing seed must be 32 bytes")
        public = Ed25519PrivateKey.from_private_bytes(seed).public_key().public_bytes_raw()
        return cls(secret=seed, public=public)

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "SigningKeyPair":
        seed = rng.randbytes(32) if rng is not None else random.SystemRandom().randbytes(32)
        return cls.from_seed(seed)


def sign(key: SigningKeyPair, message: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(key.secret).sign(message)


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid; never raises on bad input."""
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# --- key agreement ---------------------------------------------------------------

def generate_exchange_keypair(rng: random.Random | None = None) -> tuple[bytes, bytes]:
    """Fresh X25519 (secret, public) pair."""
    secret = rng.randbytes(32) if rng is not None else random.SystemRandom().randbytes(32)
    public = X25519PrivateKey.from_private_bytes(secret).public_key().public_bytes_raw()
    return secret, public


def x25519(secret: bytes, public_share: bytes) -> bytes:
    """Raw Diffie-Hellman; rejects the all-zero (low order) result."""
    try:
        shared = X25519PrivateKey.from_private_bytes(secret).exchange(
            X25519PublicKey.from_public_bytes(public_share)
        )
    except ValueError as exc:
        raise AllZeroOutput(str(exc)) from exc
    if shared == bytes(32):
        raise AllZeroOutput("shared secret is all zeros")
    return shared


@dataclass
class KeyAgreementTranscript:
    """What both parties sign and hash during the handshake.

    The web app signs the partial transcript (before the manager's share exists)
    with role label "webapp"; the manager signs the full transcript with role label
    "manager". Role labels prevent one side's signature being reflected as the
    other's.
    """

    channel_id: bytes
    web_app_actor_id: str
    manager_actor_id: str
    web_app_share: bytes
    manager_share: bytes | None = None
    web_app_signature: bytes | None = None
    manager_signature: bytes | None = None

    def record(self) -> dict:
        """Signature-free transcript record (requires both shares)."""
        if self.manager_share is None:
            raise ValueError("transcript incomplete: manager share missing")
        return {
            "channelId": self.channel_id,
            "webAppActorId": self.web_app_actor_id,
            "managerActorId": self.manager_actor_id,
            "webAppShare": self.web_app_share,
            "managerShare": self.manager_share,
        }

    def web_app_signing_payload(self) -> bytes:
        return canonical_encode({
            "channelId": self.channel_id,
            "webAppActorId": self.web_app_actor_id,
            "managerActorId": self.manager_actor_id,
            "webAppShare": self.web_app_share,
            "role": "webapp",
        })

    def manager_signing_payload(self) -> bytes:
        record = self.record()
        record["role"] = "manager"
        return canonical_encode(record)

    def transcript_hash(self) -> bytes:
        return sha256(canonical_encode(self.record()))


# --- session keys and sealing ------------------------------------------------------

@dataclass
class SessionKeySet:
    """Directional AEAD keys plus send/receive counters.

    One party owns one instance; it seals on its outgoing direction and opens on the
    incoming one. Counters are per direction: sends are numbered 0,1,2,... and a
    received sequence number must exceed everything seen before (replay window of
    size one — messages are strictly ordered on a channel).
    """

    key_app_to_manager: bytes
    key_manager_to_app: bytes
    _send_seq: dict = field(default_factory=dict, repr=False)
    _recv_last: dict = field(default_factory=dict, repr=False)

    def _key_for(self, direction: str) -> bytes:
        if direction == DIR_APP_TO_SM:
            return self.key_app_to_manager
        if direction == DIR_SM_TO_APP:
            return self.key_manager_to_app
        raise ValueError(f"unknown direction {direction!r}")

    def zeroize(self) -> None:
        self.key_app_to_manager = b""
        self.key_manager_to_app = b""


@dataclass(frozen=True)
class SealedEnvelope:
    direction: str
    seq: int
    nonce: bytes  # 12 bytes: 4 zero bytes || big-endian seq
    ciphertext: bytes  # includes the 16-byte tag

    def to_record(self) -> dict:
        return {
            "direction": self.direction,
            "seq": self.seq,
            "nonce": self.nonce,
            "ciphertext": self.ciphertext,
        }

    @classmethod
    def from_record(cls, record: dict) -> "SealedEnvelope":
        return cls(
            direction=record["direction"],
            seq=record["seq"],
            nonce=bytes.fromhex(record["nonce"]) if isinstance(record["nonce"], str) else record["nonce"],
            ciphertext=bytes.fromhex(record["ciphertext"])
            if isinstance(record["ciphertext"], str)
            else record["ciphertext"],
        )


def _nonce_for(seq: int) -> bytes:
    return bytes(4) + seq.to_bytes(8, "big")


def derive_session_keys(shared: bytes, transcript_hash: bytes) -> SessionKeySet:
    """HKDF-SHA-256, salted with the transcript hash, one key per direction."""
    keys = {}
    for direction, label in _KDF_LABELS.items():
        keys[direction] = HKDF(
            algorithm=hashes.SHA256(),
            length=32,
            salt=transcript_hash,
            info=label,
        ).derive(shared)
    keyset = SessionKeySet(
        key_app_to_manager=keys[DIR_APP_TO_SM],
        key_manager_to_app=keys[DIR_SM_TO_APP],
    )
    assert keyset.key_app_to_manager != keyset.key_manager_to_app
    return keyset


def seal(keys: SessionKeySet, direction: str, plaintext: bytes, aad: bytes) -> SealedEnvelope:
    seq = keys._send_seq.get(direction, 0)
    keys._send_seq[direction] = seq + 1
    nonce = _nonce_for(seq)
    ciphertext = ChaCha20Poly1305(keys._key_for(direction)).encrypt(nonce, plaintext, aad)
    return SealedEnvelope(direction=direction, seq=seq, nonce=nonce, ciphertext=ciphertext)


def open_envelope(keys: SessionKeySet, envelope: SealedEnvelope, aad: bytes) -> bytes:
    """Decrypt and authenticate; failed opens never advance the replay window."""
    last = keys._recv_last.get(envelope.direction)
    if last is not None and envelope.seq <= last:
        raise ReplayDetected(f"seq {envelope.seq} already seen")
    if envelope.nonce != _nonce_for(envelope.seq):
        raise AuthFailure("nonce does not match sequence number")
    try:
        plaintext = ChaCha20Poly1305(keys._key_for(envelope.direction)).decrypt(
            envelope.nonce, envelope.ciphertext, aad
        )
    except InvalidTag as exc:
        raise AuthFailure("seal authentication failed") from exc
    keys._recv_last[envelope.direction] = envelope.seq
    return plaintext
