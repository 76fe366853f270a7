"""Party identities: origin actors, crypto actors, and the test certificate chain.

A web app is identified either by its https origin alone, or by an Ed25519 signing
key certified through a chain of test certificates whose leaf carries a signing-key
allowlist: which keys may act for which URIs. Certificates here are canonical
records signed by a local test CA rather than real X.509, but chain verification,
validity windows, and the allowlist semantics behave the same way.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass
from urllib.parse import urlsplit

from . import errors
from .encoding import canonical_encode, canonical_decode, DecodeError
from .kernel import SigningKeyPair, sign, verify


# --- origins ----------------------------------------------------------------------

@dataclass(frozen=True)
class OriginActor:
    uri: str
    scheme: str
    host: str
    port: int
    path: str


def parse_origin(uri: str) -> OriginActor:
    """Normalize an absolute https URI into an origin actor.

    Host and scheme are lowercased, the default port is elided, and the path is kept
    verbatim. Query and fragment do not survive normalization; URIs carrying
    userinfo are rejected outright.
    """
    if not isinstance(uri, str) or not uri:
        raise errors.MalformedUri("empty URI")
    try:
        parts = urlsplit(uri)
    except ValueError as exc:
        raise errors.MalformedUri(str(exc)) from exc
    if not parts.scheme or not parts.netloc:
        raise errors.MalformedUri(f"not an absolute URI: {uri!r}")
    scheme = parts.scheme.lower()
    if scheme != "https":
        raise errors.NonHttpsScheme(f"scheme {scheme!r} is not permitted")
    if "@" in parts.netloc:
        raise errors.MalformedUri("userinfo is not permitted")
    host = (parts.hostname or "").lower()
    if not host:
        raise errors.MalformedUri("missing host")
    try:
        port = parts.port
    except ValueError as exc:
        raise errors.MalformedUri("invalid port") from exc
    if port is None:
        port = 443
    path = parts.path
    authority = host if port == 443 else f"{host}:{port}"
    return OriginActor(
        uri=f"https://{authority}{path}",
        scheme=scheme,
        host=host,
        port=port,
        path=path,
    )


# --- certificates -----------------------------------------------------------------

@dataclass(frozen=True)
class SigningKeyAllowlistEntry:
    public_key: bytes
    uri_patterns: tuple[str, ...]

    def __post_init__(self):
        if not self.uri_patterns:
            raise ValueError("allowlist entry needs at least one URI pattern")
        for pattern in self.uri_patterns:
            # must parse as an https URI once the trailing star is stripped
            parse_origin(pattern[:-1] if pattern.endswith("*") else pattern)

    def to_record(self) -> dict:
        return {"publicKey": self.public_key, "uriPatterns": list(self.uri_patterns)}

    @classmethod
    def from_record(cls, record: dict) -> "SigningKeyAllowlistEntry":
        return cls(
            public_key=_as_bytes(record["publicKey"]),
            uri_patterns=tuple(record["uriPatterns"]),
        )


@dataclass(frozen=True)
class TestCertificate:
    serial: int
    subject: str
    issuer: str
    not_before: int
    not_after: int
    subject_public_key: bytes
    allowlist: tuple[SigningKeyAllowlistEntry, ...] | None
    issuer_signature: bytes

    def signed_payload(self) -> bytes:
        return canonical_encode(self._payload_record())

    def _payload_record(self) -> dict:
        record = {
            "serial": self.serial,
            "subject": self.subject,
            "issuer": self.issuer,
            "notBefore": self.not_before,
            "notAfter": self.not_after,
            "subjectPublicKey": self.subject_public_key,
        }
        if self.allowlist is not None:
            record["allowlist"] = [entry.to_record() for entry in self.allowlist]
        return record

    def to_record(self) -> dict:
        record = self._payload_record()
        record["issuerSignature"] = self.issuer_signature
        return record

    @classmethod
    def from_record(cls, record: dict) -> "TestCertificate":
        allowlist = None
        if "allowlist" in record:
            allowlist = tuple(
                SigningKeyAllowlistEntry.from_record(e) for e in record["allowlist"]
            )
        return cls(
            serial=record["serial"],
            subject=record["subject"],
            issuer=record["issuer"],
            not_before=record["notBefore"],
            not_after=record["notAfter"],
            subject_public_key=_as_bytes(record["subjectPublicKey"]),
            allowlist=allowlist,
            issuer_signature=_as_bytes(record["issuerSignature"]),
        )


def _as_bytes(value) -> bytes:
    return bytes.fromhex(value) if isinstance(value, str) else bytes(value)


def make_certificate(
    *,
    serial: int,
    subject: str,
    issuer: str,
    issuer_key: SigningKeyPair,
    subject_public_key: bytes,
    not_before: int,
    not_after: int,
    allowlist: list[SigningKeyAllowlistEntry] | None = None,
) -> TestCertificate:
    if not not_before < not_after:
        raise ValueError("notBefore must precede notAfter")
    unsigned = TestCertificate(
        serial=serial,
        subject=subject,
        issuer=issuer,
        not_before=not_before,
        not_after=not_after,
        subject_public_key=subject_public_key,
        allowlist=tuple(allowlist) if allowlist is not None else None,
        issuer_signature=b"",
    )
    signature = sign(issuer_key, unsigned.signed_payload())
    return TestCertificate(
        serial=unsigned.serial,
        subject=unsigned.subject,
        issuer=unsigned.issuer,
        not_before=unsigned.not_before,
        not_after=unsigned.not_after,
        subject_public_key=unsigned.subject_public_key,
        allowlist=unsigned.allowlist,
        issuer_signature=signature,
    )


_ARMOR_HEADER = "-----BEGIN BERYTUS TEST CERTIFICATE-----"
_ARMOR_FOOTER = "-----END BERYTUS TEST CERTIFICATE-----"


def certificate_to_armor(cert: TestCertificate) -> str:
    body = base64.b64encode(canonical_encode(cert.to_record())).decode("ascii")
    lines = [body[i : i + 64] for i in range(0, len(body), 64)]
    return "\n".join([_ARMOR_HEADER, *lines, _ARMOR_FOOTER]) + "\n"


def certificate_from_armor(text: str) -> TestCertificate:
    lines = [line.strip() for line in text.strip().splitlines()]
    if not lines or lines[0] != _ARMOR_HEADER or lines[-1] != _ARMOR_FOOTER:
        raise errors.ParseError("missing certificate armor")
    try:
        raw = base64.b64decode("".join(lines[1:-1]), validate=True)
        return TestCertificate.from_record(canonical_decode(raw))
    except (ValueError, KeyError, DecodeError) as exc:
        raise errors.ParseError(f"bad certificate body: {exc}") from exc


class TrustStore:
    """Set of self-signed roots. Roots must verify under their own key."""

    def __init__(self, roots: list[TestCertificate] | None = None):
        self._roots: list[TestCertificate] = []
        for root in roots or []:
            self.add_root(root)

    def add_root(self, root: TestCertificate) -> None:
        if not verify(root.subject_public_key, root.signed_payload(), root.issuer_signature):
            raise errors.SignatureInvalid("root certificate is not properly self-signed")
        self._roots.append(root)

    def contains(self, cert: TestCertificate) -> bool:
        needle = canonical_encode(cert.to_record())
        return any(canonical_encode(root.to_record()) == needle for root in self._roots)


def verify_certificate_chain(
    chain: list[TestCertificate], store: TrustStore, now: int
) -> None:
    """Leaf-first chain verification against the trust store at time ``now``."""
    if not chain:
        raise errors.SignatureInvalid("empty certificate chain")
    for index, cert in enumerate(chain):
        if now < cert.not_before:
            raise errors.NotYetValid(f"certificate {cert.subject!r} not yet valid")
        if now > cert.not_after:
            raise errors.Expired(f"certificate {cert.subject!r} expired")
        signer = chain[index + 1] if index + 1 < len(chain) else cert
        if not verify(signer.subject_public_key, cert.signed_payload(), cert.issuer_signature):
            raise errors.SignatureInvalid(f"bad signature on certificate {cert.subject!r}")
    if not store.contains(chain[-1]):
        raise errors.UntrustedRoot(f"chain does not terminate at a trusted root")


# --- crypto actors ------------------------------------------------------------------

@dataclass(frozen=True)
class CryptoActor:
    signing_public_key: bytes
    certificate_chain: tuple[TestCertificate, ...]
    claimed_origin: OriginActor

    def __post_init__(self):
        if not self.certificate_chain:
            raise ValueError("crypto actor requires a certificate chain")


ActorIdentity = OriginActor | CryptoActor


def _pattern_matches(pattern: str, claimed: OriginActor) -> bool:
    prefix = pattern.endswith("*")
    target = parse_origin(pattern[:-1] if prefix else pattern)
    if (target.scheme, target.host, target.port) != (claimed.scheme, claimed.host, claimed.port):
        return False
    if prefix:
        return claimed.path.startswith(target.path)
    return claimed.path == target.path


def validate_crypto_actor(
    actor: CryptoActor, claimed_uri: str, store: TrustStore, now: int
) -> None:
    """Chain must verify and the leaf allowlist must grant the key the claimed URI."""
    claimed = parse_origin(claimed_uri)
    verify_certificate_chain(list(actor.certificate_chain), store, now)
    leaf = actor.certificate_chain[0]
    entries = [
        entry
        for entry in (leaf.allowlist or ())
        if entry.public_key == actor.signing_public_key
    ]
    if not entries:
        raise errors.KeyNotAllowlisted("signing key absent from the leaf allowlist")
    for entry in entries:
        if any(_pattern_matches(pattern, claimed) for pattern in entry.uri_patterns):
            return
    raise errors.UriNotPermitted(f"{claimed.uri!r} not covered by the key's URI patterns")


def actor_mapping_id(actor: ActorIdentity) -> str:
    """Stable mapping identifier: per-origin for origin actors, per-key otherwise."""
    if isinstance(actor, OriginActor):
        authority = actor.host if actor.port == 443 else f"{actor.host}:{actor.port}"
        return f"origin:{actor.scheme}://{authority}"
    if isinstance(actor, CryptoActor):
        return f"appkey:{actor.signing_public_key.hex()}"
    raise TypeError(f"not an actor identity: {type(actor).__name__}")


def actor_to_record(actor: ActorIdentity) -> dict:
    if isinstance(actor, OriginActor):
        return {"type": "origin", "uri": actor.uri}
    return {
        "type": "crypto",
        "signingPublicKey": actor.signing_public_key,
        "certificateChain": [cert.to_record() for cert in actor.certificate_chain],
        "claimedUri": actor.claimed_origin.uri,
    }


def actor_from_record(record: dict) -> ActorIdentity:
    if record["type"] == "origin":
        return parse_origin(record["uri"])
    return CryptoActor(
        signing_public_key=_as_bytes(record["signingPublicKey"]),
        certificate_chain=tuple(
            TestCertificate.from_record(c) for c in record["certificateChain"]
        ),
        claimed_origin=parse_origin(record["claimedUri"]),
    )
