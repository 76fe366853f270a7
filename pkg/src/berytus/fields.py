"""Account field kinds, values, composition policies, and the producibility rules.

Six field kinds exist. Two of them — SecurePassword and Key — may only ever be
produced by the secret manager; the web app can supply values for the rest.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field

from . import srp
from .errors import UnsatisfiablePolicy, ValueViolatesOptions

KIND_IDENTITY = "Identity"
KIND_FOREIGN_IDENTITY = "ForeignIdentity"
KIND_PASSWORD = "Password"
KIND_SECURE_PASSWORD = "SecurePassword"
KIND_KEY = "Key"
KIND_PRIVATE_KEY = "PrivateKey"

ALL_KINDS = (
    KIND_IDENTITY,
    KIND_FOREIGN_IDENTITY,
    KIND_PASSWORD,
    KIND_SECURE_PASSWORD,
    KIND_KEY,
    KIND_PRIVATE_KEY,
)

# Which side may produce a value for each kind.
PRODUCIBLE_BY = {
    KIND_IDENTITY: frozenset({"app", "manager"}),
    KIND_FOREIGN_IDENTITY: frozenset({"app", "manager"}),
    KIND_PASSWORD: frozenset({"app", "manager"}),
    KIND_SECURE_PASSWORD: frozenset({"manager"}),
    KIND_KEY: frozenset({"manager"}),
    KIND_PRIVATE_KEY: frozenset({"app", "manager"}),
}

MANAGER_ONLY_KINDS = frozenset(
    kind for kind, producers in PRODUCIBLE_BY.items() if producers == {"manager"}
)

IDENTITY_ALPHABET = string.ascii_letters + string.digits + "._-"

CLASS_CHARS = {
    "lower": string.ascii_lowercase,
    "upper": string.ascii_uppercase,
    "digit": string.digits,
    "symbol": "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~",
}

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_PHONE_RE = re.compile(r"^\+?[0-9]{7,15}$")


@dataclass(frozen=True)
class PasswordCompositionPolicy:
    min_length: int = 16
    max_length: int = 64
    required_classes: frozenset = frozenset({"lower", "upper", "digit", "symbol"})
    forbidden_characters: str = ""

    def __post_init__(self):
        unknown = set(self.required_classes) - set(CLASS_CHARS)
        if unknown:
            raise ValueError(f"unknown character classes: {sorted(unknown)}")

    def alphabet(self) -> str:
        chars = "".join(CLASS_CHARS.values())
        return "".join(c for c in chars if c not in self.forbidden_characters)

    def check_satisfiable(self) -> None:
        if self.min_length > self.max_length:
            raise UnsatisfiablePolicy("minLength exceeds maxLength")
        if self.max_length < len(self.required_classes):
            raise UnsatisfiablePolicy("too few positions for the required classes")
        for cls in self.required_classes:
            remaining = [c for c in CLASS_CHARS[cls] if c not in self.forbidden_characters]
            if not remaining:
                raise UnsatisfiablePolicy(f"class {cls!r} entirely forbidden")

    def satisfied_by(self, password: str) -> bool:
        if not (self.min_length <= len(password) <= self.max_length):
            return False
        if any(c in self.forbidden_characters for c in password):
            return False
        for cls in self.required_classes:
            if not any(c in CLASS_CHARS[cls] for c in password):
                return False
        return True

    def to_record(self) -> dict:
        return {
            "minLength": self.min_length,
            "maxLength": self.max_length,
            "requiredClasses": sorted(self.required_classes),
            "forbiddenCharacters": self.forbidden_characters,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PasswordCompositionPolicy":
        if record is None:
            return cls()
        return cls(
            min_length=record.get("minLength", 16),
            max_length=record.get("maxLength", 64),
            required_classes=frozenset(
                record.get("requiredClasses", ["lower", "upper", "digit", "symbol"])
            ),
            forbidden_characters=record.get("forbiddenCharacters", ""),
        )


# --- field values ------------------------------------------------------------------

@dataclass(frozen=True)
class TextValue:
    text: str

    def to_record(self):
        return {"type": "text", "text": self.text}


@dataclass(frozen=True)
class SecurePasswordRecordValue:
    salt: bytes
    verifier: int
    group: str = "2048"

    def to_record(self):
        profile = srp.SrpProfile(group=srp.GROUPS[self.group], hash_name="sha256")
        return {
            "type": "securePassword",
            "salt": self.salt,
            "verifier": profile.to_hex(self.verifier),
            "group": self.group,
        }


@dataclass(frozen=True)
class PublicKeyValue:
    public_key: bytes

    def to_record(self):
        return {"type": "publicKey", "publicKey": self.public_key}


@dataclass(frozen=True)
class WrappedPrivateKeyValue:
    blob: bytes

    def to_record(self):
        return {"type": "wrappedPrivateKey", "blob": self.blob}


FieldValue = TextValue | SecurePasswordRecordValue | PublicKeyValue | WrappedPrivateKeyValue


def value_from_record(record) -> FieldValue:
    if record is None:
        raise ValueError("missing value record")
    tag = record["type"]
    if tag == "text":
        return TextValue(text=record["text"])
    if tag == "securePassword":
        salt = record["salt"]
        return SecurePasswordRecordValue(
            salt=bytes.fromhex(salt) if isinstance(salt, str) else salt,
            verifier=int(record["verifier"], 16),
            group=record.get("group", "2048"),
        )
    if tag == "publicKey":
        key = record["publicKey"]
        return PublicKeyValue(public_key=bytes.fromhex(key) if isinstance(key, str) else key)
    if tag == "wrappedPrivateKey":
        blob = record["blob"]
        return WrappedPrivateKeyValue(blob=bytes.fromhex(blob) if isinstance(blob, str) else blob)
    raise ValueError(f"unknown value type {tag!r}")


@dataclass
class FieldDescriptor:
    id: str
    kind: str
    options: dict = field(default_factory=dict)
    value: FieldValue | None = None

    def to_record(self) -> dict:
        record = {"id": self.id, "kind": self.kind, "options": self.options}
        if self.value is not None:
            record["value"] = self.value.to_record()
        return record

    @classmethod
    def from_record(cls, record: dict) -> "FieldDescriptor":
        return cls(
            id=record["id"],
            kind=record["kind"],
            options=record.get("options", {}),
            value=value_from_record(record["value"]) if "value" in record else None,
        )


def validate_value(kind: str, options: dict, value: FieldValue) -> None:
    """Raise ValueViolatesOptions unless ``value`` fits the kind and its options."""
    if kind == KIND_IDENTITY:
        if not isinstance(value, TextValue):
            raise ValueViolatesOptions("identity value must be text")
        max_length = options.get("maxLength", 64)
        if not value.text or len(value.text) > max_length:
            raise ValueViolatesOptions(f"identity length must be 1..{max_length}")
        allowed = set(options.get("allowedCharacters", IDENTITY_ALPHABET))
        if not set(value.text) <= allowed:
            raise ValueViolatesOptions("identity contains characters outside the allowed set")
    elif kind == KIND_FOREIGN_IDENTITY:
        if not isinstance(value, TextValue):
            raise ValueViolatesOptions("foreign identity value must be text")
        flavor = options.get("kind", "email")
        pattern = _EMAIL_RE if flavor == "email" else _PHONE_RE
        if not pattern.match(value.text):
            raise ValueViolatesOptions(f"not a syntactically valid {flavor}")
    elif kind == KIND_PASSWORD:
        if not isinstance(value, TextValue):
            raise ValueViolatesOptions("password value must be text")
        policy = PasswordCompositionPolicy.from_record(options.get("policy"))
        if not policy.satisfied_by(value.text):
            raise ValueViolatesOptions("password does not satisfy the composition policy")
    elif kind == KIND_SECURE_PASSWORD:
        if not isinstance(value, SecurePasswordRecordValue):
            raise ValueViolatesOptions("value must be a salt/verifier record")
        group = srp.GROUPS.get(value.group)
        if group is None:
            raise ValueViolatesOptions(f"unknown group {value.group!r}")
        if not 0 < value.verifier < group.N:
            raise ValueViolatesOptions("verifier out of range for the group")
    elif kind == KIND_KEY:
        if not isinstance(value, PublicKeyValue) or len(value.public_key) != 32:
            raise ValueViolatesOptions("value must be a 32-byte verification key")
    elif kind == KIND_PRIVATE_KEY:
        if not isinstance(value, WrappedPrivateKeyValue) or not value.blob:
            raise ValueViolatesOptions("value must be a non-empty wrapped key blob")
    else:
        raise ValueViolatesOptions(f"unknown field kind {kind!r}")


def value_bytes_for_scan(value: FieldValue) -> list[bytes]:
    """Byte needles a scanner should look for when this value is a planted secret."""
    if isinstance(value, TextValue):
        return [value.text.encode("utf-8")]
    if isinstance(value, SecurePasswordRecordValue):
        return []  # the verifier is not secret; the internal password is tracked separately
    if isinstance(value, PublicKeyValue):
        return []
    if isinstance(value, WrappedPrivateKeyValue):
        return [value.blob, value.blob.hex().encode("ascii")]
    return []
