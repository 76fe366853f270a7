"""SRP-6a: verifier production at registration, proof exchange at authentication.

The artifact profile is SHA-256 over the 2048-bit group; the math is parameterized
over (hash, group) so the interoperability vectors, which use SHA-1 over the
1024-bit group, run against the very same code path.

Naming follows the customary SRP variables: N, g, k, x, v, a/A, b/B, u, S, K,
M1/M2. All values are reduced modulo N and hashed after left-padding to the byte
length of N.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .errors import (
    InvalidClientEphemeral,
    InvalidServerEphemeral,
    ProofMismatch,
)

_GROUP_2048_HEX = (
    "AC6BDB41324A9A9BF166DE5E1389582FAF72B6651987EE07FC3192943DB56050"
    "A37329CBB4A099ED8193E0757767A13DD52312AB4B03310DCD7F48A9DA04FD50"
    "E8083969EDB767B0CF6095179A163AB3661A05FBD5FAAAE82918A9962F0B93B8"
    "55F97993EC975EEAA80D740ADBF4FF747359D041D5C33EA71D281E446B14773B"
    "CA97B43A23FB801676BD207A436C6481F1D2B9078717461A5B9D32E688F87748"
    "544523B524B0D57D5EA77A2775D2ECFA032CFBDBF52FB3786160279004E57AE6"
    "AF874E7303CE53299CCC041C7BC308D82A5698F3A8D0C38271AE35F8E9DBFBB6"
    "94B5C803D89F7AE435DE236D525F54759B65E372FCD68EF20FA7111F9E4AFF73"
)

_GROUP_1024_HEX = (
    "EEAF0AB9ADB38DD69C33F80AFA8FC5E86072618775FF3C0B9EA2314C9C256576"
    "D674DF7496EA81D3383B4813D692C6E0E0D5D8E250B98BE48E495C1D6089DAD1"
    "5DC7D7B46154D6B6CE8EF4AD69B15D4982559B297BCF1885C529F566660E57EC"
    "68EDBC3C05726CC02FD4CBF4976EAA9AFD5138FE8376435B9FC61D2FC0EB06E3"
)


@dataclass(frozen=True)
class SrpGroup:
    N: int
    g: int

    @property
    def byte_length(self) -> int:
        return (self.N.bit_length() + 7) // 8


GROUP_2048 = SrpGroup(N=int(_GROUP_2048_HEX, 16), g=2)
GROUP_1024 = SrpGroup(N=int(_GROUP_1024_HEX, 16), g=2)

GROUPS = {"2048": GROUP_2048, "1024": GROUP_1024}


@dataclass(frozen=True)
class SrpProfile:
    group: SrpGroup
    hash_name: str  # any hashlib algorithm name

    def H(self, *parts: bytes) -> int:
        h = hashlib.new(self.hash_name)
        for part in parts:
            h.update(part)
        return int.from_bytes(h.digest(), "big")

    def H_bytes(self, *parts: bytes) -> bytes:
        h = hashlib.new(self.hash_name)
        for part in parts:
            h.update(part)
        return h.digest()

    def pad(self, value: int) -> bytes:
        return value.to_bytes(self.group.byte_length, "big")

    @property
    def k(self) -> int:
        return self.H(self.pad(self.group.N), self.pad(self.group.g))

    def to_hex(self, value: int) -> str:
        """Wire form of a group element: lowercase hex, padded to modulus length."""
        return self.pad(value).hex()


DEFAULT_PROFILE = SrpProfile(group=GROUP_2048, hash_name="sha256")
INTEROP_PROFILE = SrpProfile(group=GROUP_1024, hash_name="sha1")


@dataclass(frozen=True)
class SrpVerifierRecord:
    salt: bytes
    verifier: int

    def __post_init__(self):
        if self.verifier <= 0:
            raise ValueError("verifier must be positive")


def _private_x(identity: str, password: str, salt: bytes, profile: SrpProfile) -> int:
    inner = profile.H_bytes(identity.encode("utf-8") + b":" + password.encode("utf-8"))
    return profile.H(salt + inner)


def compute_verifier(
    identity: str, password: str, salt: bytes, profile: SrpProfile = DEFAULT_PROFILE
) -> SrpVerifierRecord:
    """x = H(salt || H(identity ":" password)); v = g^x mod N."""
    if not identity or not password:
        raise ValueError("identity and password must be non-empty")
    x = _private_x(identity, password, salt, profile)
    v = pow(profile.group.g, x, profile.group.N)
    return SrpVerifierRecord(salt=salt, verifier=v)


@dataclass
class SrpServerSession:
    profile: SrpProfile
    verifier: int
    b: int
    B: int


def server_start(
    verifier: int,
    profile: SrpProfile = DEFAULT_PROFILE,
    rng: random.Random | None = None,
    b: int | None = None,
) -> tuple[SrpServerSession, int]:
    """Pick the server ephemeral and publish B = (k*v + g^b) mod N."""
    N, g = profile.group.N, profile.group.g
    draw = rng.getrandbits if rng is not None else random.SystemRandom().getrandbits
    while True:
        if b is None:
            candidate = draw(256)
        else:
            candidate = b
        B = (profile.k * verifier + pow(g, candidate, N)) % N
        if B % N != 0 and candidate != 0:
            break
        if b is not None:
            raise InvalidServerEphemeral("fixed ephemeral produces B = 0")
    session = SrpServerSession(profile=profile, verifier=verifier, b=candidate, B=B)
    return session, B


@dataclass(frozen=True)
class SrpClientResult:
    A: int
    premaster: int
    session_key: bytes  # K = H(pad(S))
    M1: bytes


def client_respond(
    identity: str,
    password: str,
    salt: bytes,
    a: int,
    B: int,
    profile: SrpProfile = DEFAULT_PROFILE,
) -> SrpClientResult:
    """Client side of the exchange: A = g^a, S, K, and the proof M1."""
    N, g = profile.group.N, profile.group.g
    if B % N == 0:
        raise InvalidServerEphemeral("B is congruent to 0 mod N")
    A = pow(g, a, N)
    u = profile.H(profile.pad(A), profile.pad(B))
    if u == 0:
        raise InvalidServerEphemeral("scrambling parameter is zero")
    x = _private_x(identity, password, salt, profile)
    base = (B - profile.k * pow(g, x, N)) % N
    S = pow(base, a + u * x, N)
    K = profile.H_bytes(profile.pad(S))
    M1 = profile.H_bytes(profile.pad(A), profile.pad(B), K)
    return SrpClientResult(A=A, premaster=S, session_key=K, M1=M1)


def server_finish(session: SrpServerSession, A: int, M1: bytes) -> tuple[bytes, bytes]:
    """Check the client proof; on success return (M2, K)."""
    profile = session.profile
    N = profile.group.N
    if A % N == 0:
        raise InvalidClientEphemeral("A is congruent to 0 mod N")
    u = profile.H(profile.pad(A), profile.pad(session.B))
    if u == 0:
        raise InvalidClientEphemeral("scrambling parameter is zero")
    S = pow(A * pow(session.verifier, u, N) % N, session.b, N)
    K = profile.H_bytes(profile.pad(S))
    expected_m1 = profile.H_bytes(profile.pad(A), profile.pad(session.B), K)
    if expected_m1 != M1:
        raise ProofMismatch("client proof does not verify")
    M2 = profile.H_bytes(profile.pad(A), M1, K)
    return M2, K


def client_check_server_proof(result: SrpClientResult, M2: bytes, profile: SrpProfile) -> bool:
    expected = profile.H_bytes(profile.pad(result.A), result.M1, result.session_key)
    return expected == M2


def generate_client_ephemeral(rng: random.Random | None = None) -> int:
    draw = rng.getrandbits if rng is not None else random.SystemRandom().getrandbits
    while True:
        a = draw(256)
        if a != 0:
            return a
