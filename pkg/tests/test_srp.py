"""SRP-6a: fixture agreement, oracle cross-checks, and negative paths.

The same parameterized code path must reproduce both the SHA-1/1024-bit interop
vector and the SHA-256/2048-bit working profile.
"""

import json
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from berytus import srp
from berytus.errors import (
    InvalidClientEphemeral,
    InvalidServerEphemeral,
    ProofMismatch,
)
from berytus.kernel import rng_from_seed

_PROFILES = {
    ("sha1", "1024"): srp.INTEROP_PROFILE,
    ("sha256", "2048"): srp.DEFAULT_PROFILE,
}


def _vectors():
    doc = json.loads(resources.files("berytus.vectors").joinpath("srp.json").read_text())
    return doc["vectors"]


def test_groups_are_safe_primes_with_generator_2():
    for group in (srp.GROUP_1024, srp.GROUP_2048):
        assert oracles.is_safe_prime(group.N)
        assert group.g == 2
        # g must generate the large subgroup: g^((N-1)/2) == N-1 for a safe prime
        assert pow(group.g, (group.N - 1) // 2, group.N) == group.N - 1


@pytest.mark.parametrize("vec", _vectors(), ids=lambda v: v["name"])
def test_fixture_vectors_full_agreement(vec):
    profile = _PROFILES[(vec["hash"], vec["group"])]
    N, g, h = profile.group.N, profile.group.g, profile.hash_name
    salt = bytes.fromhex(vec["salt"])

    assert profile.k == int(vec["k"], 16) == oracles.srp_k(N, g, h)
    record = srp.compute_verifier(vec["identity"], vec["password"], salt, profile)
    assert record.verifier == int(vec["verifier"], 16)
    assert record.verifier == oracles.srp_verifier(
        vec["identity"].encode(), vec["password"].encode(), salt, N, g, h
    )

    session, B = srp.server_start(record.verifier, profile, b=int(vec["b"], 16))
    assert B == int(vec["B"], 16)

    A = int(vec["A"], 16)
    assert oracles.srp_u(A, B, N, h) == int(vec["u"], 16)
    assert oracles.srp_server_premaster(record.verifier, session.b, A, B, N, h) == int(
        vec["premaster"], 16
    )

    if "a" in vec:  # the client scalar is only published for the local vector
        result = srp.client_respond(
            vec["identity"], vec["password"], salt, int(vec["a"], 16), B, profile
        )
        assert result.A == A
        assert result.premaster == int(vec["premaster"], 16)
        assert result.session_key.hex() == vec["sessionKey"]
        assert result.M1.hex() == vec["M1"]
        M2, K = srp.server_finish(session, result.A, result.M1)
        assert M2.hex() == vec["M2"]
        assert K == result.session_key
        assert srp.client_check_server_proof(result, M2, profile)


@pytest.mark.parametrize("profile", [srp.DEFAULT_PROFILE, srp.INTEROP_PROFILE],
                         ids=["sha256/2048", "sha1/1024"])
def test_full_exchange_matches_oracle(profile):
    rng = rng_from_seed(b"\x51" * 32)
    identity, password = "user@example", "correct horse"
    salt = rng.randbytes(16)
    record = srp.compute_verifier(identity, password, salt, profile)
    session, B = srp.server_start(record.verifier, profile, rng)
    a = srp.generate_client_ephemeral(rng)
    result = srp.client_respond(identity, password, salt, a, B, profile)
    M2, K = srp.server_finish(session, result.A, result.M1)
    assert srp.client_check_server_proof(result, M2, profile)

    N, g, h = profile.group.N, profile.group.g, profile.hash_name
    S = oracles.srp_client_premaster(
        identity.encode(), password.encode(), salt, a, B, N, g, h
    )
    assert S == result.premaster
    assert S == oracles.srp_server_premaster(record.verifier, session.b, result.A, B, N, h)
    assert oracles.srp_session_key(S, N, h) == K
    assert oracles.srp_m1(result.A, B, K, N, h) == result.M1
    assert oracles.srp_m2(result.A, result.M1, K, N, h) == M2


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**64))
def test_random_credentials_verify_and_wrong_password_fails(seed_int):
    rng = rng_from_seed(seed_int)
    profile = srp.DEFAULT_PROFILE
    identity = f"user-{rng.randrange(10**6)}"
    password = "".join(chr(rng.randrange(33, 127)) for _ in range(14))
    salt = rng.randbytes(16)
    record = srp.compute_verifier(identity, password, salt, profile)
    session, B = srp.server_start(record.verifier, profile, rng)
    a = srp.generate_client_ephemeral(rng)

    good = srp.client_respond(identity, password, salt, a, B, profile)
    M2, _ = srp.server_finish(session, good.A, good.M1)
    assert srp.client_check_server_proof(good, M2, profile)

    # single-character perturbation of the password must be rejected
    mutated = password[:-1] + chr(33 + (ord(password[-1]) - 32) % 94)
    assert mutated != password
    session2, B2 = srp.server_start(record.verifier, profile, rng)
    bad = srp.client_respond(identity, mutated, salt, a, B2, profile)
    with pytest.raises(ProofMismatch):
        srp.server_finish(session2, bad.A, bad.M1)


def test_verifier_requires_nonempty_credentials():
    with pytest.raises(ValueError):
        srp.compute_verifier("", "pw", b"\x01" * 16)
    with pytest.raises(ValueError):
        srp.compute_verifier("id", "", b"\x01" * 16)
    with pytest.raises(ValueError):
        srp.SrpVerifierRecord(salt=b"\x01", verifier=0)


def test_degenerate_ephemerals_rejected():
    profile = srp.DEFAULT_PROFILE
    record = srp.compute_verifier("i", "p", b"\x02" * 16, profile)
    session, _B = srp.server_start(record.verifier, profile, rng_from_seed(7))

    with pytest.raises(InvalidServerEphemeral):
        srp.client_respond("i", "p", b"\x02" * 16, a=12345, B=0, profile=profile)
    with pytest.raises(InvalidServerEphemeral):
        srp.client_respond("i", "p", b"\x02" * 16, a=12345, B=profile.group.N, profile=profile)
    with pytest.raises(InvalidClientEphemeral):
        srp.server_finish(session, A=0, M1=b"\x00")
    with pytest.raises(InvalidClientEphemeral):
        srp.server_finish(session, A=profile.group.N * 2, M1=b"\x00")


def test_tampered_m1_rejected_before_m2_release():
    profile = srp.DEFAULT_PROFILE
    rng = rng_from_seed(b"\x61" * 32)
    record = srp.compute_verifier("alice", "pw-pw-pw-pw", b"\x03" * 16, profile)
    session, B = srp.server_start(record.verifier, profile, rng)
    result = srp.client_respond(
        "alice", "pw-pw-pw-pw", b"\x03" * 16, srp.generate_client_ephemeral(rng), B, profile
    )
    for flip in range(0, len(result.M1) * 8, 64):
        forged = bytearray(result.M1)
        forged[flip // 8] ^= 1 << (flip % 8)
        with pytest.raises(ProofMismatch):
            srp.server_finish(session, result.A, bytes(forged))


def test_wire_hex_is_padded_to_modulus_length():
    profile = srp.DEFAULT_PROFILE
    assert len(profile.to_hex(1)) == 2 * profile.group.byte_length
    assert profile.to_hex(255).endswith("ff")
    assert set(profile.to_hex(255)[:-2]) == {"0"}


def test_session_key_never_equals_premaster_bytes():
    profile = srp.DEFAULT_PROFILE
    rng = rng_from_seed(b"\x71" * 32)
    record = srp.compute_verifier("u", "long-enough-pw", b"\x04" * 16, profile)
    session, B = srp.server_start(record.verifier, profile, rng)
    result = srp.client_respond(
        "u", "long-enough-pw", b"\x04" * 16, srp.generate_client_ephemeral(rng), B, profile
    )
    assert result.session_key != profile.pad(result.premaster)
    assert len(result.session_key) == 32  # sha256 output
