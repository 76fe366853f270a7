"""Canonical encoding: determinism, strictness, and agreement with a JSON reader."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from berytus.encoding import DecodeError, canonical_decode, canonical_encode
from berytus.errors import UnencodableValue

# text without raw control characters is representative enough; the escape
# paths get their own explicit cases below
_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=24
)
_scalars = st.one_of(
    st.booleans(),
    st.integers(min_value=-(2**70), max_value=2**70),
    _text,
    st.binary(max_size=24),
)
_values = st.recursive(
    _scalars,
    lambda inner: st.one_of(
        st.lists(inner, max_size=5),
        st.dictionaries(_text, inner, max_size=5),
    ),
    max_leaves=20,
)


def _collapse_bytes(value):
    """What a decode round trip is specified to return: bytes become hex text."""
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if isinstance(value, dict):
        return {k: _collapse_bytes(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_collapse_bytes(v) for v in value]
    return value


@settings(max_examples=300, deadline=None)
@given(_values)
def test_round_trip(value):
    encoded = canonical_encode(value)
    decoded = canonical_decode(encoded)
    assert decoded == _collapse_bytes(value)
    # re-encoding the decoded value reproduces the original bytes exactly
    assert canonical_encode(decoded) == encoded


@settings(max_examples=300, deadline=None)
@given(_values)
def test_output_is_readable_json(value):
    """Any stock JSON parser must agree on the meaning of canonical bytes."""
    encoded = canonical_encode(value)
    assert json.loads(encoded.decode("utf-8")) == _collapse_bytes(value)


@settings(max_examples=200, deadline=None)
@given(st.dictionaries(_text, st.integers(), min_size=2, max_size=6))
def test_key_order_is_irrelevant(mapping):
    forward = canonical_encode(mapping)
    backward = canonical_encode(dict(reversed(list(mapping.items()))))
    assert forward == backward


def test_deterministic_across_equal_values():
    a = {"z": [1, 2, {"k": b"\x00\xff"}], "a": "x"}
    b = {"a": "x", "z": [1, 2, {"k": bytearray(b"\x00\xff")}]}
    assert canonical_encode(a) == canonical_encode(b)


def test_control_characters_have_one_escape_form():
    assert canonical_encode("\n") == b'"\\u000a"'
    assert canonical_encode('"\\') == b'"\\"\\\\"'
    assert canonical_decode(b'"\\u000a"') == "\n"


def test_rejects_unencodable():
    for bad in (1.5, None, object(), {1: "non-text key"}):
        with pytest.raises(UnencodableValue):
            canonical_encode(bad)
    cycle = []
    cycle.append(cycle)
    with pytest.raises(UnencodableValue):
        canonical_encode(cycle)


@pytest.mark.parametrize(
    "blob",
    [
        b"",
        b" 1",
        b"1 ",
        b"01",
        b"-0",
        b"1.5",
        b"null",
        b'{"b":1,"a":2}',  # unsorted keys
        b'{"a":1,"a":2}',  # duplicate key
        b'"\\u0041"',  # escape for a printable character
        b'"\\n"',  # short escape form, not canonical here
        b"[1,2",
        b'{"a":}',
        b"true false",
        b'"\xff"',  # invalid UTF-8 inside text
        b'"raw\ncontrol"',
    ],
)
def test_decoder_is_strict(blob):
    with pytest.raises(DecodeError):
        canonical_decode(blob)


def test_decoder_accepts_only_bytes():
    with pytest.raises(DecodeError):
        canonical_decode("{}")  # type: ignore[arg-type]


def test_nested_unicode_survives():
    value = {"naïve": ["Ω", "逆", "🙂"]}
    assert canonical_decode(canonical_encode(value)) == value
