"""Canonical byte encoding for protocol records.

Everything that is signed, hashed, sealed, journaled, or written to a transcript
goes through :func:`canonical_encode`, so two parties computing the encoding of the
same logical record always obtain identical bytes.

The value domain is deliberately small:

* maps with text keys (encoded with keys sorted by their UTF-8 bytes),
* lists,
* text,
* integers (shortest decimal form, no leading zeros),
* booleans,
* byte strings (encoded as lowercase hex text).

The output is a strict subset of JSON with no insignificant whitespace, so any JSON
reader can inspect transcripts, while :func:`canonical_decode` accepts only the
canonical form itself. Floats, ``None``, and cyclic structures are rejected with
:class:`~berytus.errors.UnencodableValue`.

Byte strings collapse to their hex text on a decode round trip; the encoding of the
decoded value is guaranteed to be byte-identical to the original encoding, i.e.
``canonical_encode(canonical_decode(canonical_encode(x))) == canonical_encode(x)``.
"""

from __future__ import annotations

from .errors import UnencodableValue

__all__ = ["canonical_encode", "canonical_decode", "DecodeError"]


class DecodeError(ValueError):
    """Raised when input bytes are not a canonical encoding."""


def canonical_encode(value) -> bytes:
    """Encode ``value`` into canonical bytes.

    Raises :class:`UnencodableValue` for floats, ``None``, unsupported types,
    non-text map keys, and cyclic structures.
    """
    out = bytearray()
    _encode(value, out, seen=set())
    return bytes(out)


def _encode(value, out: bytearray, seen: set) -> None:
    # bool must be tested before int: bool is an int subclass in Python.
    if isinstance(value, bool):
        out += b"true" if value else b"false"
    elif isinstance(value, int):
        out += str(value).encode("ascii")
    elif isinstance(value, str):
        _encode_text(value, out)
    elif isinstance(value, (bytes, bytearray, memoryview)):
        _encode_text(bytes(value).hex(), out)
    elif isinstance(value, dict):
        marker = id(value)
        if marker in seen:
            raise UnencodableValue("cyclic structure")
        seen.add(marker)
        items = []
        for key in value:
            if not isinstance(key, str):
                raise UnencodableValue(f"map key must be text, got {type(key).__name__}")
            items.append((key.encode("utf-8"), key))
        items.sort(key=lambda kv: kv[0])
        out += b"{"
        for i, (_, key) in enumerate(items):
            if i:
                out += b","
            _encode_text(key, out)
            out += b":"
            _encode(value[key], out, seen)
        out += b"}"
        seen.discard(marker)
    elif isinstance(value, (list, tuple)):
        marker = id(value)
        if marker in seen:
            raise UnencodableValue("cyclic structure")
        seen.add(marker)
        out += b"["
        for i, item in enumerate(value):
            if i:
                out += b","
            _encode(item, out, seen)
        out += b"]"
        seen.discard(marker)
    elif isinstance(value, float):
        raise UnencodableValue("floating point values are not encodable")
    else:
        raise UnencodableValue(f"unsupported type {type(value).__name__}")


def _encode_text(text: str, out: bytearray) -> None:
    """JSON-style string with a minimal, canonical escape set.

    Only ``"``, ``\\`` and control characters below U+0020 are escaped; control
    characters always use the 4-digit ``\\u00XX`` form so each string has exactly
    one encoding.
    """
    out += b'"'
    for ch in text:
        cp = ord(ch)
        if ch == '"':
            out += b'\\"'
        elif ch == "\\":
            out += b"\\\\"
        elif cp < 0x20:
            out += f"\\u{cp:04x}".encode("ascii")
        else:
            out += ch.encode("utf-8")
    out += b'"'


def canonical_decode(data: bytes):
    """Parse canonical bytes back into maps/lists/text/integers/booleans.

    Strict: rejects whitespace, leading zeros, non-canonical escapes, unsorted or
    duplicate map keys, and trailing input.
    """
    parser = _Parser(data)
    value = parser.parse_value()
    if parser.pos != len(parser.data):
        raise DecodeError(f"trailing bytes at offset {parser.pos}")
    return value


class _Parser:
    def __init__(self, data: bytes):
        if not isinstance(data, (bytes, bytearray, memoryview)):
            raise DecodeError("input must be bytes")
        self.data = bytes(data)
        self.pos = 0

    def error(self, message: str) -> DecodeError:
        return DecodeError(f"{message} at offset {self.pos}")

    def peek(self) -> int:
        if self.pos >= len(self.data):
            raise self.error("unexpected end of input")
        return self.data[self.pos]

    def take(self) -> int:
        byte = self.peek()
        self.pos += 1
        return byte

    def expect(self, byte: bytes) -> None:
        if self.take() != byte[0]:
            self.pos -= 1
            raise self.error(f"expected {byte!r}")

    def parse_value(self):
        byte = self.peek()
        if byte == 0x7B:  # {
            return self.parse_map()
        if byte == 0x5B:  # [
            return self.parse_list()
        if byte == 0x22:  # "
            return self.parse_text()
        if byte == 0x74:  # t
            self.literal(b"true")
            return True
        if byte == 0x66:  # f
            self.literal(b"false")
            return False
        if byte == 0x2D or 0x30 <= byte <= 0x39:  # - or digit
            return self.parse_int()
        raise self.error(f"unexpected byte {bytes([byte])!r}")

    def literal(self, word: bytes) -> None:
        if self.data[self.pos : self.pos + len(word)] != word:
            raise self.error(f"expected {word!r}")
        self.pos += len(word)

    def parse_int(self) -> int:
        start = self.pos
        if self.peek() == 0x2D:
            self.pos += 1
        digits = self.pos
        while self.pos < len(self.data) and 0x30 <= self.data[self.pos] <= 0x39:
            self.pos += 1
        if self.pos == digits:
            raise self.error("expected digit")
        text = self.data[start : self.pos].decode("ascii")
        if text.lstrip("-") != "0" and text.lstrip("-").startswith("0"):
            raise self.error("leading zeros are not canonical")
        if text == "-0":
            raise self.error("negative zero is not canonical")
        return int(text)

    def parse_text(self) -> str:
        self.expect(b'"')
        chunks = []
        while True:
            byte = self.take()
            if byte == 0x22:
                return "".join(chunks)
            if byte == 0x5C:  # backslash
                esc = self.take()
                if esc == 0x22:
                    chunks.append('"')
                elif esc == 0x5C:
                    chunks.append("\\")
                elif esc == 0x75:  # \u00XX, control characters only
                    hex4 = self.data[self.pos : self.pos + 4]
                    if len(hex4) != 4:
                        raise self.error("truncated escape")
                    cp = int(hex4, 16)
                    if cp >= 0x20:
                        raise self.error("non-canonical escape")
                    self.pos += 4
                    chunks.append(chr(cp))
                else:
                    raise self.error("unsupported escape")
            elif byte < 0x20:
                raise self.error("raw control character in text")
            else:
                # resync to the start of this UTF-8 sequence and decode it whole
                self.pos -= 1
                end = self.pos + 1
                while end < len(self.data) and self.data[end] & 0xC0 == 0x80:
                    end += 1
                try:
                    chunks.append(self.data[self.pos : end].decode("utf-8"))
                except UnicodeDecodeError as exc:
                    raise self.error("invalid UTF-8") from exc
                self.pos = end

    def parse_list(self) -> list:
        self.expect(b"[")
        items = []
        if self.peek() == 0x5D:
            self.pos += 1
            return items
        while True:
            items.append(self.parse_value())
            byte = self.take()
            if byte == 0x5D:
                return items
            if byte != 0x2C:
                self.pos -= 1
                raise self.error("expected ',' or ']'")

    def parse_map(self) -> dict:
        self.expect(b"{")
        result: dict = {}
        if self.peek() == 0x7D:
            self.pos += 1
            return result
        previous_key: bytes | None = None
        while True:
            key = self.parse_text()
            key_bytes = key.encode("utf-8")
            if previous_key is not None and key_bytes <= previous_key:
                raise self.error("map keys not in canonical order")
            previous_key = key_bytes
            self.expect(b":")
            result[key] = self.parse_value()
            byte = self.take()
            if byte == 0x7D:
                return result
            if byte != 0x2C:
                self.pos -= 1
                raise self.error("expected ',' or '}'")
