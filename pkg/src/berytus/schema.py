"""Deliberately small message-schema validator for custom challenges.

Supported keywords: type (object/string/integer/boolean/array), required,
properties, items, enum, minLength/maxLength, minimum/maximum. Anything else is an
UnsupportedSchemaFeature — custom challenges must stay within the subset so both
ends agree on what "valid" means.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidSchema, UnsupportedSchemaFeature

_SUPPORTED_KEYWORDS = {
    "type",
    "required",
    "properties",
    "items",
    "enum",
    "minLength",
    "maxLength",
    "minimum",
    "maximum",
}

_TYPES = {
    "object": dict,
    "string": str,
    "integer": int,
    "boolean": bool,
    "array": list,
}


@dataclass(frozen=True)
class Violation:
    path: str
    reason: str


def check_schema(schema) -> None:
    """Validate the schema document itself (shape + keyword subset)."""
    if not isinstance(schema, dict):
        raise InvalidSchema("schema must be a map")
    for keyword, value in schema.items():
        if keyword not in _SUPPORTED_KEYWORDS:
            raise UnsupportedSchemaFeature(f"keyword {keyword!r} is not supported")
        if keyword == "type":
            if value not in _TYPES:
                raise InvalidSchema(f"unknown type {value!r}")
        elif keyword == "required":
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise InvalidSchema("required must be a list of property names")
        elif keyword == "properties":
            if not isinstance(value, dict):
                raise InvalidSchema("properties must be a map")
            for sub in value.values():
                check_schema(sub)
        elif keyword == "items":
            check_schema(value)
        elif keyword == "enum":
            if not isinstance(value, list) or not value:
                raise InvalidSchema("enum must be a non-empty list")
        elif keyword in ("minLength", "maxLength", "minimum", "maximum"):
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidSchema(f"{keyword} must be an integer")


def validate(schema, payload) -> list[Violation]:
    """Return all violations of ``payload`` against ``schema`` (empty list = ok)."""
    check_schema(schema)
    violations: list[Violation] = []
    _validate(schema, payload, "", violations)
    return violations


def _validate(schema: dict, value, path: str, out: list[Violation]) -> None:
    where = path or "/"
    expected = schema.get("type")
    if expected is not None:
        python_type = _TYPES[expected]
        matches = isinstance(value, python_type)
        # bool is an int in Python; keep the two schema types disjoint
        if expected == "integer" and isinstance(value, bool):
            matches = False
        if not matches:
            out.append(Violation(where, f"expected {expected}"))
            return

    if "enum" in schema and value not in schema["enum"]:
        out.append(Violation(where, "value not in enum"))

    if isinstance(value, str):
        if "minLength" in schema and len(value) < schema["minLength"]:
            out.append(Violation(where, f"shorter than minLength {schema['minLength']}"))
        if "maxLength" in schema and len(value) > schema["maxLength"]:
            out.append(Violation(where, f"longer than maxLength {schema['maxLength']}"))

    if isinstance(value, int) and not isinstance(value, bool):
        if "minimum" in schema and value < schema["minimum"]:
            out.append(Violation(where, f"below minimum {schema['minimum']}"))
        if "maximum" in schema and value > schema["maximum"]:
            out.append(Violation(where, f"above maximum {schema['maximum']}"))

    if isinstance(value, dict):
        for name in schema.get("required", []):
            if name not in value:
                out.append(Violation(f"{path}/{name}", "missing required property"))
        for name, sub_schema in schema.get("properties", {}).items():
            if name in value:
                _validate(sub_schema, value[name], f"{path}/{name}", out)

    if isinstance(value, list) and "items" in schema:
        for index, item in enumerate(value):
            _validate(schema["items"], item, f"{path}/{index}", out)
