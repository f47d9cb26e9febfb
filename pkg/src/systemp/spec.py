"""Structured specification records extracted from natural-language requests.

The JSON shape is::

    {
        "Package": "BikeFork",
        "attributes": {"power": "Rated power in watts (W) or horsepower (HP)"},
        "constraints": {},
        "requirements": {"Material": "The bike fork should be made of aluminum."}
    }
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field
from typing import Optional

from .sysml.nodes import KEYWORDS

SECTIONS = ("attributes", "constraints", "requirements")
KNOWN_KEYS = ("Package",) + SECTIONS


class SpecError(ValueError):
    """Base class for specification document problems."""


class MissingField(SpecError):
    def __init__(self, key: str):
        super().__init__(f"missing required key {key!r}")
        self.key = key


class WrongShape(SpecError):
    pass


class MalformedInput(SpecError):
    pass


class Unrepresentable(ValueError):
    """A free-text name that has no identifier form."""


@dataclass(frozen=True)
class StructuredSpecification:
    package_name: str
    attributes: dict[str, str] = field(default_factory=dict)
    constraints: dict[str, str] = field(default_factory=dict)
    requirements: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.package_name, str) or not self.package_name.strip():
            raise WrongShape("'Package' must be a non-empty string")
        for name, description in self.requirements.items():
            if not description.strip():
                raise WrongShape(f"requirement {name!r} has no description")

    def to_dict(self) -> dict:
        return {
            "Package": self.package_name,
            "attributes": dict(self.attributes),
            "constraints": dict(self.constraints),
            "requirements": dict(self.requirements),
        }


@dataclass(frozen=True)
class NaturalLanguageRequest:
    scenario_id: str
    content: str

    def __post_init__(self) -> None:
        if not self.content.strip():
            raise ValueError("request content is empty")


@dataclass(frozen=True)
class FewShotExample:
    request: NaturalLanguageRequest
    specification: StructuredSpecification


def _section(doc: dict, key: str) -> dict[str, str]:
    if key not in doc:
        raise MissingField(key)
    value = doc[key]
    if not isinstance(value, dict):
        raise WrongShape(f"{key!r} must be an object of strings")
    for name, text in value.items():
        if not isinstance(text, str):
            raise WrongShape(f"{key!r} entry {name!r} is not a string")
    return dict(value)


def from_dict(doc: object, warnings: Optional[list[str]] = None) -> StructuredSpecification:
    if not isinstance(doc, dict):
        raise WrongShape("specification must be a JSON object")
    if "Package" not in doc:
        raise MissingField("Package")
    if not isinstance(doc["Package"], str):
        raise WrongShape("'Package' must be a string")
    sections = {key: _section(doc, key) for key in SECTIONS}
    unknown = [key for key in doc if key not in KNOWN_KEYS]
    if warnings is not None:
        warnings.extend(f"ignored unknown key {key!r}" for key in unknown)
    return StructuredSpecification(doc["Package"], **sections)


def from_json(text: str, warnings: Optional[list[str]] = None) -> StructuredSpecification:
    """Parse a specification document.

    Unknown top-level keys are ignored; a message for each is appended to
    ``warnings`` when a list is given.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"not valid JSON: {exc}") from exc
    return from_dict(doc, warnings)


def from_reply(text: str, warnings: Optional[list[str]] = None) -> StructuredSpecification:
    """Like :func:`from_json` but tolerant of how LLMs answer.

    Accepts a Python dict literal as well as JSON, and falls back to the
    outermost ``{...}`` span when the object is wrapped in prose.
    """
    candidates = [text.strip()]
    start, end = text.find("{"), text.rfind("}")
    if 0 <= start < end:
        candidates.append(text[start:end + 1])
    for candidate in candidates:
        for loader in (json.loads, ast.literal_eval):
            try:
                doc = loader(candidate)
            except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
                continue
            return from_dict(doc, warnings)
    raise MalformedInput("reply contains no JSON object or Python dict literal")


def to_json(spec: StructuredSpecification, indent: Optional[int] = 4) -> str:
    return json.dumps(spec.to_dict(), indent=indent, ensure_ascii=False)


_SEPARATORS = re.compile(r"[^A-Za-z0-9_]+")


def sanitize_identifier(raw: str) -> str:
    """Turn a free-text name into an identifier.

    Characters outside ``[A-Za-z0-9_]`` are dropped and the character after
    each dropped run is upper-cased, so ``"Pivot Type"`` becomes
    ``"PivotType"``. Results starting with a digit, or colliding with a
    keyword, get a leading underscore.
    """
    pieces = _SEPARATORS.split(raw)
    out = pieces[0]
    for piece in pieces[1:]:
        out += piece[:1].upper() + piece[1:]
    if not out:
        raise Unrepresentable(f"{raw!r} has no identifier characters")
    if out[0].isdigit() or out in KEYWORDS:
        out = "_" + out
    return out
