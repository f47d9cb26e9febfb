"""AST for the supported SysML v2 textual-notation subset.

Nodes are frozen dataclasses; equality is structural. Expression payloads
(attribute values, constraint formulas) are kept as canonical token text
rather than expression trees.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

KEYWORDS = frozenset(
    {"package", "part", "attribute", "requirement", "constraint", "require", "action", "doc"}
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def is_identifier(name: str) -> bool:
    return bool(_IDENT_RE.match(name)) and name not in KEYWORDS


def normalize_doc(text: str) -> str:
    """Canonical form of documentation text.

    Trailing whitespace is removed from every line, the whole text is
    stripped and any comment terminator is broken apart so the text can
    sit inside ``/* ... */``.
    """
    lines = [line.rstrip() for line in text.splitlines()]
    return "\n".join(lines).strip().replace("*/", "* /")


def _check_name(kind: str, name: str) -> None:
    if not is_identifier(name):
        raise ValueError(f"invalid {kind} name {name!r}")


def _check_doc(doc: Optional[str]) -> None:
    if doc is not None and doc != normalize_doc(doc):
        raise ValueError(f"doc text is not in canonical form: {doc!r}")


def _check_leading_doc(doc: Optional[str], members: tuple) -> None:
    # a leading DocComment would be read back as the owner's doc field
    if doc is None and members and isinstance(members[0], DocComment):
        raise ValueError("first member is a doc comment; use the doc field instead")


@dataclass(frozen=True)
class DocComment:
    """A ``doc /* ... */`` statement that is not the owner's leading doc."""

    text: str

    def __post_init__(self) -> None:
        _check_doc(self.text)


@dataclass(frozen=True)
class AttributeDecl:
    name: str
    type_ref: Optional[str] = None
    value_expr: Optional[str] = None

    def __post_init__(self) -> None:
        _check_name("attribute", self.name)
        if self.value_expr is not None and not self.value_expr.strip():
            raise ValueError("empty attribute value expression")


@dataclass(frozen=True)
class ConstraintDecl:
    """``[require] constraint [name] (';' | '{' formula '}')``.

    ``formula`` is None for the terse ``;`` form and a (possibly empty)
    string when a body is present.
    """

    required: bool = False
    name: Optional[str] = None
    formula: Optional[str] = None

    def __post_init__(self) -> None:
        if self.name is not None:
            _check_name("constraint", self.name)


@dataclass(frozen=True)
class PartDecl:
    name: str
    members: tuple["Member", ...] = ()
    body_present: bool = False

    def __post_init__(self) -> None:
        _check_name("part", self.name)
        if not self.body_present and self.members:
            raise ValueError(f"part {self.name} has members but no body")


@dataclass(frozen=True)
class ActionDecl:
    name: str
    members: tuple["Member", ...] = ()
    body_present: bool = False

    def __post_init__(self) -> None:
        _check_name("action", self.name)
        if not self.body_present and self.members:
            raise ValueError(f"action {self.name} has members but no body")


@dataclass(frozen=True)
class RequirementDecl:
    name: str
    doc: Optional[str] = None
    members: tuple[Union[AttributeDecl, ConstraintDecl, DocComment], ...] = ()
    body_present: bool = True

    def __post_init__(self) -> None:
        _check_name("requirement", self.name)
        _check_doc(self.doc)
        for member in self.members:
            if not isinstance(member, (AttributeDecl, ConstraintDecl, DocComment)):
                raise ValueError(f"requirement {self.name} cannot contain {type(member).__name__}")
        if not self.body_present and (self.members or self.doc is not None):
            raise ValueError(f"requirement {self.name} has content but no body")
        _check_leading_doc(self.doc, self.members)


@dataclass(frozen=True)
class PackageDecl:
    name: str
    doc: Optional[str] = None
    members: tuple["Member", ...] = ()

    def __post_init__(self) -> None:
        _check_name("package", self.name)
        _check_doc(self.doc)
        _check_leading_doc(self.doc, self.members)


Member = Union[PackageDecl, PartDecl, AttributeDecl, RequirementDecl, ConstraintDecl, ActionDecl, DocComment]


@dataclass(frozen=True)
class SysmlModel:
    packages: tuple[PackageDecl, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for pkg in self.packages:
            if not isinstance(pkg, PackageDecl):
                raise ValueError("top level may only contain packages")


ELEMENT_KINDS = ("packages", "parts", "attributes", "requirements", "constraints", "actions")

_KIND_OF = {
    PackageDecl: "packages",
    PartDecl: "parts",
    AttributeDecl: "attributes",
    RequirementDecl: "requirements",
    ConstraintDecl: "constraints",
    ActionDecl: "actions",
}


def iter_nodes(model: SysmlModel):
    """Yield every declaration in the model, depth first."""
    stack = list(reversed(model.packages))
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(getattr(node, "members", ())))


def count_elements(model: SysmlModel) -> dict[str, int]:
    counts = dict.fromkeys(ELEMENT_KINDS, 0)
    for node in iter_nodes(model):
        kind = _KIND_OF.get(type(node))
        if kind is not None:
            counts[kind] += 1
    return counts
