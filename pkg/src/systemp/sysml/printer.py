"""Canonical textual form of a :class:`SysmlModel`."""

from __future__ import annotations

from .nodes import (
    ActionDecl,
    AttributeDecl,
    ConstraintDecl,
    DocComment,
    PackageDecl,
    PartDecl,
    RequirementDecl,
    SysmlModel,
)

INDENT = "    "


def pretty_print(model: SysmlModel) -> str:
    lines: list[str] = []
    for pkg in model.packages:
        _emit(pkg, 0, lines)
    if not lines:
        return ""
    return "\n".join(line.rstrip() for line in lines) + "\n"


def _doc_line(text: str) -> str:
    return f"doc /* {text} */" if text else "doc /**/"


def _block(header: str, doc, members, depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    if doc is None and not members:
        lines.append(f"{pad}{header} {{}}")
        return
    lines.append(f"{pad}{header} {{")
    if doc is not None:
        lines.append(INDENT * (depth + 1) + _doc_line(doc))
    for member in members:
        _emit(member, depth + 1, lines)
    lines.append(f"{pad}}}")


def _emit(node, depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    if isinstance(node, PackageDecl):
        _block(f"package {node.name}", node.doc, node.members, depth, lines)
    elif isinstance(node, RequirementDecl):
        if node.body_present:
            _block(f"requirement {node.name}", node.doc, node.members, depth, lines)
        else:
            lines.append(f"{pad}requirement {node.name};")
    elif isinstance(node, (PartDecl, ActionDecl)):
        keyword = "part" if isinstance(node, PartDecl) else "action"
        if node.body_present:
            _block(f"{keyword} {node.name}", None, node.members, depth, lines)
        else:
            lines.append(f"{pad}{keyword} {node.name};")
    elif isinstance(node, AttributeDecl):
        text = f"attribute {node.name}"
        if node.type_ref is not None:
            text += f" : {node.type_ref}"
        if node.value_expr is not None:
            text += f" = {node.value_expr}"
        lines.append(f"{pad}{text};")
    elif isinstance(node, ConstraintDecl):
        text = "require constraint" if node.required else "constraint"
        if node.name is not None:
            text += f" {node.name}"
        if node.formula is None:
            text += ";"
        elif node.formula:
            text += f" {{ {node.formula} }}"
        else:
            text += " {}"
        lines.append(pad + text)
    elif isinstance(node, DocComment):
        lines.append(pad + _doc_line(node.text))
    else:
        raise TypeError(f"not a SysML node: {node!r}")
