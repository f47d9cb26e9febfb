"""SysML v2 textual-notation subset: AST, printer, lexer and parser."""

from .lexer import Diagnostic, Token, tokenize
from .nodes import (
    ActionDecl,
    AttributeDecl,
    ConstraintDecl,
    DocComment,
    PackageDecl,
    PartDecl,
    RequirementDecl,
    SysmlModel,
    count_elements,
    is_identifier,
    normalize_doc,
)
from .parser import MAX_DEPTH, ParseReport, check, parse
from .printer import pretty_print

__all__ = [
    "ActionDecl", "AttributeDecl", "ConstraintDecl", "Diagnostic", "DocComment",
    "MAX_DEPTH", "PackageDecl", "ParseReport", "PartDecl", "RequirementDecl",
    "SysmlModel", "Token", "check", "count_elements", "is_identifier",
    "normalize_doc", "parse", "pretty_print", "tokenize",
]
