"""Recursive-descent parser for the SysML v2 textual subset.

Accepted grammar::

    model        := package* ;
    package      := "package" IDENT "{" member* "}" ;
    member       := package | part | attribute | requirement | constraint | action | docstmt ;
    part         := "part" IDENT ( ";" | "{" member* "}" ) ;
    action       := "action" IDENT ( ";" | "{" member* "}" ) ;
    attribute    := "attribute" IDENT ( ":" QNAME )? ( "=" EXPR )? ";" ;
    requirement  := "requirement" IDENT ( ";" | "{" ( docstmt | attribute | constraint )* "}" ) ;
    constraint   := "require"? "constraint" IDENT? ( ";" | "{" EXPR "}" ) ;
    docstmt      := "doc" BLOCK_COMMENT ;

Every violation becomes one :class:`Diagnostic`; the parser then skips to
the next ``;`` or ``}`` at the current nesting level (or to the start of
the next member) and carries on, so independent mistakes are reported
independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import lexer
from .lexer import DOC, IDENT, KEYWORD, PUNCT, Diagnostic, Token, end_position, tokenize
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

MAX_DEPTH = 64

_MEMBER_KEYWORDS = frozenset(
    {"package", "part", "attribute", "requirement", "constraint", "require", "action"}
)
_REQUIREMENT_KEYWORDS = frozenset({"attribute", "constraint", "require"})
_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {")", "]", "}"}


@dataclass(frozen=True)
class ParseReport:
    diagnostics: tuple[Diagnostic, ...]
    error_count: int
    model: Optional[SysmlModel]

    @property
    def ok(self) -> bool:
        return self.error_count == 0

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]


class _Recovery(Exception):
    """Raised after a diagnostic to unwind to the enclosing member loop."""


class _Parser:
    def __init__(self, text: str):
        self.tokens, lexical = tokenize(text)
        eof_line, eof_col = end_position(text)
        self.eof = Token("eof", "", eof_line, eof_col, len(text))
        self.pos = 0
        self.depth = 0
        self.diagnostics: list[Diagnostic] = list(lexical)
        self.eof_reported = False

    # token helpers

    def peek(self, ahead: int = 0) -> Token:
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else self.eof

    def advance(self) -> Token:
        tok = self.peek()
        if tok is not self.eof:
            self.pos += 1
        return tok

    def at_eof(self) -> bool:
        return self.pos >= len(self.tokens)

    @staticmethod
    def is_punct(tok: Token, lexeme: str) -> bool:
        return tok.kind == PUNCT and tok.lexeme == lexeme

    @staticmethod
    def is_keyword(tok: Token, word: str) -> bool:
        return tok.kind == KEYWORD and tok.lexeme == word

    def starts_member(self, tok: Token) -> bool:
        return tok.kind == DOC or (tok.kind == KEYWORD and tok.lexeme in _MEMBER_KEYWORDS)

    # diagnostics

    def error_at(self, tok: Token, message: str, expected=None, found=None) -> None:
        if tok is self.eof:
            # one missing-delimiter report at end of input is enough
            if self.eof_reported:
                return
            self.eof_reported = True
        self.diagnostics.append(
            Diagnostic("error", message, tok.line, tok.column, expected=expected, found=found)
        )

    def found(self, tok: Token) -> str:
        if tok is self.eof:
            return "end of input"
        if tok.kind == DOC:
            return "doc"
        return tok.lexeme

    def expected(self, what: str) -> None:
        tok = self.peek()
        found = self.found(tok)
        shown = found if tok is self.eof else f"'{found}'"
        self.error_at(tok, f"Expected {what} but found {shown}", expected=what, found=found)
        raise _Recovery

    def unexpected(self, tok: Token) -> None:
        found = self.found(tok)
        self.error_at(tok, f"Unexpected token '{found}'", found=found)

    def synchronize(self, top_level: bool = False) -> None:
        """Skip to the next ``;`` or ``}`` at the current level, or a member start."""
        depth = 0
        while not self.at_eof():
            tok = self.peek()
            if tok.kind == PUNCT and tok.lexeme == "{":
                depth += 1
            elif tok.kind == PUNCT and tok.lexeme == "}":
                if depth == 0:
                    if top_level:
                        self.advance()
                    return
                depth -= 1
                if depth == 0:
                    self.advance()
                    return
            elif depth == 0 and tok.kind == PUNCT and tok.lexeme == ";":
                self.advance()
                return
            elif depth == 0:
                if top_level and self.is_keyword(tok, "package"):
                    return
                if not top_level and self.starts_member(tok):
                    return
            self.advance()

    def skip_block(self) -> None:
        """Skip a balanced ``{ ... }`` body whose opening brace was consumed."""
        depth = 1
        while not self.at_eof():
            tok = self.advance()
            if self.is_punct(tok, "{"):
                depth += 1
            elif self.is_punct(tok, "}"):
                depth -= 1
                if depth == 0:
                    return

    # grammar

    def parse_model(self) -> SysmlModel:
        packages = []
        while not self.at_eof():
            tok = self.peek()
            if self.is_keyword(tok, "package"):
                try:
                    pkg = self.parse_package()
                except _Recovery:
                    self.synchronize(top_level=True)
                    continue
                if pkg is not None:
                    packages.append(pkg)
            else:
                self.unexpected(tok)
                self.advance()
                self.synchronize(top_level=True)
        return SysmlModel(tuple(packages))

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind != IDENT:
            self.expected(what)
        self.advance()
        return tok.lexeme

    def open_body(self) -> bool:
        """Consume ``{``; False when the body was skipped for nesting depth."""
        brace = self.advance()
        if self.depth >= MAX_DEPTH:
            self.error_at(brace, f"Maximum nesting depth of {MAX_DEPTH} exceeded")
            self.skip_block()
            return False
        return True

    def close_body(self) -> None:
        if self.is_punct(self.peek(), "}"):
            self.advance()
        else:
            self.expected("'}'")

    def parse_body(self, context: str):
        """Parse members up to (and including) the closing brace.

        Returns ``(doc, members)``; the closing brace is consumed even when
        it is missing (reported once at end of input).
        """
        doc = None
        members = []
        self.depth += 1
        try:
            while True:
                tok = self.peek()
                if tok is self.eof or self.is_punct(tok, "}"):
                    break
                try:
                    member = self.parse_member(context)
                except _Recovery:
                    self.synchronize()
                    continue
                if member is None:
                    continue
                if isinstance(member, DocComment) and context in ("package", "requirement") \
                        and doc is None and not members:
                    doc = member.text
                else:
                    members.append(member)
            try:
                self.close_body()
            except _Recovery:
                pass
        finally:
            self.depth -= 1
        return doc, tuple(members)

    def parse_member(self, context: str):
        tok = self.peek()
        if tok.kind == DOC:
            self.advance()
            return DocComment(tok.value or "")
        if self.is_keyword(tok, "doc"):
            self.advance()
            self.expected("doc comment '/* ... */'")
        allowed = _REQUIREMENT_KEYWORDS if context == "requirement" else _MEMBER_KEYWORDS
        if tok.kind == KEYWORD and tok.lexeme in allowed:
            return getattr(self, f"parse_{tok.lexeme}")()
        self.unexpected(tok)
        self.advance()
        raise _Recovery

    def parse_package(self) -> Optional[PackageDecl]:
        self.advance()
        name = self.expect_ident()
        if not self.is_punct(self.peek(), "{"):
            self.expected("'{'")
        if not self.open_body():
            return None
        doc, members = self.parse_body("package")
        return PackageDecl(name, doc, members)

    def _parse_container(self, keyword: str):
        name = self.expect_ident()
        tok = self.peek()
        if self.is_punct(tok, ";"):
            self.advance()
            return name, None, (), False
        if self.is_punct(tok, "{"):
            if not self.open_body():
                return None
            doc, members = self.parse_body(keyword)
            return name, doc, members, True
        self.expected("';' or '{'")

    def parse_part(self) -> Optional[PartDecl]:
        self.advance()
        parsed = self._parse_container("part")
        if parsed is None:
            return None
        name, _, members, body = parsed
        return PartDecl(name, members, body)

    def parse_action(self) -> Optional[ActionDecl]:
        self.advance()
        parsed = self._parse_container("action")
        if parsed is None:
            return None
        name, _, members, body = parsed
        return ActionDecl(name, members, body)

    def parse_requirement(self) -> Optional[RequirementDecl]:
        self.advance()
        parsed = self._parse_container("requirement")
        if parsed is None:
            return None
        name, doc, members, body = parsed
        return RequirementDecl(name, doc, members, body)

    def parse_qualified_name(self) -> str:
        parts = [self.expect_ident("type name")]
        while self.peek().kind == PUNCT and self.peek().lexeme in ("::", ".") \
                and self.peek(1).kind == IDENT:
            parts.append(self.advance().lexeme)
            parts.append(self.advance().lexeme)
        return "".join(parts)

    def parse_attribute(self) -> AttributeDecl:
        self.advance()
        name = self.expect_ident()
        type_ref = value = None
        if self.is_punct(self.peek(), ":"):
            self.advance()
            type_ref = self.parse_qualified_name()
        if self.is_punct(self.peek(), "="):
            self.advance()
            value = self.scan_expression()
        if not self.is_punct(self.peek(), ";"):
            if value is not None:
                self.expected("';'")
            elif type_ref is not None:
                self.expected("'=' or ';'")
            else:
                self.expected("':', '=' or ';'")
        self.advance()
        return AttributeDecl(name, type_ref, value)

    def parse_require(self) -> ConstraintDecl:
        self.advance()
        if not self.is_keyword(self.peek(), "constraint"):
            self.expected("'constraint'")
        return self.parse_constraint(required=True)

    def parse_constraint(self, required: bool = False) -> ConstraintDecl:
        self.advance()
        name = None
        if self.peek().kind == IDENT:
            name = self.advance().lexeme
        tok = self.peek()
        if self.is_punct(tok, ";"):
            self.advance()
            return ConstraintDecl(required, name, None)
        if self.is_punct(tok, "{"):
            self.advance()
            formula = self.scan_formula()
            self.advance()
            return ConstraintDecl(required, name, formula)
        self.expected("';' or '{'" if name else "identifier, ';' or '{'")

    # expressions are only checked for balance

    def _unbalanced(self, opener: Token) -> None:
        self.error_at(opener, f"Unclosed '{opener.lexeme}' in expression",
                      expected=f"'{_OPENERS[opener.lexeme]}'", found=opener.lexeme)
        raise _Recovery

    def scan_expression(self) -> str:
        """Attribute value: tokens up to ``;`` with balanced ()/[]."""
        collected: list[Token] = []
        stack: list[Token] = []
        while True:
            tok = self.peek()
            if tok is self.eof:
                if stack:
                    self._unbalanced(stack[-1])
                self.expected("';'")
            if tok.kind == PUNCT:
                if tok.lexeme == ";":
                    if stack:
                        self._unbalanced(stack[-1])
                    break
                if tok.lexeme in ("{", "}"):
                    self.expected("';'")
                if tok.lexeme in ("(", "["):
                    stack.append(tok)
                elif tok.lexeme in (")", "]"):
                    if not stack or _OPENERS[stack[-1].lexeme] != tok.lexeme:
                        self.error_at(tok, f"Unmatched '{tok.lexeme}' in expression", found=tok.lexeme)
                        raise _Recovery
                    stack.pop()
            elif tok.kind in (KEYWORD, DOC):
                self.expected("';'")
            collected.append(self.advance())
        if not collected:
            self.expected("expression")
        return join_tokens(collected)

    def scan_formula(self) -> str:
        """Constraint body: balanced tokens up to the closing ``}`` (not consumed)."""
        collected: list[Token] = []
        stack: list[Token] = []
        while True:
            tok = self.peek()
            if tok is self.eof:
                if stack:
                    self._unbalanced(stack[-1])
                self.expected("'}'")
            if tok.kind == PUNCT:
                if tok.lexeme == "}" and not stack:
                    break
                if tok.lexeme == "}" and all(t.lexeme != "{" for t in stack):
                    # the constraint still ends here; only the paren is missing
                    opener = stack[-1]
                    self.error_at(opener, f"Unclosed '{opener.lexeme}' in expression",
                                  expected=f"'{_OPENERS[opener.lexeme]}'", found=opener.lexeme)
                    break
                if tok.lexeme in _OPENERS:
                    stack.append(tok)
                elif tok.lexeme in _CLOSERS:
                    if not stack or _OPENERS[stack[-1].lexeme] != tok.lexeme:
                        self.error_at(tok, f"Unmatched '{tok.lexeme}' in expression", found=tok.lexeme)
                        raise _Recovery
                    stack.pop()
            elif (tok.kind in (KEYWORD, DOC)) and not stack:
                self.expected("'}'")
            collected.append(self.advance())
        return join_tokens(collected)


def join_tokens(tokens: list[Token]) -> str:
    """Canonical expression text: a single space wherever the source had a gap."""
    out = []
    prev = None
    for tok in tokens:
        if prev is not None and tok.offset > prev.end:
            out.append(" ")
        out.append(tok.lexeme)
        prev = tok
    return "".join(out)


def parse(text: str) -> ParseReport:
    parser = _Parser(text)
    model = parser.parse_model()
    diagnostics = tuple(sorted(parser.diagnostics, key=lambda d: (d.line, d.column)))
    errors = sum(1 for d in diagnostics if d.severity == "error")
    return ParseReport(diagnostics, errors, model if errors == 0 else None)


def check(text: str) -> ParseReport:
    """Lint entry point; same contract as :func:`parse`."""
    return parse(text)


__all__ = ["ParseReport", "parse", "check", "join_tokens", "MAX_DEPTH", "lexer"]
