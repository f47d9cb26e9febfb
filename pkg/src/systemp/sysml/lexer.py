"""Tokenizer for the SysML v2 textual subset.

Lexical problems never stop tokenization; they are collected as
diagnostics next to the token list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .nodes import KEYWORDS, normalize_doc

KEYWORD = "keyword"
IDENT = "identifier"
PUNCT = "punctuation"
NUMBER = "number"
STRING = "string"
DOC = "doc-comment"

# longest first
_PUNCTUATION = (
    "::", "==", "!=", "<=", ">=", "->", "**", "&&", "||", "..",
    "{", "}", "(", ")", "[", "]", ";", ":", ",", ".", "=", "+", "-",
    "*", "/", "%", "<", ">", "!", "&", "|", "^", "~", "?", "#",
)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"[0-9]+(?:\.[0-9]+)?(?:[eE][+-]?[0-9]+)?")
_SPACE_RE = re.compile(r"[ \t\r\n\f\v]*")


@dataclass(frozen=True)
class Token:
    kind: str
    lexeme: str
    line: int
    column: int
    offset: int = 0
    value: Optional[str] = None

    @property
    def end(self) -> int:
        return self.offset + len(self.lexeme)

    def describe(self) -> str:
        if self.kind == DOC:
            return "doc comment"
        return f"'{self.lexeme}'"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    line: int
    column: int
    expected: Optional[str] = None
    found: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "message": self.message,
            "line": self.line,
            "column": self.column,
            "expected": self.expected,
            "found": self.found,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Diagnostic":
        return cls(**data)


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        # offsets at which each line starts
        self.line_starts = [0] + [m.end() for m in re.finditer(r"\r\n|\n|\r", text)]

    def position(self, offset: int) -> tuple[int, int]:
        lo, hi = 0, len(self.line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - self.line_starts[lo] + 1


def end_position(text: str) -> tuple[int, int]:
    """Line and column just past the last character of ``text``."""
    return _Scanner(text).position(len(text))


def tokenize(text: str) -> tuple[list[Token], list[Diagnostic]]:
    sc = _Scanner(text)
    tokens: list[Token] = []
    diagnostics: list[Diagnostic] = []
    n = len(text)
    pos = 0

    def error(offset: int, message: str) -> None:
        line, col = sc.position(offset)
        diagnostics.append(Diagnostic("error", message, line, col))

    def add(kind: str, start: int, end: int, value: Optional[str] = None) -> None:
        line, col = sc.position(start)
        tokens.append(Token(kind, text[start:end], line, col, start, value))

    while True:
        pos = _SPACE_RE.match(text, pos).end()
        if pos >= n:
            break
        ch = text[pos]

        if text.startswith("//", pos):
            eol = text.find("\n", pos)
            pos = n if eol < 0 else eol
            continue
        if text.startswith("/*", pos):
            close = text.find("*/", pos + 2)
            if close < 0:
                error(pos, "unterminated block comment")
                pos = n
            else:
                pos = close + 2
            continue

        m = _IDENT_RE.match(text, pos)
        if m:
            word = m.group()
            if word == "doc":
                start_comment = _SPACE_RE.match(text, m.end()).end()
                if text.startswith("/*", start_comment):
                    close = text.find("*/", start_comment + 2)
                    if close < 0:
                        error(start_comment, "unterminated doc comment")
                        payload, end = text[start_comment + 2:], n
                    else:
                        payload, end = text[start_comment + 2:close], close + 2
                    add(DOC, pos, end, normalize_doc(payload))
                    pos = end
                    continue
            add(KEYWORD if word in KEYWORDS else IDENT, pos, m.end())
            pos = m.end()
            continue

        m = _NUMBER_RE.match(text, pos)
        if m:
            add(NUMBER, pos, m.end())
            pos = m.end()
            continue

        if ch in "\"'":
            end = pos + 1
            closed = False
            while end < n and text[end] not in "\r\n":
                if text[end] == "\\":
                    end += 2
                    continue
                if text[end] == ch:
                    end += 1
                    closed = True
                    break
                end += 1
            end = min(end, n)
            if not closed:
                error(pos, "unterminated string literal")
            add(STRING, pos, end, text[pos + 1:end - 1] if closed else text[pos + 1:end])
            pos = end
            continue

        for punct in _PUNCTUATION:
            if text.startswith(punct, pos):
                add(PUNCT, pos, pos + len(punct))
                pos += len(punct)
                break
        else:
            error(pos, f"unexpected character '{ch}'")
            pos += 1

    return tokens, diagnostics
