"""Scalar literals and a tiny scanner shared by the line protocols and query text."""

from __future__ import annotations

import math
import re
from typing import Union

Scalar = Union[int, float, str, bool]

_NUMBER = re.compile(r"-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_BLANK = " \t\r\n"
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}
_REVERSE = {v: k for k, v in _ESCAPES.items()}


class TextSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int) -> None:
        super().__init__(f"{message} at column {pos + 1}: {text!r}")
        self.column = pos + 1


def format_scalar(value: Scalar) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite real {value!r} has no literal form")
        return repr(value)
    if isinstance(value, str):
        return '"' + "".join("\\" + _REVERSE[c] if c in _REVERSE else c for c in value) + '"'
    raise TypeError(f"unsupported scalar {value!r}")


def is_scalar(value: object) -> bool:
    if isinstance(value, float):
        return math.isfinite(value)
    return isinstance(value, (bool, int, str))


class Scanner:
    def __init__(self, text: str, pos: int = 0) -> None:
        self.text = text
        self.pos = pos

    def error(self, message: str) -> TextSyntaxError:
        return TextSyntaxError(message, self.text, self.pos)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in _BLANK:
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self, token: str) -> bool:
        self.skip_ws()
        return self.text.startswith(token, self.pos)

    def accept(self, token: str) -> bool:
        if self.peek(token):
            self.pos += len(token)
            return True
        return False

    def expect(self, token: str) -> None:
        if not self.accept(token):
            raise self.error(f"expected {token!r}")

    def ident(self) -> str:
        self.skip_ws()
        m = _IDENT.match(self.text, self.pos)
        if not m:
            raise self.error("expected a name")
        self.pos = m.end()
        return m.group()

    def word(self) -> str:
        """Run of non-blank characters."""
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in _BLANK:
            self.pos += 1
        if start == self.pos:
            raise self.error("expected a token")
        return self.text[start:self.pos]

    def scalar(self) -> Scalar:
        self.skip_ws()
        text, pos = self.text, self.pos
        if text.startswith('"', pos):
            out = []
            i = pos + 1
            while i < len(text):
                c = text[i]
                if c == "\\":
                    if i + 1 >= len(text) or text[i + 1] not in _ESCAPES:
                        self.pos = i
                        raise self.error("bad escape in string")
                    out.append(_ESCAPES[text[i + 1]])
                    i += 2
                elif c == '"':
                    self.pos = i + 1
                    return "".join(out)
                else:
                    out.append(c)
                    i += 1
            raise self.error("unterminated string")
        for word, value in (("true", True), ("false", False)):
            if text.startswith(word, pos) and not _continues(text, pos + len(word)):
                self.pos = pos + len(word)
                return value
        m = _NUMBER.match(text, pos)
        if m and not _continues(text, m.end()):
            self.pos = m.end()
            literal = m.group()
            if any(c in literal for c in ".eE"):
                return float(literal)
            return int(literal)
        raise self.error("expected a literal")


def _continues(text: str, pos: int) -> bool:
    return pos < len(text) and (text[pos].isalnum() or text[pos] == "_")


def parse_scalar(text: str) -> Scalar:
    scanner = Scanner(text)
    value = scanner.scalar()
    if not scanner.at_end():
        raise scanner.error("trailing characters after literal")
    return value
