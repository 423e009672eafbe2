"""Single-line function-call command language spoken by the assistant.

Grammar (keyword arguments only)::

    call      := NAME "(" [argument ("," argument)*] ")"
    argument  := NAME "=" value
    value     := STRING | NUMBER
    STRING    := '"' ( ESCAPE | any char but '"' )* '"'
    ESCAPE    := '\\"' | '\\\\' | '\\n' | '\\r'
    NUMBER    := "-"? DIGITS ("." DIGITS)?

Only the first non-empty line of a message is read; anything after it is
ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Union

IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
NUMBER = re.compile(r"-?[0-9]+(?:\.[0-9]+)?")

ArgValue = Union[str, Decimal]

ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "r": "\r"}


@dataclass(frozen=True)
class FunctionCall:
    name: str
    args: tuple[tuple[str, ArgValue], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple((k, v) for k, v in self.args))
        if not IDENTIFIER.fullmatch(self.name):
            raise ValueError(f"invalid function name {self.name!r}")
        keys = [key for key, _ in self.args]
        for key in keys:
            if not IDENTIFIER.fullmatch(key):
                raise ValueError(f"invalid keyword {key!r}")
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate keyword in call to {self.name}")
        for _, value in self.args:
            if isinstance(value, Decimal):
                if not value.is_finite():
                    raise ValueError("numeric arguments must be finite")
            elif not isinstance(value, str):
                raise ValueError(f"unsupported argument type {type(value).__name__}")

    @property
    def kwargs(self) -> dict[str, ArgValue]:
        return dict(self.args)


@dataclass(frozen=True)
class SyntaxFault:
    raw: str


ParseOutcome = Union[FunctionCall, SyntaxFault]


class _ParseError(Exception):
    pass


class _Parser:
    """Recursive-descent reader over one command line."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self) -> FunctionCall:
        self._skip_blanks()
        name = self._identifier()
        self._skip_blanks()
        self._expect("(")
        self._skip_blanks()

        args = []
        if not self._at(")"):
            while True:
                args.append(self._argument())
                self._skip_blanks()
                if not self._at(","):
                    break
                self.pos += 1
                self._skip_blanks()
        self._expect(")")

        self._skip_blanks()
        if self.pos != len(self.text):
            raise _ParseError(f"trailing characters at column {self.pos}")
        return FunctionCall(name, tuple(args))

    def _argument(self) -> tuple[str, ArgValue]:
        key = self._identifier()
        self._skip_blanks()
        self._expect("=")
        self._skip_blanks()
        return key, self._value()

    def _value(self) -> ArgValue:
        if self._at('"'):
            return self._string()
        match = NUMBER.match(self.text, self.pos)
        if match is None:
            raise _ParseError(f"expected a quoted string or a number at column {self.pos}")
        self.pos = match.end()
        return Decimal(match.group())

    def _string(self) -> str:
        self.pos += 1
        chars = []
        while self.pos < len(self.text):
            char = self.text[self.pos]
            if char == "\\" and self.text[self.pos + 1 : self.pos + 2] in ESCAPES:
                chars.append(ESCAPES[self.text[self.pos + 1]])
                self.pos += 2
                continue
            if char == '"':
                self.pos += 1
                return "".join(chars)
            chars.append(char)
            self.pos += 1
        raise _ParseError("unterminated string")

    def _identifier(self) -> str:
        match = IDENTIFIER.match(self.text, self.pos)
        if match is None:
            raise _ParseError(f"expected a name at column {self.pos}")
        self.pos = match.end()
        return match.group()

    def _expect(self, token: str):
        if not self._at(token):
            raise _ParseError(f"expected {token!r} at column {self.pos}")
        self.pos += len(token)

    def _at(self, token: str) -> bool:
        return self.text.startswith(token, self.pos)

    def _skip_blanks(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t":
            self.pos += 1


def first_command_line(text: str) -> str | None:
    for line in text.split("\n"):
        if line.strip():
            return line.strip()
    return None


def parse_call(text: str) -> ParseOutcome:
    line = first_command_line(text)
    if line is None:
        return SyntaxFault(text)
    try:
        return _Parser(line).parse()
    except (_ParseError, ValueError):
        return SyntaxFault(text)


def _render_value(value: ArgValue) -> str:
    if isinstance(value, Decimal):
        return format(value, "f")
    escaped = value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\r", "\\r")
    return f'"{escaped}"'


def render_call(call: FunctionCall) -> str:
    rendered = ", ".join(f"{key}={_render_value(value)}" for key, value in call.args)
    return f"{call.name}({rendered})"


def recovery_message(detail: str) -> str:
    return f"Error: {detail}. Please try again."


def render_error(fault: SyntaxFault) -> str:
    return recovery_message(f"syntax error in command {fault.raw}")
