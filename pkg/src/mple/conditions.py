"""Presence-condition annotation language.

Grammar (precedence NOT > AND > OR)::

    cond := term ('|' term)*
    term := fact ('&' fact)*
    fact := '!' fact | '(' cond ')' | NAME
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConditionSyntaxError

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Not:
    operand: object


@dataclass(frozen=True)
class And:
    operands: tuple


@dataclass(frozen=True)
class Or:
    operands: tuple


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def cond(self):
        parts = [self.term()]
        while self.peek() == "|":
            self.pos += 1
            parts.append(self.term())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def term(self):
        parts = [self.fact()]
        while self.peek() == "&":
            self.pos += 1
            parts.append(self.fact())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def fact(self):
        ch = self.peek()
        if ch == "!":
            self.pos += 1
            return Not(self.fact())
        if ch == "(":
            self.pos += 1
            inner = self.cond()
            if self.peek() != ")":
                raise ConditionSyntaxError("expected ')'", self.pos)
            self.pos += 1
            return inner
        m = _NAME_RE.match(self.text, self.pos)
        if m is None:
            what = f"unexpected {ch!r}" if ch else "unexpected end of input"
            raise ConditionSyntaxError(f"{what}, expected a feature name", self.pos)
        self.pos = m.end()
        return Var(m.group())


def parse_condition(text: str):
    parser = _Parser(text)
    cond = parser.cond()
    if parser.peek():
        raise ConditionSyntaxError(f"unexpected {parser.peek()!r}", parser.pos)
    return cond


def eval_condition(cond, config) -> bool:
    """Evaluate under a Configuration or any container of selected names."""
    selected = getattr(config, "selected", config)
    if isinstance(cond, Var):
        return cond.name in selected
    if isinstance(cond, Not):
        return not eval_condition(cond.operand, selected)
    if isinstance(cond, And):
        return all(eval_condition(c, selected) for c in cond.operands)
    if isinstance(cond, Or):
        return any(eval_condition(c, selected) for c in cond.operands)
    raise TypeError(f"not a condition: {cond!r}")


def format_condition(cond) -> str:
    """Print with the fewest parentheses that still parse back to ``cond``."""
    if isinstance(cond, Var):
        return cond.name
    if isinstance(cond, Not):
        inner = format_condition(cond.operand)
        if isinstance(cond.operand, (And, Or)):
            inner = f"({inner})"
        return "!" + inner
    if isinstance(cond, And):
        return " & ".join(
            f"({format_condition(c)})" if isinstance(c, (And, Or)) else format_condition(c)
            for c in cond.operands
        )
    if isinstance(cond, Or):
        return " | ".join(
            f"({format_condition(c)})" if isinstance(c, Or) else format_condition(c)
            for c in cond.operands
        )
    raise TypeError(f"not a condition: {cond!r}")


def condition_features(cond) -> set:
    if isinstance(cond, Var):
        return {cond.name}
    if isinstance(cond, Not):
        return condition_features(cond.operand)
    return set().union(*(condition_features(c) for c in cond.operands))
