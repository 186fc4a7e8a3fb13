"""Maximal-munch tokenizer for the Java-like subset and token classification."""

import re
from functools import lru_cache
from dataclasses import dataclass

from .errors import GraphParseError

KEYWORDS = frozenset(
    """
    abstract assert boolean break byte case catch char class const continue default do
    double else enum extends final finally float for goto if implements import instanceof
    int interface long native new package private protected public return short static
    strictfp super switch synchronized this throw throws transient try void volatile while var
    """.split()
)
LITERAL_WORDS = frozenset({"true", "false", "null"})

TWO_CHAR_OPS = frozenset(
    "== != <= >= && || ++ -- += -= *= /= %= &= |= ^= -> << >> ::".split()
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<line_comment>//[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<number>\d+(?:\.\d+)?[fFdDlL]?)
  | (?P<string>"(?:\\.|[^"\\\n])*")
  | (?P<char>'(?:\\.|[^'\\\n])')
  | (?P<op2>==|!=|<=|>=|&&|\|\||\+\+|--|\+=|-=|\*=|/=|%=|&=|\|=|\^=|->|<<|>>|::)
  | (?P<punct>[^\sA-Za-z0-9_$])
    """,
    re.VERBOSE | re.DOTALL,
)

_IDENT_RE = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*\Z")
_NUMBER_RE = re.compile(r"\d+(?:\.\d+)?[fFdDlL]?\Z")


@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


def lex(source, strict=True):
    """Split ``source`` into tokens, discarding whitespace and comments.

    With ``strict=False`` characters that start no valid token (an
    unterminated string, say) become single-character tokens instead of
    raising.
    """
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        bad = m is None or (
            m.lastgroup == "punct"
            and (source[pos] in "\"'" or source.startswith("/*", pos))
        )
        if bad:
            if strict:
                what = "unterminated comment" if source.startswith("/*", pos) else (
                    f"unexpected character {source[pos]!r}"
                )
                raise GraphParseError(what, line, pos - line_start + 1)
            tokens.append(Token(source[pos], line, pos - line_start + 1))
            end = pos + 1
        else:
            end = m.end()
            kind = m.lastgroup
            if kind not in ("ws", "line_comment", "block_comment"):
                tokens.append(Token(m.group(), line, pos - line_start + 1))
        chunk = source[pos:end]
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = end
    return tokens


@lru_cache(maxsize=1 << 16)
def tokenize(text):
    """Token texts of ``text`` as a tuple; never raises."""
    return tuple(t.text for t in lex(text, strict=False))


def is_identifier(token):
    return (
        _IDENT_RE.match(token) is not None
        and token not in KEYWORDS
        and token not in LITERAL_WORDS
    )


def is_literal(token):
    if token in LITERAL_WORDS or _NUMBER_RE.match(token):
        return True
    return len(token) >= 2 and token[0] == token[-1] and token[0] in "\"'"


def is_parameterizable(token):
    """Identifiers and literals may vary between clone instances."""
    return is_identifier(token) or is_literal(token)
