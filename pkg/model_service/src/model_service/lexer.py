"""Minimal lexer: just enough to pull user-defined identifier names out
of a code snippet.

Comments, string and character literals, numeric literals, and (in C)
preprocessor directive lines are consumed whole so their contents never
look like identifiers. A word token is an identifier when it is neither
a language keyword nor on the bundled standard-library denylist.
Unterminated literals and block comments are rejected with their offset,
matching strict-lexer behavior upstream of the service.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

LANGUAGES = ("c", "java", "generic")

# Alternation order matters: literals and comments must win over their
# leading punctuation, numbers over a leading dot or digit-started word.
_PIECES = (
    ("comment", r"//[^\n]*|/\*(?:[^*]|\*(?!/))*\*/"),
    ("string", r'"(?:\\.|[^"\\\n])*"'),
    ("char", r"'(?:\\.|[^'\\\n])*'"),
    ("directive", r"\#(?:\\\r?\n|[^\n])*"),
    ("number", r"(?:0[xX][0-9A-Fa-f]+|\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)[uUlLfF]*"),
    ("word", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("space", r"\s+"),
    ("other", r"."),
)


def _check_language(language: str) -> None:
    if language not in LANGUAGES:
        raise ValueError(f"unsupported language {language!r}; expected one of {LANGUAGES}")


@lru_cache(maxsize=None)
def _pattern(language: str) -> re.Pattern[str]:
    parts = [
        f"(?P<{name}>{piece})"
        for name, piece in _PIECES
        if name != "directive" or language == "c"
    ]
    return re.compile("|".join(parts))


def _wordlist(filename: str) -> frozenset[str]:
    text = resources.files("model_service").joinpath("data", filename).read_text("utf-8")
    words = set()
    for line in text.splitlines():
        word = line.split("#", 1)[0].strip()
        if word:
            words.add(word)
    return frozenset(words)


@lru_cache(maxsize=None)
def keywords(language: str) -> frozenset[str]:
    """Keyword set for a language; empty for generic mode."""
    _check_language(language)
    if language == "generic":
        return frozenset()
    return _wordlist(f"{language}_keywords.txt")


@lru_cache(maxsize=None)
def denylist(language: str) -> frozenset[str]:
    """Standard-library names never treated as user identifiers."""
    _check_language(language)
    if language == "generic":
        return frozenset()
    return _wordlist(f"{language}_denylist.txt")


def scan(source: str, language: str) -> list[tuple[str, str]]:
    """Split source into (kind, text) pairs covering the input exactly."""
    _check_language(language)
    pattern = _pattern(language)
    out: list[tuple[str, str]] = []
    pos = 0
    size = len(source)
    while pos < size:
        match = pattern.match(source, pos)
        assert match is not None  # "other" matches any character
        kind = match.lastgroup or "other"
        text = match.group()
        if kind == "other":
            if text == '"':
                raise ValueError(f"unterminated string literal at offset {pos}")
            if text == "'":
                raise ValueError(f"unterminated character literal at offset {pos}")
            if text == "/" and source.startswith("/*", pos):
                raise ValueError(f"unterminated block comment at offset {pos}")
        out.append((kind, text))
        pos = match.end()
    return out


def identifier_names(source: str, language: str) -> set[str]:
    """Distinct user-defined identifier names appearing in the source."""
    kw = keywords(language)
    deny = denylist(language)
    return {
        text
        for kind, text in scan(source, language)
        if kind == "word" and text not in kw and text not in deny
    }
