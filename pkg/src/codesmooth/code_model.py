"""Source code as a token sequence plus a user-defined-identifier table.

One regex lexer serves all supported languages; per-language keyword tables
decide which word tokens are keywords, and configurable denylists exclude
standard-library names from the identifier table. Tokens partition the
source exactly, so joining token texts reproduces the input byte for byte.
On top of that view the module provides consistent whole-snippet renames
and an identifier-level L0 distance between structurally aligned snippets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

from .errors import AlignmentError, LexError, RenameError

LANGUAGES = ("c", "java", "generic")

KIND_IDENTIFIER = "identifier"
KIND_KEYWORD = "keyword"
KIND_STRING = "string-literal"
KIND_CHAR = "char-literal"
KIND_NUMBER = "numeric-literal"
KIND_COMMENT = "comment"
KIND_PUNCTUATION = "punctuation"
KIND_WHITESPACE = "whitespace"

TOKEN_KINDS = (
    KIND_IDENTIFIER,
    KIND_KEYWORD,
    KIND_STRING,
    KIND_CHAR,
    KIND_NUMBER,
    KIND_COMMENT,
    KIND_PUNCTUATION,
    KIND_WHITESPACE,
)

IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# Order matters: literals and comments must win over their leading
# punctuation characters, and numbers must win over a leading dot.
_TOKEN_PATTERNS = (
    ("comment", r"//[^\n]*|/\*(?:[^*]|\*(?!/))*\*/"),
    ("string", r'"(?:\\.|[^"\\\n])*"'),
    ("char", r"'(?:\\.|[^'\\\n])*'"),
    # Preprocessor directives (C only) become one opaque punctuation token,
    # including backslash line continuations.
    ("directive", r"\#(?:\\\r?\n|[^\n])*"),
    ("number", r"(?:0[xX][0-9A-Fa-f]+|\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)[uUlLfF]*"),
    ("word", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("whitespace", r"\s+"),
    ("other", r"."),
)

_GROUP_KINDS = {
    "comment": KIND_COMMENT,
    "string": KIND_STRING,
    "char": KIND_CHAR,
    "directive": KIND_PUNCTUATION,
    "number": KIND_NUMBER,
    "whitespace": KIND_WHITESPACE,
    "other": KIND_PUNCTUATION,
}


def _check_language(language: str) -> None:
    if language not in LANGUAGES:
        raise ValueError(f"unsupported language {language!r}; expected one of {LANGUAGES}")


@lru_cache(maxsize=None)
def _master_pattern(language: str) -> re.Pattern[str]:
    parts = []
    for name, pattern in _TOKEN_PATTERNS:
        if name == "directive" and language != "c":
            continue
        parts.append(f"(?P<{name}>{pattern})")
    return re.compile("|".join(parts))


def _read_wordlist(filename: str) -> frozenset[str]:
    text = resources.files("codesmooth").joinpath("data").joinpath(filename).read_text("utf-8")
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
    return _read_wordlist(f"{language}_keywords.txt")


@lru_cache(maxsize=None)
def default_denylist(language: str) -> frozenset[str]:
    """Default set of library names excluded from the identifier table."""
    _check_language(language)
    if language == "generic":
        return frozenset()
    return _read_wordlist(f"{language}_denylist.txt")


@dataclass(frozen=True)
class Token:
    """One lexeme with its kind and [start, end) offsets into the source."""

    text: str
    kind: str
    start: int
    end: int


@dataclass(frozen=True)
class IdentifierEntry:
    """One distinct identifier name and the token indices where it occurs."""

    name: str
    occurrences: tuple[int, ...]


@dataclass(frozen=True)
class IdentifierTable:
    """Distinct user-defined identifiers in first-occurrence order."""

    entries: tuple[IdentifierEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> tuple[str, ...]:
        return tuple(entry.name for entry in self.entries)

    def entry_index(self, name: str) -> Optional[int]:
        for i, entry in enumerate(self.entries):
            if entry.name == name:
                return i
        return None


@dataclass(frozen=True)
class CodeSnippet:
    """A lexed snippet; the table matches extract_identifiers over tokens.

    The effective denylist is retained so that renames can rebuild the
    table under exactly the extraction rules the snippet was built with.
    """

    language: str
    source: str
    tokens: tuple[Token, ...]
    identifiers: IdentifierTable
    denylist: frozenset[str]

    @property
    def identifier_count(self) -> int:
        return len(self.identifiers)


def tokenize(source: str, language: str) -> list[Token]:
    """Split source into tokens that partition the input exactly.

    Raises LexError, naming the byte offset, for unterminated strings,
    character literals, and block comments.
    """
    _check_language(language)
    pattern = _master_pattern(language)
    tokens: list[Token] = []
    pos = 0
    size = len(source)
    kw = keywords(language)
    while pos < size:
        match = pattern.match(source, pos)
        if match is None:  # unreachable: "other" matches any character
            raise LexError("unrecognized input", pos)
        group = match.lastgroup
        text = match.group()
        if group == "other":
            if text == '"':
                raise LexError("unterminated string literal", pos)
            if text == "'":
                raise LexError("unterminated character literal", pos)
            if text == "/" and source.startswith("/*", pos):
                raise LexError("unterminated block comment", pos)
        if group == "word":
            kind = KIND_KEYWORD if text in kw else KIND_IDENTIFIER
        else:
            kind = _GROUP_KINDS[group]
        tokens.append(Token(text, kind, pos, match.end()))
        pos = match.end()
    return tokens


def extract_identifiers(
    tokens: Sequence[Token],
    language: str,
    denylist: Optional[Iterable[str]] = None,
) -> IdentifierTable:
    """Group identifier-kind tokens by name, skipping denylisted names.

    Entries appear in first-occurrence order; occurrence lists are sorted
    because tokens are scanned left to right.
    """
    _check_language(language)
    deny = default_denylist(language) if denylist is None else frozenset(denylist)
    grouped: dict[str, list[int]] = {}
    for i, token in enumerate(tokens):
        if token.kind == KIND_IDENTIFIER and token.text not in deny:
            grouped.setdefault(token.text, []).append(i)
    entries = tuple(IdentifierEntry(name, tuple(where)) for name, where in grouped.items())
    return IdentifierTable(entries)


def snippet_from_source(
    source: str,
    language: str,
    denylist: Optional[Iterable[str]] = None,
    identifier_names: Optional[Iterable[str]] = None,
) -> CodeSnippet:
    """Lex source and build its identifier table.

    When identifier_names is given it overrides heuristic extraction: only
    those names stay in the table, and every other extracted name joins the
    stored denylist so the table invariant still holds.
    """
    tokens = tuple(tokenize(source, language))
    deny = default_denylist(language) if denylist is None else frozenset(denylist)
    table = extract_identifiers(tokens, language, deny)
    if identifier_names is not None:
        allowed = set(identifier_names)
        deny = deny | {entry.name for entry in table.entries if entry.name not in allowed}
        table = IdentifierTable(tuple(e for e in table.entries if e.name in allowed))
    return CodeSnippet(language, source, tokens, table, deny)


def _validate_replacement(snippet: CodeSnippet, name: str) -> None:
    if not IDENTIFIER_RE.match(name):
        raise RenameError(f"lexically invalid identifier {name!r}")
    if name in keywords(snippet.language):
        raise RenameError(f"{name!r} is a {snippet.language} keyword")
    if name in snippet.denylist:
        raise RenameError(f"{name!r} is a denylisted name")


def rename_many(snippet: CodeSnippet, mapping: Mapping[str, str]) -> CodeSnippet:
    """Apply several renames simultaneously in one token pass.

    Every key must be a table entry; values must be pairwise distinct,
    lexically valid, non-keyword, non-denylisted, and must not collide
    with any identifier token that is not itself being renamed.
    """
    if not mapping:
        return snippet
    by_name = {entry.name: entry for entry in snippet.identifiers.entries}
    target: dict[int, str] = {}
    for old, new in mapping.items():
        entry = by_name.get(old)
        if entry is None:
            raise RenameError(f"unknown identifier {old!r}")
        _validate_replacement(snippet, new)
        for i in entry.occurrences:
            target[i] = new
    values = list(mapping.values())
    if len(set(values)) != len(values):
        raise RenameError("replacement names must be pairwise distinct")
    value_set = set(values)
    for i, token in enumerate(snippet.tokens):
        if token.kind == KIND_IDENTIFIER and i not in target and token.text in value_set:
            raise RenameError(f"replacement {token.text!r} collides with an existing identifier")
    new_tokens: list[Token] = []
    pos = 0
    for i, token in enumerate(snippet.tokens):
        text = target.get(i, token.text)
        new_tokens.append(Token(text, token.kind, pos, pos + len(text)))
        pos += len(text)
    new_entries = tuple(
        IdentifierEntry(mapping.get(entry.name, entry.name), entry.occurrences)
        for entry in snippet.identifiers.entries
    )
    source = "".join(token.text for token in new_tokens)
    return CodeSnippet(
        snippet.language,
        source,
        tuple(new_tokens),
        IdentifierTable(new_entries),
        snippet.denylist,
    )


def rename_identifier(snippet: CodeSnippet, old_name: str, new_name: str) -> CodeSnippet:
    """Rename every occurrence of one identifier, keeping its entry index."""
    if snippet.identifiers.entry_index(old_name) is None:
        raise RenameError(f"unknown identifier {old_name!r}")
    if new_name == old_name:
        return snippet
    return rename_many(snippet, {old_name: new_name})


def identifier_distance(a: CodeSnippet, b: CodeSnippet) -> int:
    """Count identifier entries whose names differ between aligned snippets.

    The snippets must agree on everything except identifier names: token
    count, token kinds, occurrence structure, and the text of every token
    outside the identifier table. Anything else raises AlignmentError.
    """
    if a.language != b.language:
        raise AlignmentError("language mismatch")
    if len(a.tokens) != len(b.tokens):
        raise AlignmentError("token count mismatch")
    ea, eb = a.identifiers.entries, b.identifiers.entries
    if len(ea) != len(eb):
        raise AlignmentError("identifier entry count mismatch")
    covered: set[int] = set()
    for x, y in zip(ea, eb):
        if x.occurrences != y.occurrences:
            raise AlignmentError("identifier occurrence structure mismatch")
        covered.update(x.occurrences)
    for i, (x, y) in enumerate(zip(a.tokens, b.tokens)):
        if x.kind != y.kind:
            raise AlignmentError(f"token kind mismatch at index {i}")
        if i not in covered and x.text != y.text:
            raise AlignmentError(f"non-identifier token differs at index {i}")
    return sum(1 for x, y in zip(ea, eb) if x.name != y.name)
