"""Generation of smoothed variants by identifier masking or character edits.

Each sample draws a uniformly random subset of identifier entries and
rewrites the selected names, either with positional mask tokens (mask mode)
or with random insert/replace/delete character edits (edit mode). The
random stream for a sample is derived from (seed, snippet digest, sample
index) only, so batches are reproducible and schedule independent.
"""

from __future__ import annotations

import enum
import hashlib
import math
import random
import string
from dataclasses import dataclass
from typing import AbstractSet, Optional

from .code_model import (
    KIND_IDENTIFIER,
    CodeSnippet,
    IDENTIFIER_RE,
    keywords,
    rename_many,
)
from .errors import PerturbationError

DEFAULT_ALPHABET = string.ascii_uppercase + string.ascii_lowercase + string.digits + "_"


class EditOp(enum.Enum):
    """Character-level edit operations applied to identifier names."""

    INSERT = "insert"
    REPLACE = "replace"
    DELETE = "delete"


ALL_OPS = frozenset(EditOp)


@dataclass(frozen=True)
class EditStep:
    """One applied operation; char is None for deletions."""

    op: EditOp
    position: int
    char: Optional[str]


@dataclass(frozen=True)
class PerturbationPath:
    """The ordered sequence of edits applied to one identifier."""

    steps: tuple[EditStep, ...]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class SmoothingConfig:
    """Parameters shared by sample generation and certification.

    two_batch selects the split protocol where one batch picks the
    predicted label and a second, independent batch estimates its vote
    count; the default reuses a single batch for both.
    """

    n_samples: int = 100
    perturb_fraction: float = 0.9
    eta: float = 0.6
    mode: str = "mask"
    op_set: frozenset[EditOp] = ALL_OPS
    alphabet: str = DEFAULT_ALPHABET
    alpha: float = 0.001
    seed: int = 0
    two_batch: bool = False

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not 0.0 <= self.perturb_fraction <= 1.0:
            raise ValueError("perturb_fraction must lie in [0, 1]")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.mode not in ("edit", "mask"):
            raise ValueError(f"mode must be 'edit' or 'mask', got {self.mode!r}")
        if not self.op_set:
            raise ValueError("op_set must be nonempty")
        if not self.alphabet:
            raise ValueError("alphabet must be nonempty")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        object.__setattr__(self, "op_set", frozenset(self.op_set))


@dataclass(frozen=True)
class SmoothedSample:
    """One perturbed variant plus the entry indices that were rewritten."""

    snippet: CodeSnippet
    perturbed_indices: frozenset[int]
    sample_index: int


def round_half_up(x: float) -> int:
    """Round to the nearest integer, with halves rounding up."""
    return math.floor(x + 0.5)


def perturbed_count(h: int, perturb_fraction: float) -> int:
    """Number of identifier entries rewritten per sample."""
    return min(h, round_half_up(perturb_fraction * h))


def retained_count(h: int, perturb_fraction: float) -> int:
    """Number of identifier entries left untouched per sample."""
    return h - perturbed_count(h, perturb_fraction)


def edit_budget(name_length: int, eta: float) -> int:
    """Number of edit operations for a name: max(1, half-up(eta * length))."""
    if name_length < 1:
        raise ValueError("name_length must be at least 1")
    return max(1, round_half_up(eta * name_length))


def select_subset(h: int, size: int, rng: random.Random) -> frozenset[int]:
    """Uniformly random size-subset of {0, ..., h - 1}."""
    if size < 0 or size > h:
        raise ValueError(f"subset size {size} out of range for {h} entries")
    return frozenset(rng.sample(range(h), size))


def mask_identifier(entry_index: int, existing_names: AbstractSet[str] = frozenset()) -> str:
    """Positional mask token for an entry, never derived from its name.

    Collisions with existing names are resolved by deterministically
    appending underscores, so the result is still a pure function of the
    entry index and the avoid set.
    """
    if entry_index < 0:
        raise ValueError("entry_index must be nonnegative")
    name = f"vmask{entry_index}"
    while name in existing_names:
        name += "_"
    return name


def _first_position_alphabet(alphabet: str) -> str:
    chars = "".join(c for c in alphabet if not c.isdigit())
    if not chars:
        raise PerturbationError("alphabet has no character valid at position 0")
    return chars


def _apply_op(
    name: str, op: EditOp, alphabet: str, first_alphabet: str, rng: random.Random
) -> tuple[str, EditStep]:
    if op is EditOp.INSERT:
        pos = rng.randrange(len(name) + 1)
        chars = first_alphabet if pos == 0 else alphabet
        ch = chars[rng.randrange(len(chars))]
        return name[:pos] + ch + name[pos:], EditStep(op, pos, ch)
    if op is EditOp.REPLACE:
        pos = rng.randrange(len(name))
        chars = first_alphabet if pos == 0 else alphabet
        choices = [c for c in chars if c != name[pos]]
        if not choices:
            raise PerturbationError("alphabet too small to replace a character")
        ch = choices[rng.randrange(len(choices))]
        return name[:pos] + ch + name[pos + 1 :], EditStep(op, pos, ch)
    pos = rng.randrange(len(name))
    return name[:pos] + name[pos + 1 :], EditStep(op, pos, None)


def sample_perturbation(
    name: str,
    budget: int,
    op_set: AbstractSet[EditOp],
    alphabet: str,
    rng: random.Random,
) -> tuple[str, PerturbationPath]:
    """Apply budget random edits to a name and return the path taken.

    Delete is skipped while the name has a single character; if no
    operation is applicable the attempt fails with PerturbationError.
    The result is not checked against keywords or existing names; that
    is the caller's job (see perturb_identifier).
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not op_set:
        raise ValueError("op_set must be nonempty")
    ordered = sorted(op_set, key=lambda op: op.value)
    first_alphabet = _first_position_alphabet(alphabet)
    current = name
    steps: list[EditStep] = []
    for _ in range(budget):
        applicable = [op for op in ordered if not (op is EditOp.DELETE and len(current) == 1)]
        if not applicable:
            raise PerturbationError("no applicable operation for a single-character name")
        op = applicable[rng.randrange(len(applicable))]
        current, step = _apply_op(current, op, alphabet, first_alphabet, rng)
        steps.append(step)
    return current, PerturbationPath(tuple(steps))


def perturb_identifier(
    name: str,
    budget: int,
    op_set: AbstractSet[EditOp],
    alphabet: str,
    existing_names: AbstractSet[str],
    rng: random.Random,
    max_attempts: int = 64,
) -> str:
    """Produce a perturbed, lexically valid name avoiding existing_names.

    existing_names must contain every name the result may not take:
    current identifier names, language keywords, and denylisted names.
    Each attempt applies budget random edits; after max_attempts failed
    attempts a PerturbationError is raised.
    """
    if not IDENTIFIER_RE.match(name):
        raise ValueError(f"{name!r} is not a lexically valid identifier")
    for _ in range(max_attempts):
        candidate, _path = sample_perturbation(name, budget, op_set, alphabet, rng)
        if candidate == name or candidate in existing_names:
            continue
        if IDENTIFIER_RE.match(candidate):
            return candidate
    raise PerturbationError(
        f"no valid perturbation of {name!r} found after {max_attempts} attempts"
    )


def snippet_digest(snippet: CodeSnippet) -> bytes:
    """Stable digest identifying a snippet's language and source."""
    h = hashlib.sha256()
    h.update(snippet.language.encode("utf-8"))
    h.update(b"\x00")
    h.update(snippet.source.encode("utf-8"))
    return h.digest()


def sample_rng(config: SmoothingConfig, snippet: CodeSnippet, sample_index: int) -> random.Random:
    """Random stream derived from (seed, snippet digest, sample index) only."""
    h = hashlib.sha256()
    h.update(config.seed.to_bytes(8, "big", signed=True))
    h.update(snippet_digest(snippet))
    h.update(sample_index.to_bytes(8, "big", signed=True))
    return random.Random(int.from_bytes(h.digest(), "big"))


def _non_table_identifier_texts(snippet: CodeSnippet) -> set[str]:
    table_names = set(snippet.identifiers.names())
    return {
        t.text
        for t in snippet.tokens
        if t.kind == KIND_IDENTIFIER and t.text not in table_names
    }


def generate_smoothed_sample(
    snippet: CodeSnippet, config: SmoothingConfig, sample_index: int
) -> SmoothedSample:
    """Generate one smoothed variant of a snippet.

    Mask mode rewrites each selected entry to its positional mask token.
    The avoid set used for mask collisions is built only from retained
    names and from identifier tokens outside the table, never from the
    selected entries' original names, so two snippets differing only in
    selected entries mask to byte-identical variants.
    """
    table = snippet.identifiers
    h = len(table)
    count = perturbed_count(h, config.perturb_fraction)
    rng = sample_rng(config, snippet, sample_index)
    if h == 0 or count == 0:
        return SmoothedSample(snippet, frozenset(), sample_index)
    selected = select_subset(h, count, rng)
    lang_keywords = keywords(snippet.language)
    non_table = _non_table_identifier_texts(snippet)
    mapping: dict[str, str] = {}
    if config.mode == "mask":
        retained = {table.entries[i].name for i in range(h) if i not in selected}
        avoid = retained | non_table | lang_keywords | set(snippet.denylist)
        assigned: set[str] = set()
        for i in sorted(selected):
            new = mask_identifier(i, avoid | assigned)
            mapping[table.entries[i].name] = new
            assigned.add(new)
    else:
        avoid = set(table.names()) | non_table | lang_keywords | set(snippet.denylist)
        assigned = set()
        for i in sorted(selected):
            name = table.entries[i].name
            budget = edit_budget(len(name), config.eta)
            new = perturb_identifier(
                name, budget, config.op_set, config.alphabet, avoid | assigned, rng
            )
            mapping[name] = new
            assigned.add(new)
    variant = rename_many(snippet, mapping)
    return SmoothedSample(variant, selected, sample_index)


def generate_batch(snippet: CodeSnippet, config: SmoothingConfig) -> list[SmoothedSample]:
    """Generate the full batch of n_samples smoothed variants."""
    return [
        generate_smoothed_sample(snippet, config, i) for i in range(config.n_samples)
    ]
