"""Shared test helpers: a seeded random-snippet factory and the
acceptance-criteria summary printed after the run."""

from __future__ import annotations

import random
import string

from codesmooth.code_model import default_denylist, keywords

ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []

_NAME_FIRST = string.ascii_lowercase + "_"
_NAME_REST = string.ascii_lowercase + string.digits + "_"
_SAFE_STRING_CHARS = string.ascii_letters + string.digits + " .,:;!?+-*/(){}[]<>=&|%"
_TYPES = ("int", "long", "float", "double", "char")


def random_name(rng: random.Random, language: str) -> str:
    """A fresh lexically valid name outside keywords and the denylist."""
    avoid = keywords(language) | default_denylist(language)
    while True:
        name = rng.choice(_NAME_FIRST) + "".join(
            rng.choice(_NAME_REST) for _ in range(rng.randint(0, 6))
        )
        if name not in avoid and not name.startswith("vmask"):
            return name


def random_snippet_source(
    rng: random.Random, language: str = "c", n_vars: int | None = None
) -> tuple[str, list[str]]:
    """(source, declared names): varied statements, comments, literals.

    Always lexes cleanly; in c/java mode the identifier table is exactly
    the returned name list (all other words are keywords or denylisted).
    """
    if n_vars is None:
        n_vars = rng.randint(0, 8)
    names: list[str] = []
    while len(names) < n_vars:
        name = random_name(rng, language)
        if name not in names:
            names.append(name)
    lines: list[str] = []
    if language == "c" and rng.random() < 0.3:
        lines.append("#include <stdio.h>")
    for name in names:
        lines.append(f"{rng.choice(_TYPES)} {name} = {rng.randint(0, 999)};")
    for _ in range(rng.randint(0, 6)):
        kind = rng.randint(0, 5)
        if kind == 0 and names:
            a, b = rng.choice(names), rng.choice(names)
            lines.append(f"{a} = {b} {rng.choice(('+', '-', '*'))} {rng.randint(1, 99)};")
        elif kind == 1:
            body = "".join(rng.choice(_SAFE_STRING_CHARS) for _ in range(rng.randint(0, 12)))
            lines.append("// " + body)
        elif kind == 2:
            body = "".join(rng.choice(_SAFE_STRING_CHARS) for _ in range(rng.randint(0, 12)))
            lines.append("/* " + body.replace("*/", "* /") + " */")
        elif kind == 3:
            body = "".join(rng.choice(_SAFE_STRING_CHARS) for _ in range(rng.randint(0, 10)))
            target = names[0] if names else "x"
            if not names:
                lines.append(f'"{body}";')
            else:
                lines.append(f'{target} = "{body}" == 0 ? 1 : 2;')
        elif kind == 4 and names:
            lines.append(f"{rng.choice(names)} = '{rng.choice(string.ascii_letters)}';")
        else:
            lines.append(f"{{ {rng.randint(0, 9)}; }}")
    sep = rng.choice(("\n", "\n", "\n\t", "\n  "))
    return sep.join(lines) + "\n", names


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(("PASS  " if passed else "FAIL  ") + name)
