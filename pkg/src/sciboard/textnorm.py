"""Canonical text comparison used everywhere entity names are matched.

Names are compared case-insensitively with runs of whitespace collapsed to a
single space. The canonical form is only a comparison key; surfaces shown to
users keep their original spelling.
"""

from __future__ import annotations

from collections.abc import Iterable

# Reserved joiner for composite keys; never appears in entity names.
KEY_SEPARATOR = "␟"


def canon(text: str) -> str:
    """Comparison key: whitespace collapsed, case folded."""
    return " ".join(text.split()).casefold()


def canon_eq(a: str, b: str) -> bool:
    return canon(a) == canon(b)


def triple_key(task: str, dataset: str, metric: str) -> str:
    """Canonical key for a (task, dataset, metric) triple."""
    return KEY_SEPARATOR.join((canon(task), canon(dataset), canon(metric)))


def find_canonical(mention: str, names: Iterable[str]) -> str | None:
    """Return the first name whose canonical form equals the mention's, else None."""
    target = canon(mention)
    for name in names:
        if canon(name) == target:
            return name
    return None
