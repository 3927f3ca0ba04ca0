"""Loaders for the data files shipped inside the package.

Everything here is overridable: each loader takes an optional path and
falls back to the packaged copy, so the framework can be pointed at a
different domain without touching code.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from typing import FrozenSet, List, Optional

from .types import CategorySet

PROMPT_NAMES = (
    "question_generation",
    "response_generation",
    "splitter",
    "checker",
    "categorizer",
)


@lru_cache(maxsize=None)
def read_data_text(name: str) -> str:
    return resources.files("dahl.data").joinpath(name).read_text(encoding="utf-8")


def _read_maybe(path: Optional[str], packaged_name: str) -> str:
    if path is None:
        return read_data_text(packaged_name)
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def parse_line_file(text: str) -> List[str]:
    """Non-blank, non-comment lines, stripped, order preserved."""
    lines = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def load_category_set(path: Optional[str] = None) -> CategorySet:
    labels = parse_line_file(_read_maybe(path, "categories.txt"))
    return CategorySet(labels=tuple(labels))


def load_noncommittal_phrases(path: Optional[str] = None) -> List[str]:
    return parse_line_file(_read_maybe(path, "noncommittal_phrases.txt"))


def load_abbreviations(path: Optional[str] = None) -> FrozenSet[str]:
    return frozenset(parse_line_file(_read_maybe(path, "abbreviations.txt")))


def load_prompt(name: str, path: Optional[str] = None) -> str:
    if name not in PROMPT_NAMES:
        raise ValueError(f"unknown prompt template {name!r}, expected one of {PROMPT_NAMES}")
    return _read_maybe(path, f"prompts/{name}.txt")


def fill_template(template: str, **values: str) -> str:
    """Substitute {name} placeholders literally.

    Plain replacement instead of str.format so user-edited templates
    may contain braces without escaping them.
    """
    out = template
    for key, value in values.items():
        out = out.replace("{" + key + "}", str(value))
    return out
