"""Versioned prompt templates shipped as text assets.

Each asset starts with a ``# version: N`` header line; the remaining text is a
:class:`string.Template` body with ``$name`` placeholders.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from .errors import MissingBinding

TEMPLATE_NAMES = ("classify", "pseudo_label", "answer_l1", "answer_lk", "judge", "aggregate")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    version: str

    @property
    def placeholders(self) -> frozenset[str]:
        names = set()
        for m in string.Template.pattern.finditer(self.body):
            named = m.group("named") or m.group("braced")
            if named:
                names.add(named)
        return frozenset(names)


def parse_template(name: str, text: str) -> PromptTemplate:
    first, _, body = text.partition("\n")
    if not first.startswith("# version:"):
        raise ValueError(f"template {name!r} lacks a version header")
    return PromptTemplate(name=name, body=body, version=first.split(":", 1)[1].strip())


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    if name not in TEMPLATE_NAMES:
        raise KeyError(name)
    text = resources.files("expertroute.templates").joinpath(f"{name}.txt").read_text("utf-8")
    return parse_template(name, text)


def format_options(options: Mapping[str, str]) -> str:
    return "\n".join(f"{letter}. {text}" for letter, text in options.items())


def render(template: PromptTemplate, bindings: Mapping[str, Any]) -> str:
    """Substitute ``bindings`` into ``template``.

    An ``options`` binding given as a mapping is rendered as ``"A. text"`` lines
    in letter order. Bindings not referenced by the template are ignored.
    """
    values = {}
    for name in template.placeholders:
        if name not in bindings:
            raise MissingBinding(name)
        value = bindings[name]
        if name == "options" and isinstance(value, Mapping):
            value = format_options(value)
        values[name] = str(value)
    return string.Template(template.body).substitute(values)
