"""Prompt templates: text files with ``[system]``, ``[context]`` and ``[instructions]`` sections.

Placeholders use :class:`string.Template` syntax (``${name}``). The user
message always places the rendered context before the instructions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template

from ..coverage import LABELS, METRICS

CONTEXT_HEADING = "## Context"
INSTRUCTIONS_HEADING = "## Instructions"
SECTIONS = ("system", "context", "instructions")

_SECTION = re.compile(r"^\[(system|context|instructions)\]\s*$", re.MULTILINE)

COVERAGE_CRITERIA = ", ".join(LABELS[m].lower() + " coverage" for m in METRICS)


class PromptError(Exception):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    context: str
    instructions: str

    def render(self, values: dict[str, str]) -> tuple[str, str]:
        try:
            system = Template(self.system).substitute(values).strip()
            context = Template(self.context).substitute(values).strip()
            instructions = Template(self.instructions).substitute(values).strip()
        except KeyError as exc:
            raise PromptError(f"template {self.name!r} needs a value for {exc.args[0]!r}") from None
        user = f"{CONTEXT_HEADING}\n{context}\n\n{INSTRUCTIONS_HEADING}\n{instructions}"
        return system, user


def _read(name: str, directory: str | Path | None) -> str:
    if directory is not None:
        return (Path(directory) / f"{name}.txt").read_text(encoding="utf-8")
    return resources.files("restamp").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")


def load_template(name: str, directory: str | Path | None = None) -> PromptTemplate:
    text = _read(name, directory)
    parts = _SECTION.split(text)
    sections: dict[str, str] = {}
    for i in range(1, len(parts), 2):
        sections[parts[i]] = parts[i + 1]
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise PromptError(f"template {name!r} lacks sections {missing}")
    return PromptTemplate(name, sections["system"], sections["context"], sections["instructions"])


def dsl_guide(directory: str | Path | None = None) -> str:
    return _read("dsl_guide", directory).strip()


class PromptBook:
    """Loads each template once and renders with shared defaults."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = directory
        self._cache: dict[str, PromptTemplate] = {}
        self.defaults = {"criteria": COVERAGE_CRITERIA, "dsl_guide": dsl_guide(directory)}

    def template(self, name: str) -> PromptTemplate:
        if name not in self._cache:
            self._cache[name] = load_template(name, self.directory)
        return self._cache[name]

    def render(self, name: str, **values: str) -> tuple[str, str]:
        return self.template(name).render({**self.defaults, **values})
