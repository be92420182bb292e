"""Declarative test-suite format: model, parser, serializer, lint and merge.

A suite is a JSON document (schema in ``suite.schema.json``). Each case is
a sequence of HTTP steps; values captured from one response can be
referenced as ``{{name}}`` in later steps of the same case, and a capture
named like a path variable binds that ``{variable}`` directly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path, PurePosixPath
from typing import Any

import jsonschema

FORMAT_TAG = "restamp-suite/1"
ORIGINS = ("seed", "single-agent", "multi-agent", "repair")
BODY_KINDS = frozenset({"body_field_equals", "body_field_exists"})
ASSERTION_KINDS = (
    "status_equals",
    "status_class_equals",
    "header_contains",
    "content_type_equals",
    "body_field_equals",
    "body_field_exists",
)

_NAME = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")
_PATH_VAR = re.compile(r"\{([^{}/]+)\}")
_REF = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")
_STATUS_CLASS = re.compile(r"^[1-5]xx$")

Literal = str | int | float | bool | None


@dataclass(frozen=True)
class Assertion:
    kind: str
    expected: Literal
    selector: str | None = None


@dataclass(frozen=True)
class Body:
    content_type: str
    text: str | None = None
    file: str | None = None
    field: str | None = None


@dataclass(frozen=True)
class TestStep:
    method: str
    path: str
    path_params: dict[str, Literal] = field(default_factory=dict)
    query_params: dict[str, Literal] = field(default_factory=dict)
    form_params: dict[str, Literal] = field(default_factory=dict)
    headers: dict[str, str] = field(default_factory=dict)
    body: Body | None = None
    captures: dict[str, str] = field(default_factory=dict)
    assertions: tuple[Assertion, ...] = ()

    __test__ = False


@dataclass(frozen=True)
class TestCase:
    name: str
    steps: tuple[TestStep, ...]
    description: str = ""
    origin: str = "seed"

    __test__ = False


@dataclass(frozen=True)
class TestSuite:
    name: str
    cases: tuple[TestCase, ...] = ()
    base_headers: dict[str, str] = field(default_factory=dict)

    __test__ = False

    def case(self, name: str) -> TestCase | None:
        for c in self.cases:
            if c.name == name:
                return c
        return None

    @property
    def case_names(self) -> list[str]:
        return [c.name for c in self.cases]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    pointer: str = ""
    line: int | None = None
    column: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "message": self.message,
            "pointer": self.pointer,
            "line": self.line,
            "column": self.column,
        }

    def __str__(self) -> str:
        where = f"{self.line}:{self.column}" if self.line is not None else "?"
        return f"[{self.code}] {where} {self.pointer} {self.message}"


class SuiteError(Exception):
    """Raised by :func:`parse_suite`; carries machine-readable diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))

    def to_json(self) -> str:
        return json.dumps([d.to_dict() for d in self.diagnostics], indent=2)


@dataclass(frozen=True)
class LintFinding:
    criterion: str
    case: str
    message: str
    step: int | None = None


# ---------------------------------------------------------------------------
# parsing


def _schema() -> dict:
    text = resources.files("restamp").joinpath("suite.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


_VALIDATOR = jsonschema.Draft202012Validator(_schema())


def _value_offsets(text: str) -> dict[str, int]:
    """Map JSON pointers to the character offset where each value starts.

    Only structural tokens are tracked; decoding itself is left to ``json``.
    """
    offsets: dict[str, int] = {}
    stack: list[list] = []  # [container_kind, pointer, next_index_or_key]
    i, n = 0, len(text)
    pending_key: str | None = None

    def current_pointer() -> str:
        if not stack:
            return ""
        kind, ptr, state = stack[-1]
        if kind == "array":
            return f"{ptr}/{state}"
        key = (pending_key or "").replace("~", "~0").replace("/", "~1")
        return f"{ptr}/{key}"

    expecting_key = False
    while i < n:
        ch = text[i]
        if ch in " \t\r\n,:":
            if ch == "," and stack and stack[-1][0] == "array":
                stack[-1][2] += 1
            if ch == "," and stack and stack[-1][0] == "object":
                expecting_key = True
            i += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            literal = text[i : j + 1]
            if expecting_key:
                try:
                    pending_key = json.loads(literal)
                except json.JSONDecodeError:
                    pending_key = literal.strip('"')
                expecting_key = False
            else:
                offsets.setdefault(current_pointer(), i)
            i = j + 1
            continue
        if ch in "{[":
            ptr = current_pointer()
            offsets.setdefault(ptr, i)
            stack.append(["object" if ch == "{" else "array", ptr, 0])
            expecting_key = ch == "{"
            i += 1
            continue
        if ch in "}]":
            stack.pop()
            expecting_key = False
            i += 1
            continue
        offsets.setdefault(current_pointer(), i)
        while i < n and text[i] not in ",}] \t\r\n":
            i += 1
    return offsets


def _line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _literal_map(raw: dict | None) -> dict[str, Literal]:
    return dict(raw or {})


def _build_step(raw: dict) -> TestStep:
    body = raw.get("body")
    return TestStep(
        method=raw["method"],
        path=raw["path"],
        path_params=_literal_map(raw.get("path_params")),
        query_params=_literal_map(raw.get("query_params")),
        form_params=_literal_map(raw.get("form_params")),
        headers=dict(raw.get("headers") or {}),
        body=Body(**body) if body else None,
        captures=dict(raw.get("captures") or {}),
        assertions=tuple(
            Assertion(kind=a["kind"], expected=a["expected"], selector=a.get("selector"))
            for a in raw.get("assertions") or ()
        ),
    )


def _build_suite(raw: dict) -> TestSuite:
    return TestSuite(
        name=raw["name"],
        base_headers=dict(raw.get("base_headers") or {}),
        cases=tuple(
            TestCase(
                name=c["name"],
                description=c.get("description", ""),
                origin=c.get("origin", "seed"),
                steps=tuple(_build_step(s) for s in c["steps"]),
            )
            for c in raw["cases"]
        ),
    )


def references(value: Any) -> list[str]:
    """Capture variables referenced as ``{{name}}`` inside a literal."""
    if isinstance(value, str):
        return _REF.findall(value)
    return []


def path_variables(path: str) -> list[str]:
    return [v for v in _PATH_VAR.findall(path) if not v.startswith("{")]


def _step_refs(step: TestStep) -> list[str]:
    refs: list[str] = []
    for mapping in (step.path_params, step.query_params, step.form_params, step.headers):
        for value in mapping.values():
            refs.extend(references(value))
    if step.body is not None and step.body.text is not None:
        refs.extend(references(step.body.text))
    refs.extend(references(step.path))
    return refs


def _check_assertion(a: Assertion) -> str | None:
    if (a.selector is not None) != (a.kind in BODY_KINDS):
        return f"{a.kind}: selector must be given iff the assertion inspects the body"
    if a.kind == "status_equals":
        if not isinstance(a.expected, int) or isinstance(a.expected, bool) or not 100 <= a.expected <= 599:
            return "status_equals expects an integer status in 100..599"
    elif a.kind == "status_class_equals":
        if not isinstance(a.expected, str) or not _STATUS_CLASS.match(a.expected):
            return "status_class_equals expects a class like '2xx'"
    elif a.kind == "header_contains":
        if not isinstance(a.expected, str) or ":" not in a.expected:
            return "header_contains expects 'Header-Name: substring'"
    elif a.kind == "content_type_equals":
        if not isinstance(a.expected, str):
            return "content_type_equals expects a media type string"
    elif a.kind == "body_field_exists":
        if not isinstance(a.expected, bool):
            return "body_field_exists expects true or false"
    return None


def validate_suite(suite: TestSuite, asset_dir: str | Path | None = None) -> list[Diagnostic]:
    """Semantic checks shared by the parser and programmatic construction."""
    diags: list[Diagnostic] = []
    seen: dict[str, int] = {}
    for ci, case in enumerate(suite.cases):
        cptr = f"/cases/{ci}"
        if not _NAME.match(case.name):
            diags.append(Diagnostic("invalid-name", f"case name {case.name!r} is not an identifier", cptr + "/name"))
        if case.name in seen:
            diags.append(
                Diagnostic(
                    "duplicate-name",
                    f"case name {case.name!r} already used by case {seen[case.name]}",
                    cptr + "/name",
                )
            )
        else:
            seen[case.name] = ci
        if case.origin not in ORIGINS:
            diags.append(Diagnostic("invalid-origin", f"unknown origin {case.origin!r}", cptr + "/origin"))
        if not case.steps:
            diags.append(Diagnostic("no-steps", "a case needs at least one step", cptr + "/steps"))
            continue
        if not case.steps[-1].assertions:
            diags.append(
                Diagnostic(
                    "missing-assertion",
                    "the last step must carry at least one assertion",
                    f"{cptr}/steps/{len(case.steps) - 1}",
                )
            )
        captured: set[str] = set()
        for si, step in enumerate(case.steps):
            sptr = f"{cptr}/steps/{si}"
            for var in path_variables(step.path):
                if var not in step.path_params and var not in captured:
                    diags.append(
                        Diagnostic(
                            "unbound-path-param",
                            f"path variable {{{var}}} has no binding in path_params or an earlier capture",
                            sptr + "/path",
                        )
                    )
            for ref in _step_refs(step):
                if ref not in captured:
                    diags.append(
                        Diagnostic("unbound-variable", f"{{{{{ref}}}}} is not captured by an earlier step", sptr)
                    )
            for ai, a in enumerate(step.assertions):
                problem = _check_assertion(a)
                if problem:
                    diags.append(Diagnostic("invalid-assertion", problem, f"{sptr}/assertions/{ai}"))
            if step.body is not None and step.body.file is not None:
                problem = _check_asset(step.body.file, asset_dir)
                if problem:
                    diags.append(Diagnostic("invalid-asset", problem, sptr + "/body/file"))
            captured.update(step.captures)
    return diags


def _check_asset(name: str, asset_dir: str | Path | None) -> str | None:
    rel = PurePosixPath(name)
    if rel.is_absolute() or ".." in rel.parts:
        return f"asset {name!r} must be a relative path inside the asset directory"
    if asset_dir is not None and not (Path(asset_dir) / rel).is_file():
        return f"asset {name!r} not found in {asset_dir}"
    return None


def parse_suite(text: str, asset_dir: str | Path | None = None) -> TestSuite:
    """Parse and validate a suite document.

    Raises:
        SuiteError: with one :class:`Diagnostic` per problem, each carrying a
            JSON pointer and (when locatable) a line/column.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SuiteError([Diagnostic("syntax", exc.msg, "", exc.lineno, exc.colno)]) from None
    offsets = _value_offsets(text)

    def located(d: Diagnostic) -> Diagnostic:
        ptr = d.pointer
        while ptr and ptr not in offsets:
            ptr = ptr.rsplit("/", 1)[0]
        offset = offsets.get(ptr, 0)
        line, col = _line_col(text, offset)
        return Diagnostic(d.code, d.message, d.pointer, line, col)

    errors = sorted(_VALIDATOR.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise SuiteError(
            [located(Diagnostic("schema", e.message, _pointer(e.absolute_path))) for e in errors]
        )
    suite = _build_suite(raw)
    diags = validate_suite(suite, asset_dir)
    if diags:
        raise SuiteError([located(d) for d in diags])
    return suite


def load_suite_file(path: str | Path, asset_dir: str | Path | None = None) -> TestSuite:
    path = Path(path)
    return parse_suite(path.read_text(encoding="utf-8"), asset_dir)


# ---------------------------------------------------------------------------
# serialization


def _step_dict(step: TestStep) -> dict[str, Any]:
    out: dict[str, Any] = {"method": step.method, "path": step.path}
    for key in ("path_params", "query_params", "form_params", "headers"):
        value = getattr(step, key)
        if value:
            out[key] = dict(value)
    if step.body is not None:
        body: dict[str, Any] = {"content_type": step.body.content_type}
        for key in ("text", "file", "field"):
            if getattr(step.body, key) is not None:
                body[key] = getattr(step.body, key)
        out["body"] = body
    if step.captures:
        out["captures"] = dict(step.captures)
    if step.assertions:
        out["assertions"] = [
            {"kind": a.kind, "expected": a.expected, **({"selector": a.selector} if a.selector is not None else {})}
            for a in step.assertions
        ]
    return out


def suite_to_dict(suite: TestSuite) -> dict[str, Any]:
    out: dict[str, Any] = {"format": FORMAT_TAG, "name": suite.name}
    if suite.base_headers:
        out["base_headers"] = dict(suite.base_headers)
    out["cases"] = [
        {
            "name": c.name,
            "description": c.description,
            "origin": c.origin,
            "steps": [_step_dict(s) for s in c.steps],
        }
        for c in suite.cases
    ]
    return out


def serialize_suite(suite: TestSuite) -> str:
    return json.dumps(suite_to_dict(suite), indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# lint

NAMING = "meaningful-naming"
STRUCTURE = "structural-coherence"
IDIOM = "idiomatic-correctness"

_BODYLESS = frozenset({"GET", "HEAD", "DELETE", "OPTIONS", "TRACE"})


def camel_words(identifier: str) -> list[str]:
    words: list[str] = []
    for chunk in identifier.split("_"):
        words.extend(re.findall(r"[A-Z]+(?![a-z])|[A-Z]?[a-z]+|\d+", chunk))
    return words


def lint_suite(suite: TestSuite) -> list[LintFinding]:
    """Mechanical readability checks; an empty list means clean."""
    findings: list[LintFinding] = []
    for case in suite.cases:
        words = camel_words(case.name)
        if not case.name.startswith("test") or len(words) < 2:
            findings.append(
                LintFinding(NAMING, case.name, "name should start with 'test' and contain at least two words")
            )
        if not case.description.strip():
            findings.append(LintFinding(NAMING, case.name, "case has no description"))
        for si, step in enumerate(case.steps):
            later_vars = {v for later in case.steps[si + 1 :] for v in path_variables(later.path)}
            for var in step.captures:
                # a capture named after a later path variable must use that name
                if len(var) < 3 and var not in later_vars:
                    findings.append(LintFinding(NAMING, case.name, f"capture name {var!r} is not descriptive", si))
            if si < len(case.steps) - 1 and step.assertions:
                findings.append(
                    LintFinding(STRUCTURE, case.name, "assertions appear before the final request (arrange-act-assert)", si)
                )
            if step.body is not None and step.method in _BODYLESS:
                findings.append(LintFinding(IDIOM, case.name, f"{step.method} request carries a body", si))
            for name, value in step.headers.items():
                if suite.base_headers.get(name) == value:
                    findings.append(LintFinding(IDIOM, case.name, f"header {name!r} repeats the suite base header", si))
            keys = [
                (a.kind, str(a.expected).split(":", 1)[0].lower() if a.kind == "header_contains" else a.selector)
                for a in step.assertions
            ]
            if len(keys) != len(set(keys)):
                findings.append(LintFinding(IDIOM, case.name, "duplicate assertion in step", si))
    return findings


# ---------------------------------------------------------------------------
# merge


def merge_suites(base: TestSuite, generated: TestSuite) -> TestSuite:
    """Concatenate cases; clashing names from ``generated`` get ``_2``, ``_3``..."""
    if not base.cases and not base.base_headers:
        return generated
    taken = {c.name for c in base.cases}
    cases = list(base.cases)
    for case in generated.cases:
        name = case.name
        k = 2
        while name in taken:
            name = f"{case.name}_{k}"
            k += 1
        taken.add(name)
        cases.append(case if name == case.name else TestCase(name, case.steps, case.description, case.origin))
    headers = dict(generated.base_headers)
    headers.update(base.base_headers)
    return TestSuite(name=base.name or generated.name, cases=tuple(cases), base_headers=headers)


def with_origin(suite: TestSuite, origin: str) -> TestSuite:
    return TestSuite(
        name=suite.name,
        base_headers=suite.base_headers,
        cases=tuple(TestCase(c.name, c.steps, c.description, origin) for c in suite.cases),
    )


def extract_suite_text(content: str) -> str:
    """Pull a suite document out of model output (fenced block or bare JSON)."""
    fenced = re.findall(r"```(?:json)?\s*\n(.*?)```", content, flags=re.DOTALL)
    if fenced:
        return max(fenced, key=len).strip()
    start = content.find("{")
    end = content.rfind("}")
    if start != -1 and end > start:
        return content[start : end + 1]
    return content.strip()
