"""Rule-based classification of failed and errored test cases.

Rules are tried in a fixed order and the first that fires wins:

1. the case errored: ``runtime_error``;
2. a failing assertion checks something the operation does not document
   (or the step's path is not documented at all): ``semantically_incorrect``;
3. the failing step names a resource identifier that nothing earlier in the
   suite created: ``missing_information``;
4. otherwise the live API contradicts its documentation: ``bug_exposed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .dsl import Assertion, TestCase, TestStep, TestSuite, references
from .runner import UNMATCHED, AssertionFailure, ExecutionReport, match_path, template_bindings
from .spec_index import BODY_METHODS, OperationEntry, SpecIndex, template_variables

BUG_EXPOSED = "bug_exposed"
MISSING_INFORMATION = "missing_information"
SEMANTICALLY_INCORRECT = "semantically_incorrect"
RUNTIME_ERROR = "runtime_error"
LABELS = (BUG_EXPOSED, MISSING_INFORMATION, SEMANTICALLY_INCORRECT, RUNTIME_ERROR)
TITLES = {
    BUG_EXPOSED: "API Bug Exposed",
    MISSING_INFORMATION: "Missing Information",
    SEMANTICALLY_INCORRECT: "Semantically Incorrect",
    RUNTIME_ERROR: "Runtime/Syntactical Error",
}


class TriageError(ValueError):
    pass


@dataclass(frozen=True)
class TriageLabel:
    label: str
    rationale: str
    overridden: bool = False

    def __post_init__(self):
        if self.label not in LABELS:
            raise TriageError(f"unknown label {self.label!r}; expected one of {LABELS}")

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "rationale": self.rationale, "overridden": self.overridden}

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> TriageLabel:
        return cls(raw["label"], raw.get("rationale", ""), bool(raw.get("overridden", False)))


def _first_field(selector: str) -> str | None:
    for part in selector.split("."):
        if part and not part.isdigit():
            return part
    return None


def _undocumented(a: Assertion, op: OperationEntry) -> str | None:
    """Why assertion ``a`` checks something ``op`` does not document, or None."""
    if a.kind == "status_equals":
        if a.expected not in op.responses:
            return f"expected status {a.expected} is not documented for the operation"
    elif a.kind == "status_class_equals":
        classes = {f"{s // 100}xx" for s in op.responses}
        if a.expected not in classes:
            return f"expected status class {a.expected} is not documented for the operation"
    elif a.kind == "content_type_equals":
        if str(a.expected).split(";")[0].strip().lower() not in op.response_types:
            return f"expected content type {a.expected} is not documented for the operation"
    elif a.kind in ("body_field_equals", "body_field_exists"):
        fields = set().union(*(r.fields for r in op.responses.values())) if op.responses else set()
        name = _first_field(a.selector or "")
        if name is not None and name not in fields:
            return f"body field {name!r} is not documented in any response schema"
    elif a.kind == "header_contains":
        header = str(a.expected).split(":", 1)[0].strip().lower()
        if header != "content-type":
            return f"response header {header!r} is not documented"
    return None


def _failing_assertions(step: TestStep, failures: tuple[AssertionFailure, ...]) -> list[Assertion]:
    out = []
    for f in failures:
        for a in step.assertions:
            if a.kind == f.kind and a.expected == f.expected and a.selector == f.selector and a not in out:
                out.append(a)
    return out


def _identifier_literals(step: TestStep, template: str) -> list[tuple[str, str]]:
    """(parameter, literal) pairs naming resources: path variables and ``*id`` query params."""
    out = []
    for var in template_variables(step.path):
        if var in step.path_params and not references(step.path_params[var]):
            out.append((var, str(step.path_params[var])))
    # segments written straight into the step path bind the matched template's variables
    for var, segment in template_bindings(template, step.path).items():
        if not template_variables(segment) and not references(segment):
            out.append((var, segment))
    for name, value in step.query_params.items():
        if name.lower().endswith("id") and not references(value):
            out.append((name, str(value)))
    return out


def _provisioned_values(earlier: list[TestStep]) -> set[str]:
    """Literals asserted in the response body of earlier successful create steps."""
    values = set()
    for step in earlier:
        if step.method.upper() not in BODY_METHODS:
            continue
        for a in step.assertions:
            if a.kind == "body_field_equals":
                values.add(str(a.expected))
    return values


def _earlier_successful_steps(suite: TestSuite, report: ExecutionReport, case: TestCase, failing: int) -> list[TestStep]:
    steps: list[TestStep] = []
    for other in suite.cases:
        if other.name == case.name:
            steps.extend(case.steps[:failing])
            break
        result = report.result(other.name)
        if result is None or result.verdict == "passed":
            steps.extend(other.steps)
        elif result.step is not None:
            steps.extend(other.steps[: result.step])
    return steps


def _classify_failed(case: TestCase, result, suite: TestSuite, report: ExecutionReport, index: SpecIndex) -> TriageLabel:
    step_no = result.step if result.step is not None else len(case.steps) - 1
    if not 0 <= step_no < len(case.steps):
        raise TriageError(f"case {case.name!r}: failing step {step_no} out of range")
    step = case.steps[step_no]
    template = match_path(index, step.method, step.path)
    if template == UNMATCHED:
        return TriageLabel(SEMANTICALLY_INCORRECT, f"rule 2: unmatched path {step.path!r} at step {step_no}")
    op = index.operation(template, step.method)
    if op is None:
        return TriageLabel(
            SEMANTICALLY_INCORRECT, f"rule 2: unmatched path: {step.method} is not documented on {template}"
        )
    failing = _failing_assertions(step, result.failures)
    for a in failing:
        reason = _undocumented(a, op)
        if reason is not None:
            return TriageLabel(SEMANTICALLY_INCORRECT, f"rule 2: {reason} ({step.method} {template})")
    provisioned = _provisioned_values(_earlier_successful_steps(suite, report, case, step_no))
    for name, literal in _identifier_literals(step, template):
        if literal not in provisioned:
            return TriageLabel(
                MISSING_INFORMATION,
                f"rule 3: identifier {name}={literal} was never created earlier in the suite",
            )
    if failing:
        a = failing[0]
        f = next(x for x in result.failures if (x.kind, x.expected, x.selector) == (a.kind, a.expected, a.selector))
        detail = f"documented expectation {a.kind} {json.dumps(a.expected)} contradicted by {json.dumps(f.actual)}"
    else:
        detail = "documented behaviour contradicted by the live response"
    return TriageLabel(BUG_EXPOSED, f"rule 4: {detail} ({step.method} {template})")


def classify(report: ExecutionReport, suite: TestSuite, index: SpecIndex) -> dict[str, TriageLabel]:
    """Label every failed or errored case; passed cases get no label."""
    labels: dict[str, TriageLabel] = {}
    for result in report.results:
        if result.verdict == "passed":
            continue
        case = suite.case(result.name)
        if case is None:
            raise TriageError(f"report names case {result.name!r} which the suite does not contain")
        if result.verdict == "errored":
            labels[result.name] = TriageLabel(RUNTIME_ERROR, f"rule 1: case errored: {result.fault}")
        else:
            labels[result.name] = _classify_failed(case, result, suite, report, index)
    return labels


def apply_overrides(labels: dict[str, TriageLabel], overrides: dict[str, str]) -> dict[str, TriageLabel]:
    unknown = sorted(set(overrides) - set(labels))
    if unknown:
        raise TriageError(f"overrides name unknown or unlabeled cases: {unknown}")
    out = dict(labels)
    for name, label in overrides.items():
        if label not in LABELS:
            raise TriageError(f"override for {name!r} uses unknown label {label!r}")
        out[name] = TriageLabel(label, f"manual override (was {labels[name].label})", True)
    return out


def load_overrides(path: str | Path) -> dict[str, str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or not all(isinstance(v, str) for v in raw.values()):
        raise TriageError("overrides file must map case names to label strings")
    return raw


def counts(labels: dict[str, TriageLabel]) -> dict[str, int]:
    out = {label: 0 for label in LABELS}
    for t in labels.values():
        out[t.label] += 1
    return out


def labels_to_json(labels: dict[str, TriageLabel]) -> str:
    return json.dumps({k: v.to_dict() for k, v in sorted(labels.items())}, indent=2) + "\n"


def labels_from_json(text: str) -> dict[str, TriageLabel]:
    return {k: TriageLabel.from_dict(v) for k, v in json.loads(text).items()}
