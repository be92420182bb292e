"""Sequential execution of a :class:`~restamp.dsl.TestSuite` against a live target.

Every request that receives a response appends one :class:`InteractionRecord`
to the run's :class:`InteractionLog`; that log is what coverage is computed
from.
"""

from __future__ import annotations

import hashlib
import json
import logging
import mimetypes
import time
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable
from urllib.parse import quote, urlencode, urlsplit

import requests

from .dsl import Assertion, TestCase, TestStep, TestSuite, path_variables, references
from .spec_index import SpecIndex

log = logging.getLogger(__name__)

UNMATCHED = "unmatched"
LOG_FORMAT = "restamp-interactions/1"


# ---------------------------------------------------------------------------
# path matching


def _segments(path: str) -> list[str]:
    path = path.split("?", 1)[0].split("#", 1)[0]
    stripped = path.strip("/")
    return stripped.split("/") if stripped else []


def match_path(index: SpecIndex, method: str, url: str) -> str:
    """Attribute a concrete URL to a documented path template.

    ``{x}`` segments match exactly one non-empty segment. With several
    candidates the template with the most literal segments wins, then the
    one declared first. ``method`` does not take part in matching; an
    undocumented method on a matched path is the caller's concern.
    """
    del method
    if "://" in url:
        url = urlsplit(url).path
    concrete = _segments(url)
    best: tuple[int, int] | None = None
    best_template = UNMATCHED
    for order, entry in enumerate(index.paths):
        tmpl = _segments(entry.template)
        if len(tmpl) != len(concrete):
            continue
        literals = 0
        for t, c in zip(tmpl, concrete):
            if t.startswith("{") and t.endswith("}"):
                if not c:
                    break
            elif t != c:
                break
            else:
                literals += 1
        else:
            key = (-literals, order)
            if best is None or key < best:
                best = key
                best_template = entry.template
    return best_template


def template_bindings(template: str, url: str) -> dict[str, str]:
    """Values bound to each ``{x}`` of ``template`` by ``url`` (assumes a match)."""
    out = {}
    for t, c in zip(_segments(template), _segments(url)):
        if t.startswith("{") and t.endswith("}"):
            out[t[1:-1]] = c
    return out


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class InteractionRecord:
    seq: int
    method: str
    template: str
    url: str
    status: int
    request_content_type: str | None = None
    response_content_type: str | None = None
    params: dict[str, list[str]] = field(default_factory=dict)
    body_digest: str = ""
    case: str | None = None
    step: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> InteractionRecord:
        return cls(
            seq=int(raw["seq"]),
            method=raw["method"],
            template=raw.get("template", UNMATCHED),
            url=raw["url"],
            status=int(raw["status"]),
            request_content_type=raw.get("request_content_type"),
            response_content_type=raw.get("response_content_type"),
            params={k: list(v) for k, v in (raw.get("params") or {}).items()},
            body_digest=raw.get("body_digest", ""),
            case=raw.get("case"),
            step=raw.get("step"),
        )


@dataclass
class InteractionLog:
    target: str
    records: list[InteractionRecord] = field(default_factory=list)

    def append(self, record: InteractionRecord) -> None:
        if self.records and record.seq <= self.records[-1].seq:
            raise ValueError("sequence numbers must strictly increase")
        if not 100 <= record.status <= 599:
            raise ValueError(f"status {record.status} outside 100..599")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"format": LOG_FORMAT, "target": self.target}, sort_keys=True)]
        lines.extend(json.dumps(r.to_dict(), sort_keys=True) for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> InteractionLog:
        target = ""
        records = []
        for line in text.splitlines():
            if not line.strip():
                continue
            raw = json.loads(line)
            if "seq" not in raw:
                target = raw.get("target", target)
                continue
            records.append(InteractionRecord.from_dict(raw))
        return cls(target=target, records=records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> InteractionLog:
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class AssertionFailure:
    step: int
    kind: str
    expected: Any
    actual: Any
    selector: str | None = None


@dataclass(frozen=True)
class CaseResult:
    name: str
    verdict: str  # passed | failed | errored
    failures: tuple[AssertionFailure, ...] = ()
    fault: str | None = None
    step: int | None = None
    duration_ms: float = 0.0


@dataclass(frozen=True)
class ExecutionReport:
    results: tuple[CaseResult, ...]

    @property
    def totals(self) -> dict[str, int]:
        counts = {"passed": 0, "failed": 0, "errored": 0}
        for r in self.results:
            counts[r.verdict] += 1
        return counts

    def result(self, name: str) -> CaseResult | None:
        for r in self.results:
            if r.name == name:
                return r
        return None

    def to_dict(self, include_timings: bool = False) -> dict[str, Any]:
        cases = []
        for r in self.results:
            item: dict[str, Any] = {"name": r.name, "verdict": r.verdict}
            if r.step is not None:
                item["step"] = r.step
            if r.failures:
                item["failures"] = [asdict(f) for f in r.failures]
            if r.fault:
                item["fault"] = r.fault
            if include_timings:
                item["duration_ms"] = round(r.duration_ms, 3)
            cases.append(item)
        return {"totals": self.totals, "cases": cases}

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ExecutionReport:
        return cls(
            results=tuple(
                CaseResult(
                    name=c["name"],
                    verdict=c["verdict"],
                    failures=tuple(AssertionFailure(**f) for f in c.get("failures", ())),
                    fault=c.get("fault"),
                    step=c.get("step"),
                    duration_ms=c.get("duration_ms", 0.0),
                )
                for c in raw["cases"]
            )
        )

    def render(self) -> str:
        """Compact, timing-free text summary (fed back to agents)."""
        t = self.totals
        lines = [f"{len(self.results)} cases: {t['passed']} passed, {t['failed']} failed, {t['errored']} errored"]
        for r in self.results:
            if r.verdict == "passed":
                lines.append(f"PASS {r.name}")
            elif r.verdict == "failed":
                details = "; ".join(
                    f"step {f.step} {f.kind}"
                    + (f"[{f.selector}]" if f.selector else "")
                    + f" expected {json.dumps(f.expected)} got {json.dumps(f.actual)}"
                    for f in r.failures
                )
                lines.append(f"FAIL {r.name}: {details}")
            else:
                lines.append(f"ERROR {r.name}: step {r.step}: {r.fault}")
        return "\n".join(lines)


@dataclass(frozen=True)
class RunOptions:
    timeout: float = 10.0
    retries: int = 0


class StepFault(Exception):
    """A per-case fault that turns the case verdict into ``errored``."""


# ---------------------------------------------------------------------------
# body inspection

_MISSING = object()


def _media_type(value: str | None) -> str | None:
    if not value:
        return None
    return value.split(";", 1)[0].strip().lower() or None


def _is_json(ct: str | None) -> bool:
    return bool(ct) and (ct == "application/json" or ct.endswith("+json"))


def _is_xml(ct: str | None) -> bool:
    return bool(ct) and (ct in ("application/xml", "text/xml") or ct.endswith("+xml"))


class ParsedBody:
    def __init__(self, content: bytes, content_type: str | None):
        self.content_type = content_type
        self.raw = content.decode("utf-8", errors="replace")
        self.kind = "text"
        self.value: Any = None
        if not content.strip():
            self.kind = "empty"
        elif _is_json(content_type):
            try:
                self.value = json.loads(self.raw)
            except json.JSONDecodeError as exc:
                raise StepFault(f"malformed JSON body: {exc.msg}") from None
            self.kind = "json"
        elif _is_xml(content_type):
            try:
                self.value = ET.fromstring(content)
            except ET.ParseError as exc:
                raise StepFault(f"malformed XML body: {exc}") from None
            self.kind = "xml"

    def select(self, selector: str) -> Any:
        parts = [p for p in selector.split(".") if p] if selector not in ("", ".", "$") else []
        if self.kind == "empty":
            return _MISSING
        if self.kind == "text":
            return self.raw if not parts else _MISSING
        if self.kind == "json":
            node = self.value
            for part in parts:
                if isinstance(node, list) and part.lstrip("-").isdigit():
                    i = int(part)
                    if -len(node) <= i < len(node):
                        node = node[i]
                        continue
                    return _MISSING
                if isinstance(node, dict) and part in node:
                    node = node[part]
                    continue
                return _MISSING
            return node
        node = self.value
        for part in parts:
            children = list(node)
            if part.isdigit():
                if int(part) < len(children):
                    node = children[int(part)]
                    continue
                return _MISSING
            found = node.find(part)
            if found is None:
                return _MISSING
            node = found
        if len(node):
            return ET.tostring(node, encoding="unicode")
        return node.text or ""


def _xml_equal(actual: Any, expected: Any) -> bool:
    if isinstance(expected, bool):
        return str(actual).lower() == str(expected).lower()
    return str(actual) == str(expected)


def _check(a: Assertion, resp: requests.Response, body: ParsedBody, step_no: int) -> AssertionFailure | None:
    def fail(actual: Any) -> AssertionFailure:
        return AssertionFailure(step=step_no, kind=a.kind, expected=a.expected, actual=actual, selector=a.selector)

    if a.kind == "status_equals":
        return None if resp.status_code == a.expected else fail(resp.status_code)
    if a.kind == "status_class_equals":
        actual = f"{resp.status_code // 100}xx"
        return None if actual == a.expected else fail(actual)
    if a.kind == "content_type_equals":
        actual = _media_type(resp.headers.get("Content-Type"))
        return None if actual == _media_type(str(a.expected)) else fail(actual)
    if a.kind == "header_contains":
        name, _, needle = str(a.expected).partition(":")
        value = resp.headers.get(name.strip())
        return None if value is not None and needle.strip() in value else fail(value)
    found = body.select(a.selector or "")
    if a.kind == "body_field_exists":
        exists = found is not _MISSING
        return None if exists == a.expected else fail(exists)
    if found is _MISSING:
        return fail(None)
    if body.kind == "xml":
        return None if _xml_equal(found, a.expected) else fail(found)
    if isinstance(found, bool) != isinstance(a.expected, bool):
        return fail(found)
    return None if found == a.expected else fail(found)


# ---------------------------------------------------------------------------
# execution


def _substitute(value: Any, variables: dict[str, Any]) -> Any:
    if not isinstance(value, str):
        return value
    refs = references(value)
    if not refs:
        return value
    for ref in refs:
        if ref not in variables:
            raise StepFault(f"variable {{{{{ref}}}}} was never captured")
    stripped = value.strip()
    if len(refs) == 1 and stripped.startswith("{{") and stripped.endswith("}}"):
        return variables[refs[0]]
    out = value
    for ref in refs:
        out = out.replace("{{" + ref + "}}", str(variables[ref])).replace("{{ " + ref + " }}", str(variables[ref]))
    return out


def _text(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    return str(value)


def _concrete_path(step: TestStep, variables: dict[str, Any]) -> str:
    path = _substitute(step.path, variables) if "{{" in step.path else step.path
    for var in path_variables(step.path):
        if var in step.path_params:
            value = _substitute(step.path_params[var], variables)
        elif var in variables:
            value = variables[var]
        else:
            raise StepFault(f"path variable {{{var}}} is unbound")
        path = path.replace("{" + var + "}", quote(_text(value), safe=""))
    return path


class _Executor:
    def __init__(self, suite: TestSuite, target: str, index: SpecIndex | None, options: RunOptions, asset_dir):
        self.suite = suite
        self.target = target.rstrip("/")
        self.index = index
        self.options = options
        self.asset_dir = Path(asset_dir) if asset_dir is not None else None
        self.log = InteractionLog(target=target)
        self.session = requests.Session()
        self.seq = 0

    def _send(self, method: str, url: str, **kwargs) -> requests.Response:
        attempts = self.options.retries + 1
        for attempt in range(attempts):
            try:
                return self.session.request(method, url, timeout=self.options.timeout, allow_redirects=False, **kwargs)
            except requests.Timeout:
                if attempt + 1 == attempts:
                    raise StepFault(f"timeout after {self.options.timeout}s") from None
            except requests.ConnectionError as exc:
                if attempt + 1 == attempts:
                    raise StepFault(f"connection fault: {type(exc).__name__}") from None
        raise AssertionError("unreachable")

    def run_step(self, case: TestCase, step_no: int, step: TestStep, variables: dict[str, Any]):
        path = _concrete_path(step, variables)
        query = {k: _text(_substitute(v, variables)) for k, v in step.query_params.items()}
        headers = dict(self.suite.base_headers)
        headers.update({k: _text(_substitute(v, variables)) for k, v in step.headers.items()})
        form = {k: _text(_substitute(v, variables)) for k, v in step.form_params.items()}
        kwargs: dict[str, Any] = {}
        request_ct = None
        form_names = list(step.form_params)
        if step.body is not None and step.body.file is not None:
            if self.asset_dir is None:
                raise StepFault(f"asset {step.body.file!r} referenced but no asset directory configured")
            asset = self.asset_dir / step.body.file
            if not asset.is_file():
                raise StepFault(f"asset {step.body.file!r} not found")
            field_name = step.body.field or "file"
            form_names.append(field_name)
            ctype = mimetypes.guess_type(asset.name)[0] or "application/octet-stream"
            if _media_type(step.body.content_type) == "multipart/form-data":
                kwargs["files"] = {field_name: (asset.name, asset.read_bytes(), ctype)}
                kwargs["data"] = form
            else:
                kwargs["data"] = asset.read_bytes()
                headers["Content-Type"] = step.body.content_type
            request_ct = _media_type(step.body.content_type)
        elif step.body is not None:
            text = _substitute(step.body.text or "", variables)
            kwargs["data"] = _text(text).encode("utf-8")
            headers["Content-Type"] = step.body.content_type
            request_ct = _media_type(step.body.content_type)
        elif form:
            kwargs["data"] = urlencode(form)
            headers["Content-Type"] = "application/x-www-form-urlencoded"
            request_ct = "application/x-www-form-urlencoded"

        url = self.target + path
        if query:
            url += "?" + urlencode(query)
        resp = self._send(step.method, url, params=None, headers=headers, **kwargs)
        resp_ct = _media_type(resp.headers.get("Content-Type"))
        self.seq += 1
        request_target = path + (("?" + urlencode(query)) if query else "")
        template = match_path(self.index, step.method, path) if self.index is not None else UNMATCHED
        params = {
            "path": path_variables(step.path),
            "query": list(step.query_params),
            "header": list(headers),
            "form": form_names,
        }
        self.log.append(
            InteractionRecord(
                seq=self.seq,
                method=step.method,
                template=template,
                url=request_target,
                status=resp.status_code,
                request_content_type=request_ct,
                response_content_type=resp_ct,
                params={k: v for k, v in params.items() if v},
                body_digest=hashlib.sha256(resp.content).hexdigest(),
                case=case.name,
                step=step_no,
            )
        )
        return resp

    def run_case(self, case: TestCase) -> CaseResult:
        started = time.perf_counter()
        variables: dict[str, Any] = {}
        step_no = 0

        def elapsed() -> float:
            return (time.perf_counter() - started) * 1000.0

        try:
            for step_no, step in enumerate(case.steps):
                resp = self.run_step(case, step_no, step, variables)
                needs_body = any(a.kind in ("body_field_equals", "body_field_exists") for a in step.assertions)
                body = ParsedBody(resp.content, _media_type(resp.headers.get("Content-Type"))) if (
                    needs_body or step.captures
                ) else ParsedBody(b"", None)
                failures = [f for a in step.assertions if (f := _check(a, resp, body, step_no)) is not None]
                if failures:
                    return CaseResult(case.name, "failed", tuple(failures), step=step_no, duration_ms=elapsed())
                for var, selector in step.captures.items():
                    if selector.lower().startswith("header:"):
                        value = resp.headers.get(selector.split(":", 1)[1].strip())
                        if value is None:
                            raise StepFault(f"capture {var!r}: header {selector[7:]!r} absent")
                    else:
                        value = body.select(selector)
                        if value is _MISSING:
                            raise StepFault(f"capture {var!r}: selector {selector!r} did not resolve")
                    variables[var] = value
        except StepFault as exc:
            return CaseResult(case.name, "errored", fault=str(exc), step=step_no, duration_ms=elapsed())
        return CaseResult(case.name, "passed", duration_ms=elapsed())


def run_suite(
    suite: TestSuite,
    target: str,
    options: RunOptions | None = None,
    *,
    index: SpecIndex | None = None,
    asset_dir: str | Path | None = None,
) -> tuple[ExecutionReport, InteractionLog]:
    """Run every case in order; per-case faults never abort the run."""
    executor = _Executor(suite, target, index, options or RunOptions(), asset_dir)
    results = []
    try:
        for case in suite.cases:
            results.append(executor.run_case(case))
    finally:
        executor.session.close()
    return ExecutionReport(tuple(results)), executor.log


def merge_logs(logs: Iterable[InteractionLog]) -> InteractionLog:
    """Concatenate logs, renumbering so sequence numbers stay increasing."""
    logs = list(logs)
    merged = InteractionLog(target=logs[0].target if logs else "")
    seq = 0
    for lg in logs:
        for r in lg.records:
            seq += 1
            merged.records.append(InteractionRecord(**{**r.to_dict(), "seq": seq}))
    return merged
