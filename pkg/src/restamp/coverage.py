"""Structural API coverage over interaction logs.

Seven ratios are computed, each at pair granularity per operation:

- path:          documented templates hit
- operation:     documented (template, method) pairs hit
- status_class:  documented (operation, status class) pairs observed
- status:        documented (operation, status) pairs observed
- response_type: documented (operation, response media type) pairs observed
- request_type:  documented (operation, request media type) pairs exercised
- parameter:     documented (operation, parameter) pairs supplied

A record whose path, method or status is not documented is an
*undocumented observation*: it is listed in the report and credits nothing.
An undocumented response or request media type on an otherwise documented
record is listed too, while the record's other facts still count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .runner import UNMATCHED, InteractionLog, InteractionRecord, match_path
from .spec_index import SpecIndex

METRICS = (
    "path",
    "operation",
    "status_class",
    "status",
    "response_type",
    "request_type",
    "parameter",
)

LABELS = {
    "path": "Path",
    "operation": "Operation",
    "status_class": "Status Class",
    "status": "Status",
    "response_type": "Response Type",
    "request_type": "Request Type",
    "parameter": "Parameter",
}


class CoverageMismatchError(ValueError):
    """Reports being compared were computed over different specs."""


@dataclass(frozen=True)
class MetricCount:
    covered: int
    total: int

    @property
    def vacuous(self) -> bool:
        return self.total == 0

    @property
    def ratio(self) -> float:
        return 1.0 if self.total == 0 else self.covered / self.total


@dataclass(frozen=True)
class Undocumented:
    method: str
    template: str
    kind: str  # path | operation | status | response_type | request_type
    value: str

    def to_dict(self) -> dict[str, str]:
        return {"method": self.method, "template": self.template, "kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class CoverageReport:
    metrics: dict[str, MetricCount]
    undocumented: tuple[Undocumented, ...] = ()
    spec_title: str = ""

    def ratio(self, metric: str) -> float:
        return self.metrics[metric].ratio

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_title,
            "metrics": {
                name: {
                    "covered": m.covered,
                    "total": m.total,
                    "ratio": m.ratio,
                    "vacuous": m.vacuous,
                }
                for name, m in self.metrics.items()
            },
            "undocumented": [u.to_dict() for u in self.undocumented],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> CoverageReport:
        return cls(
            metrics={k: MetricCount(v["covered"], v["total"]) for k, v in raw["metrics"].items()},
            undocumented=tuple(Undocumented(**u) for u in raw.get("undocumented", ())),
            spec_title=raw.get("spec", ""),
        )

    def render(self) -> str:
        return render_table({"Coverage": self})


def percent(covered: int, total: int) -> int:
    """Ratio as an integer percent, rounded half-up (vacuous = 100)."""
    if total == 0:
        return 100
    return (200 * covered + total) // (2 * total)


def render_table(columns: dict[str, CoverageReport]) -> str:
    """Text table with one row per metric and one column per report."""
    names = list(columns)
    cells = [["Metric"] + names]
    for metric in METRICS:
        row = [LABELS[metric]]
        for name in names:
            m = columns[name].metrics[metric]
            mark = "*" if m.vacuous else ""
            row.append(f"{percent(m.covered, m.total)}% ({m.covered}/{m.total}){mark}")
        cells.append(row)
    widths = [max(len(r[i]) for r in cells) for i in range(len(cells[0]))]
    lines = []
    for k, row in enumerate(cells):
        lines.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    if any(m.vacuous for rep in columns.values() for m in rep.metrics.values()):
        lines.append("* vacuous: nothing documented for this metric")
    return "\n".join(lines) + "\n"


def documented_targets(index: SpecIndex) -> dict[str, set]:
    targets: dict[str, set] = {m: set() for m in METRICS}
    for entry in index.paths:
        targets["path"].add(entry.template)
        for method, op in entry.operations.items():
            key = (entry.template, method)
            targets["operation"].add(key)
            for status, resp in op.responses.items():
                targets["status"].add((key, status))
                targets["status_class"].add((key, status // 100))
                for ct in resp.content_types:
                    targets["response_type"].add((key, ct))
            for ct in op.request_types:
                targets["request_type"].add((key, ct))
            for p in op.parameters:
                targets["parameter"].add((key, p.location, p.name))
    return targets


def _observe(index: SpecIndex, rec: InteractionRecord, hits: dict[str, set], undocumented: list[Undocumented]) -> None:
    template = match_path(index, rec.method, rec.url)
    if template == UNMATCHED:
        undocumented.append(Undocumented(rec.method, UNMATCHED, "path", rec.url.split("?", 1)[0]))
        return
    op = index.operation(template, rec.method)
    if op is None:
        undocumented.append(Undocumented(rec.method, template, "operation", rec.method))
        return
    resp = op.responses.get(rec.status)
    if resp is None:
        undocumented.append(Undocumented(rec.method, template, "status", str(rec.status)))
        return
    key = (template, rec.method.upper())
    hits["path"].add(template)
    hits["operation"].add(key)
    hits["status"].add((key, rec.status))
    hits["status_class"].add((key, rec.status // 100))
    if rec.response_content_type:
        if rec.response_content_type in resp.content_types:
            hits["response_type"].add((key, rec.response_content_type))
        else:
            undocumented.append(Undocumented(rec.method, template, "response_type", rec.response_content_type))
    if rec.request_content_type:
        if rec.request_content_type in op.request_types:
            hits["request_type"].add((key, rec.request_content_type))
        else:
            undocumented.append(Undocumented(rec.method, template, "request_type", rec.request_content_type))
    supplied = rec.params
    headers = {h.lower() for h in supplied.get("header", ())}
    for p in op.parameters:
        if p.location == "path":
            # a matched template binds every path variable to a non-empty segment
            hit = True
        elif p.location == "header":
            hit = p.name.lower() in headers
        else:
            hit = p.name in supplied.get(p.location, ())
        if hit:
            hits["parameter"].add((key, p.location, p.name))


def compute_coverage(index: SpecIndex, logs: InteractionLog | Iterable[InteractionLog]) -> CoverageReport:
    if isinstance(logs, InteractionLog):
        logs = [logs]
    targets = documented_targets(index)
    hits: dict[str, set] = {m: set() for m in METRICS}
    undocumented: list[Undocumented] = []
    for lg in logs:
        for rec in lg.records:
            _observe(index, rec, hits, undocumented)
    metrics = {
        m: MetricCount(covered=len(hits[m] & targets[m]), total=len(targets[m])) for m in METRICS
    }
    # stable, duplicate-free listing
    unique = tuple(dict.fromkeys(undocumented))
    return CoverageReport(metrics=metrics, undocumented=unique, spec_title=index.title)


def diff_coverage(before: CoverageReport, after: CoverageReport) -> dict[str, float]:
    """Per-metric ``after - before`` ratio deltas.

    Raises:
        CoverageMismatchError: the reports do not share denominators.
    """
    for m in METRICS:
        if before.metrics[m].total != after.metrics[m].total or before.spec_title != after.spec_title:
            raise CoverageMismatchError(
                f"metric {m!r}: denominators {before.metrics[m].total} vs {after.metrics[m].total}"
            )
    return {m: after.metrics[m].ratio - before.metrics[m].ratio for m in METRICS}
