"""Consolidated result tables over one or more amplification output directories.

Directories sharing a mode are averaged by arithmetic mean. Every percentage
is recomputed from the (mean) counts and rounded half-up to an integer. The
text rendering is produced from the JSON form, so both carry the same numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any

from .coverage import LABELS as METRIC_LABELS
from .coverage import METRICS
from .triage import BUG_EXPOSED, LABELS as TRIAGE_LABELS, TITLES

MANIFEST = "run.json"
REQUIRED_FILES = (MANIFEST, "suite.json", "execution_report.json", "triage.json", "coverage.json", "usage.json")
MODE_TITLES = {"single": "Single-Agent", "multi": "Multi-Agent"}
INITIAL = "Initial Coverage"


class ReportError(Exception):
    pass


def percent_half_up(part: Fraction | int, whole: Fraction | int) -> int:
    """Integer percent rounded half-up; an empty whole gives 0."""
    whole = Fraction(whole)
    if whole == 0:
        return 0
    return int((Fraction(part) * 100 / whole + Fraction(1, 2)) // 1)


def _number(value: Fraction, places: int = 2) -> int | float:
    if value.denominator == 1:
        return int(value)
    q = Decimal(value.numerator) / Decimal(value.denominator)
    return float(q.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class RunCounts:
    mode: str
    generated: int
    passed: int
    failed: int  # failed or errored generated cases
    labels: dict[str, int]
    initial: dict[str, tuple[int, int]]
    amplified: dict[str, tuple[int, int]]
    time_s: Fraction
    tokens: int
    cost: Fraction
    energy: Fraction


def _load(directory: Path, name: str) -> Any:
    return json.loads((directory / name).read_text(encoding="utf-8"))


def read_run(directory: str | Path) -> RunCounts:
    directory = Path(directory)
    missing = [f for f in REQUIRED_FILES if not (directory / f).is_file()]
    if missing:
        raise ReportError(f"{directory}: not an amplification output directory (missing {', '.join(missing)})")
    manifest = _load(directory, MANIFEST)
    suite = _load(directory, "suite.json")
    report = _load(directory, "execution_report.json")
    triage = _load(directory, "triage.json")
    coverage = _load(directory, "coverage.json")
    usage = _load(directory, "usage.json")["total"]
    generated = {c["name"] for c in suite["cases"] if c.get("origin", "seed") != "seed"}
    verdicts = {c["name"]: c["verdict"] for c in report["cases"] if c["name"] in generated}
    labels = {label: 0 for label in TRIAGE_LABELS}
    for name, entry in triage.items():
        if name in generated:
            labels[entry["label"]] += 1

    def metric_pairs(raw: dict) -> dict[str, tuple[int, int]]:
        return {m: (raw["metrics"][m]["covered"], raw["metrics"][m]["total"]) for m in METRICS}

    return RunCounts(
        mode=manifest["mode"],
        generated=len(generated),
        passed=sum(1 for v in verdicts.values() if v == "passed"),
        failed=sum(1 for v in verdicts.values() if v != "passed"),
        labels=labels,
        initial=metric_pairs(coverage["initial"]),
        amplified=metric_pairs(coverage["amplified"]),
        time_s=Fraction(str(usage["wall_time_s"])),
        tokens=int(usage["total_tokens"]),
        cost=Fraction(usage["cost_usd"]),
        energy=Fraction(usage["energy_wh"]),
    )


def _mean(values: list) -> Fraction:
    return sum((Fraction(v) for v in values), Fraction(0)) / len(values)


def _cell(count: Fraction, whole: Fraction | None) -> dict[str, Any]:
    out: dict[str, Any] = {"count": _number(count)}
    if whole is not None:
        out["percent"] = percent_half_up(count, whole)
    return out


def build_report(directories: list[str | Path]) -> dict[str, Any]:
    if not directories:
        raise ReportError("no output directories given")
    runs = [read_run(d) for d in directories]
    modes = [m for m in MODE_TITLES if any(r.mode == m for r in runs)]
    modes += sorted({r.mode for r in runs} - set(modes))
    groups = {m: [r for r in runs if r.mode == m] for m in modes}
    columns = [MODE_TITLES.get(m, m) for m in modes]

    t1: dict[str, dict[str, Any]] = {"Generated Tests": {}, "Successful Tests": {}, "Failed Tests": {}, "Bug-exposing Tests": {}}
    t2: dict[str, dict[str, Any]] = {"Failed Tests": {}}
    t2.update({TITLES[label]: {} for label in TRIAGE_LABELS})
    t3: dict[str, dict[str, Any]] = {METRIC_LABELS[m]: {} for m in METRICS}
    t4: dict[str, dict[str, Any]] = {"Time (s)": {}, "Tokens": {}, "Cost of Usage ($)": {}, "Energy Usage (Wh)": {}}

    first = runs[0]
    for m in METRICS:
        c, t = first.initial[m]
        t3[METRIC_LABELS[m]][INITIAL] = {"covered": c, "total": t, "percent": percent_half_up(c, t)}

    for mode, column in zip(modes, columns):
        group = groups[mode]
        generated = _mean([r.generated for r in group])
        failed = _mean([r.failed for r in group])
        t1["Generated Tests"][column] = _cell(generated, None)
        t1["Successful Tests"][column] = _cell(_mean([r.passed for r in group]), generated)
        t1["Failed Tests"][column] = _cell(failed, generated)
        t1["Bug-exposing Tests"][column] = _cell(_mean([r.labels[BUG_EXPOSED] for r in group]), generated)
        t2["Failed Tests"][column] = _cell(failed, None)
        for label in TRIAGE_LABELS:
            t2[TITLES[label]][column] = _cell(_mean([r.labels[label] for r in group]), failed)
        for m in METRICS:
            c = _mean([r.amplified[m][0] for r in group])
            t = _mean([r.amplified[m][1] for r in group])
            t3[METRIC_LABELS[m]][column] = {"covered": _number(c), "total": _number(t), "percent": percent_half_up(c, t)}
        t4["Time (s)"][column] = _number(_mean([r.time_s for r in group]))
        t4["Tokens"][column] = _number(_mean([r.tokens for r in group]))
        t4["Cost of Usage ($)"][column] = _number(_mean([r.cost for r in group]), 5)
        t4["Energy Usage (Wh)"][column] = _number(_mean([r.energy for r in group]))

    return {
        "runs": {MODE_TITLES.get(m, m): len(groups[m]) for m in modes},
        "columns": columns,
        "test_statistics": t1,
        "failed_test_categories": t2,
        "coverage": t3,
        "usage": t4,
    }


def _grid(title: str, header: list[str], rows: list[list[str]]) -> str:
    cells = [[""] + header] + rows
    widths = [max(len(r[i]) for r in cells) for i in range(len(header) + 1)]
    lines = [title]
    for k, row in enumerate(cells):
        lines.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(cell: dict[str, Any]) -> str:
    text = str(cell["count"])
    if "percent" in cell:
        text += f" ({cell['percent']}%)"
    return text


def render_report(report: dict[str, Any]) -> str:
    cols = report["columns"]
    parts = []
    t1 = report["test_statistics"]
    parts.append(_grid("Test Execution Statistics", cols, [[k] + [_fmt(v[c]) for c in cols] for k, v in t1.items()]))
    t2 = report["failed_test_categories"]
    parts.append(_grid("Categorization of Failed Tests", cols, [[k] + [_fmt(v[c]) for c in cols] for k, v in t2.items()]))
    t3 = report["coverage"]
    cov_cols = [INITIAL] + cols
    rows = [[k] + [f"{v[c]['percent']}% ({v[c]['covered']}/{v[c]['total']})" for c in cov_cols] for k, v in t3.items()]
    parts.append(_grid("Structural API Coverage", cov_cols, rows))
    t4 = report["usage"]
    parts.append(_grid("LLM Usage Statistics", cols, [[k] + [str(v[c]) for c in cols] for k, v in t4.items()]))
    runs = ", ".join(f"{k}: {n} run(s)" for k, n in report["runs"].items())
    return "\n\n".join(parts) + f"\n\nAveraged over {runs}\n"
