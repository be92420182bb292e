"""Per-endpoint amplification over a whole spec."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..dsl import TestSuite, merge_suites
from ..llm import Gateway, UsageStats
from ..runner import ExecutionReport, InteractionLog, RunOptions, run_suite
from ..spec_index import SpecIndex, list_paths
from .agents import Environment, build_multi_agent, build_single_agent
from .engine import AgentState, Artifacts, Limits, run_workflow
from .prompts import PromptBook

log = logging.getLogger(__name__)

MODES = ("single", "multi")


@dataclass(frozen=True)
class EndpointTrace:
    endpoint: str
    nodes: tuple[str, ...]
    incomplete: bool = False
    error: str | None = None
    flags: tuple[str, ...] = ()
    cases: tuple[str, ...] = ()
    usage: UsageStats = field(default_factory=UsageStats)

    def to_dict(self) -> dict[str, Any]:
        return {
            "endpoint": self.endpoint,
            "nodes": list(self.nodes),
            "incomplete": self.incomplete,
            "error": self.error,
            "flags": list(self.flags),
            "cases": list(self.cases),
            "usage": self.usage.to_dict(),
        }


@dataclass(frozen=True)
class AmplificationResult:
    suite: TestSuite
    traces: tuple[EndpointTrace, ...]
    usage: UsageStats
    report: ExecutionReport
    log: InteractionLog

    @property
    def warnings(self) -> list[str]:
        out = []
        for t in self.traces:
            if t.error:
                out.append(f"{t.endpoint}: {t.error}")
            out.extend(f"{t.endpoint}: {flag}" for flag in t.flags)
        return out

    def traces_json(self) -> str:
        return json.dumps([t.to_dict() for t in self.traces], indent=2, sort_keys=True) + "\n"


def amplify(
    index: SpecIndex,
    seed: TestSuite,
    mode: str,
    target: str,
    gateway: Gateway,
    limits: Limits | None = None,
    *,
    asset_dir: str | Path | None = None,
    run_options: RunOptions | None = None,
    prompt_dir: str | Path | None = None,
) -> AmplificationResult:
    """Run the chosen workflow once per documented path and merge the outputs into ``seed``.

    A path whose run aborts or yields no parseable suite contributes nothing;
    the remaining paths still run.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    graph = build_single_agent() if mode == "single" else build_multi_agent()
    limits = limits or Limits()
    env = Environment(index, target, seed, asset_dir, run_options or RunOptions(), PromptBook(prompt_dir))
    merged = seed
    traces = []
    usage = UsageStats()
    for path in list_paths(index):
        state = run_workflow(graph, AgentState(artifacts=Artifacts(endpoint=path)), gateway, limits, env)
        usage = usage + state.usage
        added: tuple[str, ...] = ()
        if state.error is None and state.result is not None:
            before = len(merged.cases)
            merged = merge_suites(merged, state.result)
            added = tuple(c.name for c in merged.cases[before:])
        elif state.error is not None:
            log.warning("amplification of %s aborted: %s", path, state.error)
        traces.append(
            EndpointTrace(path, tuple(state.trace), state.incomplete, state.error, tuple(state.flags), added, state.usage)
        )
    report, interactions = run_suite(merged, target, env.run_options, index=index, asset_dir=asset_dir)
    return AmplificationResult(merged, tuple(traces), usage, report, interactions)
