"""The single-agent ReAct loop and the multi-agent plan-then-generate pipeline."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..dsl import SuiteError, TestSuite, extract_suite_text, parse_suite, serialize_suite, with_origin
from ..llm import ChatMessage, ToolSpec
from ..runner import RunOptions, run_suite
from ..spec_index import SpecIndex, retrieve
from .engine import AgentState, PlanItem, RunContext, WorkflowGraph
from .prompts import PromptBook

TARGET_LABEL = "<target>"
FOCUSES = ("header", "parameter", "value")

RETRIEVER = ToolSpec(
    "openapi_retriever",
    "Look up the OpenAPI documentation. Pass an endpoint path starting with '/' or a definition name.",
    {
        "type": "object",
        "properties": {"query": {"type": "string", "description": "endpoint path or definition name"}},
        "required": ["query"],
    },
)
EXECUTOR = ToolSpec(
    "local_executor",
    "Parse and run a complete suite document against the API; returns parse diagnostics or per-case results.",
    {
        "type": "object",
        "properties": {"suite": {"type": "string", "description": "the complete suite document (JSON)"}},
        "required": ["suite"],
    },
)


@dataclass
class Environment:
    """Everything node functions need besides the gateway."""

    index: SpecIndex
    target: str
    seed: TestSuite
    asset_dir: str | Path | None = None
    run_options: RunOptions = field(default_factory=RunOptions)
    prompts: PromptBook = field(default_factory=PromptBook)

    @property
    def seed_text(self) -> str:
        return serialize_suite(self.seed).strip()

    @property
    def assets(self) -> str:
        if self.asset_dir is None:
            return "(none)"
        names = sorted(p.name for p in Path(self.asset_dir).iterdir() if p.is_file())
        return ", ".join(names) or "(none)"


@dataclass(frozen=True)
class Execution:
    """Outcome of parsing and running one draft suite."""

    feedback: str
    suite: TestSuite | None
    faulty: bool
    errored: tuple[str, ...] = ()


def execute_draft(env: Environment, text: str) -> Execution:
    """Parse then run ``text``; feedback carries JSON diagnostics for faults."""
    try:
        suite = parse_suite(text, env.asset_dir)
    except SuiteError as exc:
        return Execution("PARSE ERROR\ndiagnostics:\n" + exc.to_json(), None, True)
    report, _ = run_suite(suite, env.target, env.run_options, index=env.index, asset_dir=env.asset_dir)
    errored = tuple(r.name for r in report.results if r.verdict == "errored")
    summary = report.render()
    if errored:
        diags = [
            {"case": r.name, "step": r.step, "fault": r.fault} for r in report.results if r.verdict == "errored"
        ]
        summary += "\nRUNTIME ERRORS\ndiagnostics:\n" + json.dumps(diags, indent=2)
    return Execution(summary.replace(env.target, TARGET_LABEL), suite, bool(errored), errored)


def _try_parse(env: Environment, text: str) -> TestSuite | None:
    try:
        return parse_suite(text, env.asset_dir)
    except SuiteError:
        return None


def _last_assistant(state: AgentState, agent: str) -> ChatMessage | None:
    for msg in reversed(state.history(agent)):
        if msg.role == "assistant":
            return msg
    return None


def _start(state: AgentState, agent: str, system: str, user: str) -> list[ChatMessage]:
    history = state.history(agent)
    if not history:
        history.extend([ChatMessage("system", system), ChatMessage("user", user)])
    return history


def _one_shot(state: AgentState, ctx: RunContext, agent: str, template: str, **values: str) -> str:
    """Fresh two-message conversation for an agent that does not use tools."""
    env: Environment = ctx.env
    system, user = env.prompts.render(template, **values)
    history = [ChatMessage("system", system), ChatMessage("user", user)]
    reply = ctx.call(state, history)
    history.append(reply)
    state.messages[agent] = history
    return reply.content


def _cap_reached(state: AgentState, ctx: RunContext) -> bool:
    if state.llm_calls >= ctx.limits.max_llm_calls:
        state.incomplete = True
        state.flags.append(f"iteration cap of {ctx.limits.max_llm_calls} calls reached")
        return True
    return False


def _tool_results(state: AgentState, ctx: RunContext, agent: str, allowed: dict[str, ToolSpec]) -> None:
    env: Environment = ctx.env
    history = state.history(agent)
    call_msg = history[-1]
    for call in call_msg.tool_calls:
        args = call.parsed_arguments()
        if call.name not in allowed:
            out = f"unknown tool {call.name!r}; available: {', '.join(sorted(allowed))}"
        elif call.name == RETRIEVER.name:
            query = str(args.get("query", ""))
            out = retrieve(env.index, query)
            state.update(spec_context=_append_context(state.artifacts.spec_context, out))
        else:
            text = str(args.get("suite", ""))
            execution = execute_draft(env, text)
            out = execution.feedback
            if execution.suite is not None:
                state.update(draft_suite=text, feedback=out)
        history.append(ChatMessage("tool", out, tool_call_id=call.id or call.name, name=call.name))


def _append_context(current: str, addition: str) -> str:
    if addition in current:
        return current
    return f"{current}\n\n{addition}".strip()


def initial_values(env: Environment, endpoint: str) -> dict[str, str]:
    return {"endpoint": endpoint, "seed_suite": env.seed_text, "assets": env.assets}


# ---------------------------------------------------------------------------
# single agent

SINGLE = "agent"


def _agent(state: AgentState, ctx: RunContext) -> None:
    env: Environment = ctx.env
    system, user = env.prompts.render("single_agent", **initial_values(env, state.artifacts.endpoint))
    history = _start(state, SINGLE, system, user)
    if _cap_reached(state, ctx):
        return
    state.llm_calls += 1
    history.append(ctx.call(state, history, [RETRIEVER, EXECUTOR]))


def _agent_route(state: AgentState) -> str:
    if state.incomplete:
        return "done"
    last = state.history(SINGLE)[-1]
    return "tools" if last.role == "assistant" and last.tool_calls else "done"


def _agent_tools(state: AgentState, ctx: RunContext) -> None:
    _tool_results(state, ctx, SINGLE, {RETRIEVER.name: RETRIEVER, EXECUTOR.name: EXECUTOR})


def _single_done(state: AgentState, ctx: RunContext) -> None:
    env: Environment = ctx.env
    suite = None
    if not state.incomplete:
        last = _last_assistant(state, SINGLE)
        if last is not None:
            text = extract_suite_text(last.content)
            suite = _try_parse(env, text)
            if suite is not None:
                state.update(draft_suite=text)
            else:
                state.flags.append("final answer did not contain a parseable suite")
    if suite is None and state.artifacts.draft_suite:
        suite = _try_parse(env, state.artifacts.draft_suite)
        if suite is not None:
            state.flags.append("returned the last executed draft")
    state.result = with_origin(suite, "single-agent") if suite is not None else None


def build_single_agent() -> WorkflowGraph:
    g = WorkflowGraph("single-agent")
    g.add_node(SINGLE, _agent, kind="agent")
    g.add_node("tools", _agent_tools, kind="tool")
    g.add_terminal("done", _single_done)
    g.set_entry(SINGLE)
    g.add_conditional_edges(SINGLE, _agent_route, ["tools", "done"])
    g.add_edge("tools", SINGLE)
    return g.validate()


# ---------------------------------------------------------------------------
# multi agent

OPENAPI = "openapi_agent"


def _openapi_agent(state: AgentState, ctx: RunContext) -> None:
    env: Environment = ctx.env
    system, user = env.prompts.render("openapi_agent", **initial_values(env, state.artifacts.endpoint))
    history = _start(state, OPENAPI, system, user)
    if _cap_reached(state, ctx):
        return
    state.llm_calls += 1
    history.append(ctx.call(state, history, [RETRIEVER]))


def _openapi_route(state: AgentState) -> str:
    if state.incomplete:
        return "done"
    last = state.history(OPENAPI)[-1]
    return "openapi_tools" if last.tool_calls else "suggestions"


def _openapi_tools(state: AgentState, ctx: RunContext) -> None:
    _tool_results(state, ctx, OPENAPI, {RETRIEVER.name: RETRIEVER})


def _suggestion_values(state: AgentState, env: Environment) -> dict[str, str]:
    return {
        **initial_values(env, state.artifacts.endpoint),
        "spec_context": state.artifacts.spec_context or "(nothing retrieved)",
    }


def _suggester(focus: str):
    def branch(state: AgentState, ctx: RunContext) -> str:
        return _one_shot(state, ctx, f"{focus}_agent", f"{focus}_agent", **_suggestion_values(state, ctx.env))

    branch.__name__ = f"{focus}_agent"
    return branch


def _merge(state: AgentState, ctx: RunContext) -> None:
    header, parameter, value = state.fanout_values
    state.update(header_suggestions=header, parameter_suggestions=parameter, value_suggestions=value)


_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def parse_plan(text: str) -> tuple[PlanItem, ...]:
    """Read the planner's JSON array; falls back to bullet lines."""
    candidates = _FENCE.findall(text)
    start, end = text.find("["), text.rfind("]")
    if start != -1 and end > start:
        candidates.append(text[start : end + 1])
    for blob in candidates:
        try:
            raw = json.loads(blob)
        except json.JSONDecodeError:
            continue
        if isinstance(raw, list):
            items = []
            for item in raw:
                if isinstance(item, dict) and str(item.get("description", "")).strip():
                    focus = str(item.get("focus", "value")).lower()
                    items.append(PlanItem(focus if focus in FOCUSES else "value", str(item["description"]).strip()))
            if items:
                return tuple(items)
    bullets = [m.group(1).strip() for m in re.finditer(r"^\s*(?:[-*]|\d+\.)\s+(.+)$", text, re.MULTILINE)]
    return tuple(PlanItem("value", b) for b in bullets if b)


def render_plan(plan: tuple[PlanItem, ...]) -> str:
    return "\n".join(f"{i}. [{p.focus}] {p.description}" for i, p in enumerate(plan, 1)) or "(empty plan)"


def _planner(state: AgentState, ctx: RunContext) -> None:
    a = state.artifacts
    text = _one_shot(
        state,
        ctx,
        "planner",
        "planner",
        **_suggestion_values(state, ctx.env),
        header_suggestions=a.header_suggestions,
        parameter_suggestions=a.parameter_suggestions,
        value_suggestions=a.value_suggestions,
    )
    plan = parse_plan(text)
    if not plan:
        state.flags.append("planner produced no test descriptions")
    state.update(test_plan=plan)


def _writer(state: AgentState, ctx: RunContext) -> None:
    text = _one_shot(
        state, ctx, "writer", "writer", **_suggestion_values(state, ctx.env), test_plan=render_plan(state.artifacts.test_plan)
    )
    state.update(draft_suite=extract_suite_text(text))


def _executor(state: AgentState, ctx: RunContext) -> None:
    execution = execute_draft(ctx.env, state.artifacts.draft_suite)
    state.update(
        feedback=execution.feedback,
        faults=execution.faulty,
        errored_cases=execution.errored,
        repair_cap=ctx.limits.max_repairs,
    )


def _route_after_execution(state: AgentState) -> str:
    a = state.artifacts
    if not a.faults:
        return "done"
    return "repair" if a.repair_attempts < a.repair_cap else "excise"


def _repair(state: AgentState, ctx: RunContext) -> None:
    env: Environment = ctx.env
    a = state.artifacts
    text = _one_shot(
        state,
        ctx,
        "repair",
        "repair",
        assets=env.assets,
        draft_suite=a.draft_suite,
        feedback=a.feedback,
    )
    state.update(draft_suite=extract_suite_text(text), repair_attempts=a.repair_attempts + 1)


def _excise(state: AgentState, ctx: RunContext) -> None:
    a = state.artifacts
    suite = _try_parse(ctx.env, a.draft_suite)
    if suite is None:
        state.flags.append("repair cap exhausted; draft still unparseable, nothing kept")
        state.update(draft_suite="")
        return
    kept = tuple(c for c in suite.cases if c.name not in a.errored_cases)
    state.flags.append(f"repair cap exhausted; excised {len(suite.cases) - len(kept)} faulty case(s)")
    trimmed = TestSuite(suite.name, kept, suite.base_headers)
    state.update(draft_suite=serialize_suite(trimmed), faults=False, errored_cases=())


def _multi_done(state: AgentState, ctx: RunContext) -> None:
    if state.incomplete or not state.artifacts.draft_suite:
        state.result = None
        return
    suite = _try_parse(ctx.env, state.artifacts.draft_suite)
    if suite is None:
        state.result = None
        return
    origin = "repair" if state.artifacts.repair_attempts else "multi-agent"
    state.result = with_origin(suite, origin)


def build_multi_agent() -> WorkflowGraph:
    g = WorkflowGraph("multi-agent")
    g.add_node(OPENAPI, _openapi_agent, kind="agent")
    g.add_node("openapi_tools", _openapi_tools, kind="tool")
    g.add_fanout("suggestions", [(f"{f}_agent", _suggester(f)) for f in FOCUSES])
    g.add_node("merge", _merge, kind="merge")
    g.add_node("planner", _planner)
    g.add_node("writer", _writer)
    g.add_node("executor", _executor, kind="tool")
    g.add_node("repair", _repair)
    g.add_node("excise", _excise, kind="tool")
    g.add_terminal("done", _multi_done)
    g.set_entry(OPENAPI)
    g.add_conditional_edges(OPENAPI, _openapi_route, ["openapi_tools", "suggestions", "done"])
    g.add_edge("openapi_tools", OPENAPI)
    g.add_edge("suggestions", "merge")
    g.add_edge("merge", "planner")
    g.add_edge("planner", "writer")
    g.add_edge("writer", "executor")
    g.add_conditional_edges("executor", _route_after_execution, ["repair", "excise", "done"])
    g.add_edge("repair", "executor")
    g.add_edge("excise", "done")
    return g.validate()
