"""A small deterministic node/edge workflow engine.

Nodes are functions ``fn(state, ctx) -> None`` that mutate one
:class:`AgentState`. Transitions are either static edges or conditional
edges whose predicate names the next node out of a declared set. A fan-out
node runs several branch functions (optionally concurrently) and always
records and merges them in declaration order.
"""

from __future__ import annotations

import dataclasses
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

from ..llm import ChatMessage, Gateway, GatewayError, ToolSpec, UsageStats

log = logging.getLogger(__name__)

ABORTED = "aborted"


class GraphError(Exception):
    """Invalid topology, detected when the graph is validated."""


@dataclass(frozen=True)
class Limits:
    max_llm_calls: int = 15  # ReAct/retriever loop calls per endpoint
    max_repairs: int = 3
    max_node_visits: int = 200
    parallel_fanout: bool = False
    temperature: float = 0.0

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> Limits:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown limit keys: {sorted(unknown)}")
        return cls(**raw)


@dataclass(frozen=True)
class PlanItem:
    focus: str
    description: str


@dataclass(frozen=True)
class Artifacts:
    endpoint: str = ""
    spec_context: str = ""
    header_suggestions: str = ""
    parameter_suggestions: str = ""
    value_suggestions: str = ""
    test_plan: tuple[PlanItem, ...] = ()
    draft_suite: str = ""
    feedback: str = ""
    faults: bool = False
    errored_cases: tuple[str, ...] = ()
    repair_attempts: int = 0
    repair_cap: int = 3


@dataclass
class AgentState:
    artifacts: Artifacts = field(default_factory=Artifacts)
    messages: dict[str, list[ChatMessage]] = field(default_factory=dict)
    usage: UsageStats = field(default_factory=UsageStats)
    trace: list[str] = field(default_factory=list)
    llm_calls: int = 0
    incomplete: bool = False
    flags: list[str] = field(default_factory=list)
    error: str | None = None
    result: Any = None  # TestSuite produced by the terminal node, if any
    fanout_values: list[Any] = field(default_factory=list)

    def update(self, **changes: Any) -> None:
        """Replace artifact fields wholesale."""
        self.artifacts = dataclasses.replace(self.artifacts, **changes)

    def history(self, agent: str) -> list[ChatMessage]:
        return self.messages.setdefault(agent, [])


@dataclass
class Node:
    name: str
    kind: str  # agent | tool | merge | fanout | terminal
    fn: Callable[[AgentState, Any], None] | None = None
    branches: tuple[tuple[str, Callable[[AgentState, Any], Any]], ...] = ()


@dataclass
class _Conditional:
    predicate: Callable[[AgentState], str]
    targets: tuple[str, ...]


class WorkflowGraph:
    def __init__(self, name: str):
        self.name = name
        self.nodes: dict[str, Node] = {}
        self.edges: dict[str, str] = {}
        self.conditionals: dict[str, _Conditional] = {}
        self.entry: str | None = None
        self.terminals: set[str] = set()

    def add_node(self, name: str, fn, kind: str = "agent") -> WorkflowGraph:
        if name in self.nodes or name == ABORTED:
            raise GraphError(f"duplicate node {name!r}")
        self.nodes[name] = Node(name, kind, fn)
        return self

    def add_fanout(self, name: str, branches: list[tuple[str, Callable]]) -> WorkflowGraph:
        """Branch functions return a value; the list of values is stored via the merge node."""
        if name in self.nodes:
            raise GraphError(f"duplicate node {name!r}")
        self.nodes[name] = Node(name, "fanout", None, tuple(branches))
        return self

    def add_terminal(self, name: str, fn=None) -> WorkflowGraph:
        self.add_node(name, fn, kind="terminal")
        self.terminals.add(name)
        return self

    def set_entry(self, name: str) -> WorkflowGraph:
        self.entry = name
        return self

    def add_edge(self, src: str, dst: str) -> WorkflowGraph:
        if src in self.edges or src in self.conditionals:
            raise GraphError(f"node {src!r} already has an outgoing transition")
        self.edges[src] = dst
        return self

    def add_conditional_edges(self, src: str, predicate: Callable[[AgentState], str], targets) -> WorkflowGraph:
        if src in self.edges or src in self.conditionals:
            raise GraphError(f"node {src!r} already has an outgoing transition")
        self.conditionals[src] = _Conditional(predicate, tuple(targets))
        return self

    def successors(self, name: str) -> tuple[str, ...]:
        if name in self.edges:
            return (self.edges[name],)
        if name in self.conditionals:
            return self.conditionals[name].targets
        return ()

    def validate(self) -> WorkflowGraph:
        if self.entry is None or self.entry not in self.nodes:
            raise GraphError("entry node missing")
        if not self.terminals:
            raise GraphError("graph has no terminal node")
        for src in list(self.edges) + list(self.conditionals):
            if src not in self.nodes:
                raise GraphError(f"transition from unknown node {src!r}")
            for dst in self.successors(src):
                if dst not in self.nodes:
                    raise GraphError(f"transition {src!r} -> unknown node {dst!r}")
        for name in self.nodes:
            if name not in self.terminals and not self.successors(name):
                raise GraphError(f"non-terminal node {name!r} has no outgoing transition")
        seen = {self.entry}
        frontier = [self.entry]
        while frontier:
            for nxt in self.successors(frontier.pop()):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        unreachable = sorted(set(self.nodes) - seen)
        if unreachable:
            raise GraphError(f"unreachable nodes: {unreachable}")
        return self


@dataclass
class RunContext:
    """Services available to node functions during one run."""

    gateway: Gateway
    limits: Limits
    env: Any = None
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def call(self, state: AgentState, messages: list[ChatMessage], tools: list[ToolSpec] | None = None) -> ChatMessage:
        reply, delta = self.gateway.complete(messages, tools or [], self.limits.temperature)
        with self._lock:
            state.usage = state.usage + delta
        return reply


def _next(graph: WorkflowGraph, node: str, state: AgentState) -> str:
    if node in graph.edges:
        return graph.edges[node]
    cond = graph.conditionals[node]
    choice = cond.predicate(state)
    if choice not in cond.targets:
        raise GraphError(f"predicate of {node!r} chose undeclared target {choice!r}")
    return choice


def _run_fanout(node: Node, state: AgentState, ctx: RunContext) -> list[Any]:
    if ctx.limits.parallel_fanout:
        with ThreadPoolExecutor(max_workers=len(node.branches)) as pool:
            futures = [pool.submit(fn, state, ctx) for _, fn in node.branches]
            values = [f.result() for f in futures]
    else:
        values = [fn(state, ctx) for _, fn in node.branches]
    state.trace.extend(name for name, _ in node.branches)
    return values


def run_workflow(
    graph: WorkflowGraph,
    state: AgentState,
    gateway: Gateway,
    limits: Limits | None = None,
    env: Any = None,
) -> AgentState:
    """Drive ``state`` from the entry node to a terminal node.

    A gateway error stops this run: the message is stored on the state and
    the trace ends with ``aborted``.
    """
    graph.validate()
    ctx = RunContext(gateway=gateway, limits=limits or Limits(), env=env)
    node_name = graph.entry
    visits = 0
    while True:
        node = graph.nodes[node_name]
        if visits >= ctx.limits.max_node_visits:
            state.incomplete = True
            state.flags.append("node-visit cap reached")
            state.trace.append(ABORTED)
            return state
        visits += 1
        state.trace.append(node_name)
        try:
            if node.kind == "fanout":
                state.fanout_values = _run_fanout(node, state, ctx)
            elif node.fn is not None:
                node.fn(state, ctx)
        except GatewayError as exc:
            log.warning("workflow %s aborted at %s: %s", graph.name, node_name, exc)
            state.error = f"{type(exc).__name__}: {exc}"
            state.trace.append(ABORTED)
            return state
        if node_name in graph.terminals:
            return state
        node_name = _next(graph, node_name, state)
