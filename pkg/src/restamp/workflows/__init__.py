"""Agent workflows: a small graph engine and the two amplification topologies."""

from .agents import EXECUTOR, RETRIEVER, Environment, build_multi_agent, build_single_agent, execute_draft, parse_plan
from .amplify import MODES, AmplificationResult, EndpointTrace, amplify
from .engine import ABORTED, AgentState, Artifacts, GraphError, Limits, PlanItem, WorkflowGraph, run_workflow
from .prompts import PromptBook, PromptTemplate, load_template

__all__ = [
    "ABORTED",
    "EXECUTOR",
    "MODES",
    "RETRIEVER",
    "AgentState",
    "AmplificationResult",
    "Artifacts",
    "EndpointTrace",
    "Environment",
    "GraphError",
    "Limits",
    "PlanItem",
    "PromptBook",
    "PromptTemplate",
    "WorkflowGraph",
    "amplify",
    "build_multi_agent",
    "build_single_agent",
    "execute_draft",
    "load_template",
    "parse_plan",
    "run_workflow",
]
