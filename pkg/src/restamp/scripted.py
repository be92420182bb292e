"""A scripted stand-in for an authoring model, used to record the bundled transcripts.

It answers each agent role with fixed, plausible output for the ``minipet``
endpoints. Recording it through :class:`~restamp.llm.RecordingBackend` yields
transcripts that replay deterministically without network access.
"""

from __future__ import annotations

import json
import re
from typing import Any

from .llm import ChatMessage, RawUsage, ToolCall, ToolSpec

_ENDPOINT = re.compile(r"Endpoint under test: (\S+)")
_PATH = re.compile(r'"path":\s*"([^"]+)"')

ROLE_MARKERS = (
    ("Header Agent in", "header"),
    ("Parameter Agent in", "parameter"),
    ("Value Agent in", "value"),
    ("Planner Agent in", "planner"),
    ("Test Writer Agent in", "writer"),
    ("Test Repair Agent in", "repair"),
    ("OpenAPI Agent in", "openapi"),
    ("amplifies REST API test suites", "single"),
)

DEFINITIONS = {"/pets": "Pet", "/pets/{id}": "Pet", "/user/login": "Session"}

# Tokens are estimated at four characters each; wall time grows with output length.
CHARS_PER_TOKEN = 4


def _status(code: int) -> dict[str, Any]:
    return {"kind": "status_equals", "expected": code}


def _ctype(value: str) -> dict[str, Any]:
    return {"kind": "content_type_equals", "expected": value}


def _field(selector: str, value: Any) -> dict[str, Any]:
    return {"kind": "body_field_equals", "selector": selector, "expected": value}


def _exists(selector: str, present: bool = True) -> dict[str, Any]:
    return {"kind": "body_field_exists", "selector": selector, "expected": present}


def _json_body(payload: dict[str, Any]) -> dict[str, Any]:
    return {"content_type": "application/json", "text": json.dumps(payload)}


def _create(name: str) -> dict[str, Any]:
    return {"method": "POST", "path": "/pets", "body": _json_body({"name": name, "status": "available"}), "captures": {"id": "id"}}


def _case(name: str, description: str, *steps: dict[str, Any]) -> dict[str, Any]:
    return {"name": name, "description": description, "steps": list(steps)}


CASES: dict[str, list[dict[str, Any]]] = {
    "/pets": [
        _case(
            "testListPendingPetsAsXml",
            "Listing pending pets with an XML Accept header returns an XML document.",
            {"method": "GET", "path": "/pets", "query_params": {"status": "pending"}, "headers": {"Accept": "application/xml"},
             "assertions": [_status(200), _ctype("application/xml")]},
        ),
        _case(
            "testListPetsWithUnknownStatusReturnsEmptyList",
            "An unknown status filter matches nothing, so the list is empty.",
            {"method": "GET", "path": "/pets", "query_params": {"status": "lost"}, "assertions": [_status(200), _exists("0", False)]},
        ),
        _case(
            "testCreatePetWithJsonBody",
            "Creating a pet from a JSON body echoes the stored pet.",
            {"method": "POST", "path": "/pets", "body": _json_body({"name": "rex", "status": "available"}),
             "assertions": [_status(200), _field("name", "rex"), _exists("id")]},
        ),
        _case(
            "testCreatePetWithXmlBody",
            "Creating a pet from an XML body is accepted.",
            {"method": "POST", "path": "/pets", "headers": {"Accept": "application/xml"},
             "body": {"content_type": "application/xml", "text": "<Pet><name>tom</name><status>pending</status></Pet>"},
             "assertions": [_status(200), _ctype("application/xml"), _field("name", "tom")]},
        ),
        _case(
            "testUploadPetWithPhoto",
            "A multipart upload with a photo and a name creates a pet.",
            {"method": "POST", "path": "/pets", "form_params": {"name": "snap"},
             "body": {"content_type": "multipart/form-data", "file": "pet.png", "field": "photo"},
             "assertions": [_status(200), _field("name", "snap")]},
        ),
        _case(
            "testCreatePetWithInvalidStatusIsRejected",
            "A status outside the documented enum is rejected as invalid input.",
            {"method": "POST", "path": "/pets", "body": _json_body({"name": "odd", "status": "lost"}), "assertions": [_status(405)]},
        ),
    ],
    "/pets/{id}": [
        _case(
            "testGetCreatedPetById",
            "A freshly created pet can be fetched by its id.",
            _create("fido"),
            {"method": "GET", "path": "/pets/{id}", "assertions": [_status(200), _field("name", "fido")]},
        ),
        _case(
            "testGetSeededPetAsXml",
            "The first seeded pet is available as XML.",
            {"method": "GET", "path": "/pets/{id}", "path_params": {"id": 1}, "headers": {"Accept": "application/xml"},
             "assertions": [_status(200), _ctype("application/xml")]},
        ),
        _case(
            "testGetPetWithMalformedIdIsBadRequest",
            "A non-numeric id is an invalid ID.",
            {"method": "GET", "path": "/pets/{id}", "path_params": {"id": "abc"}, "assertions": [_status(400)]},
        ),
        _case(
            "testDeleteCreatedPet",
            "Deleting a freshly created pet succeeds.",
            _create("ghost"),
            {"method": "DELETE", "path": "/pets/{id}", "assertions": [_status(200)]},
        ),
        _case(
            "testGetDeletedPetReturnsNotFound",
            "After a delete the pet is gone.",
            _create("gone"),
            {"method": "DELETE", "path": "/pets/{id}"},
            {"method": "GET", "path": "/pets/{id}", "assertions": [_status(404)]},
        ),
        _case(
            "testDeletePetWithZeroIdIsBadRequest",
            "Zero is below the documented minimum id.",
            {"method": "DELETE", "path": "/pets/{id}", "path_params": {"id": 0}, "assertions": [_status(400)]},
        ),
    ],
    "/user/login": [
        _case(
            "testLoginWithValidCredentials",
            "The documented example user can log in and receives a token.",
            {"method": "GET", "path": "/user/login", "query_params": {"username": "theUser", "password": "12345"},
             "assertions": [_status(200), _exists("token")]},
        ),
        _case(
            "testLoginWithInvalidPassword",
            "A wrong password is rejected with the documented 400.",
            {"method": "GET", "path": "/user/login", "query_params": {"username": "theUser", "password": "wrong-password"},
             "assertions": [_status(400)]},
        ),
        _case(
            "testLoginWithoutPasswordIsRejected",
            "Omitting the required password is an invalid request.",
            {"method": "GET", "path": "/user/login", "query_params": {"username": "theUser"}, "assertions": [_status(400)]},
        ),
        _case(
            "testLoginAsXml",
            "The session is also available as XML.",
            {"method": "GET", "path": "/user/login", "query_params": {"username": "theUser", "password": "12345"},
             "headers": {"Accept": "application/xml"}, "assertions": [_status(200), _ctype("application/xml")]},
        ),
    ],
}

# The single agent writes fewer cases per endpoint than the pipeline.
SINGLE_CASES = {
    "/pets": ("testListPendingPetsAsXml", "testCreatePetWithJsonBody", "testUploadPetWithPhoto"),
    "/pets/{id}": ("testGetCreatedPetById", "testGetPetWithMalformedIdIsBadRequest", "testDeleteCreatedPet"),
    "/user/login": ("testLoginWithValidCredentials", "testLoginWithInvalidPassword"),
}

FOCUS_OF = {
    "testListPendingPetsAsXml": "header",
    "testCreatePetWithXmlBody": "header",
    "testGetSeededPetAsXml": "header",
    "testLoginAsXml": "header",
    "testListPetsWithUnknownStatusReturnsEmptyList": "value",
    "testCreatePetWithInvalidStatusIsRejected": "value",
    "testGetPetWithMalformedIdIsBadRequest": "value",
    "testDeletePetWithZeroIdIsBadRequest": "value",
    "testLoginWithInvalidPassword": "value",
}


def suite_text(endpoint: str, names: tuple[str, ...] | None = None) -> str:
    cases = [c for c in CASES[endpoint] if names is None or c["name"] in names]
    doc = {"format": "restamp-suite/1", "name": "minipet", "base_headers": {"Accept": "application/json"}, "cases": cases}
    return json.dumps(doc, indent=2)


def break_syntax(text: str) -> str:
    """Drop the closing brace of the first case: the kind of slip a writer makes."""
    marker = "\n    },\n"
    at = text.find(marker)
    if at == -1:
        return text[:-1]
    return text[:at] + "\n" + text[at + len(marker) :]


def _fence(text: str) -> str:
    return f"```json\n{text}\n```"


class ScriptedModel:
    """Callable backend body: ``(messages, tools) -> (reply, usage)``.

    ``broken_writer`` names endpoints whose first writer output has a syntax error.
    """

    def __init__(self, broken_writer: tuple[str, ...] = ()):
        self.broken_writer = set(broken_writer)
        self.calls = 0

    def __call__(self, messages: list[ChatMessage], tools: list[ToolSpec]) -> tuple[ChatMessage, RawUsage]:
        role = self._role(messages[0].content)
        endpoint = self._endpoint(messages)
        reply = getattr(self, f"_{role}")(endpoint, messages)
        self.calls += 1
        prompt_chars = sum(len(m.content) + sum(len(c.arguments) for c in m.tool_calls) for m in messages)
        reply_chars = len(reply.content) + sum(len(c.arguments) for c in reply.tool_calls)
        out_tokens = max(1, reply_chars // CHARS_PER_TOKEN)
        usage = RawUsage(
            input_tokens=max(1, prompt_chars // CHARS_PER_TOKEN),
            output_tokens=out_tokens,
            wall_time=round(0.4 + out_tokens / 80, 3),
        )
        return reply, usage

    @staticmethod
    def _role(system: str) -> str:
        for marker, role in ROLE_MARKERS:
            if marker in system:
                return role
        raise ValueError("unrecognised agent role")

    @staticmethod
    def _endpoint(messages: list[ChatMessage]) -> str:
        for m in messages:
            found = _ENDPOINT.search(m.content)
            if found:
                return found.group(1)
        for m in messages:
            paths = _PATH.findall(m.content)
            if paths:
                return max(paths, key=lambda p: (p.count("/"), p))
        raise ValueError("no endpoint in conversation")

    def _call_id(self) -> str:
        return f"call_{self.calls + 1:03d}"

    def _tool(self, thought: str, name: str, args: dict[str, Any]) -> ChatMessage:
        call = ToolCall(self._call_id(), name, json.dumps(args, sort_keys=True))
        return ChatMessage("assistant", thought, tool_calls=(call,))

    def _single(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        tool_turns = [m for m in messages if m.role == "tool"]
        if not tool_turns:
            return self._tool(f"First I need the documentation of {endpoint}.", "openapi_retriever", {"query": endpoint})
        draft = suite_text(endpoint, SINGLE_CASES[endpoint])
        if len(tool_turns) == 1:
            return self._tool(
                "The operations, parameters and status codes are known. I will draft cases and run them.",
                "local_executor",
                {"suite": draft},
            )
        return ChatMessage(
            "assistant",
            "The draft runs without syntax or runtime errors. Failing assertions point at behaviour that"
            " contradicts the documentation, so I keep them.\n\n" + _fence(draft),
        )

    def _openapi(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        tool_turns = [m for m in messages if m.role == "tool"]
        if not tool_turns:
            return self._tool(f"Retrieve {endpoint} first.", "openapi_retriever", {"query": endpoint})
        if len(tool_turns) == 1:
            name = DEFINITIONS[endpoint]
            return self._tool(f"The endpoint references {name}; retrieve it too.", "openapi_retriever", {"query": name})
        return ChatMessage("assistant", f"Collected the operations of {endpoint} and the {DEFINITIONS[endpoint]} definition.")

    def _suggest(self, focus: str, endpoint: str) -> ChatMessage:
        lines = [f"Reasoning: the documentation of {endpoint} lists its types, parameters and statuses.", "Suggestions:"]
        for case in CASES[endpoint]:
            if FOCUS_OF.get(case["name"], "parameter") == focus:
                lines.append(f"- {case['description']}")
        if len(lines) == 2:
            lines.append("- Keep the defaults; no additional suggestions for this endpoint.")
        return ChatMessage("assistant", "\n".join(lines))

    def _header(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        return self._suggest("header", endpoint)

    def _parameter(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        return self._suggest("parameter", endpoint)

    def _value(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        return self._suggest("value", endpoint)

    def _planner(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        plan = [{"focus": FOCUS_OF.get(c["name"], "parameter"), "description": c["description"]} for c in CASES[endpoint]]
        return ChatMessage(
            "assistant",
            "Each suggestion maps onto one independent case.\n\n" + _fence(json.dumps(plan, indent=2)),
        )

    def _writer(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        text = suite_text(endpoint)
        if endpoint in self.broken_writer:
            text = break_syntax(text)
        return ChatMessage("assistant", "One case per planned description.\n\n" + _fence(text))

    def _repair(self, endpoint: str, messages: list[ChatMessage]) -> ChatMessage:
        return ChatMessage(
            "assistant",
            "The parser reports a missing closing brace after the first case. Restoring it.\n\n" + _fence(suite_text(endpoint)),
        )
