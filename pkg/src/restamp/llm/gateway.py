"""Chat-with-tools interface, usage accounting and cost/energy estimates."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Protocol

# GPT-4o-mini list prices in USD per million tokens; configuration, not ground truth.
DEFAULT_RATE_IN = Decimal("0.15")
DEFAULT_RATE_OUT = Decimal("0.60")
WH_PER_TOKEN = Decimal("0.00006")
_MILLION = Decimal(1_000_000)


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    pass


class MalformedResponseError(GatewayError):
    pass


class ReplayMissError(GatewayError):
    def __init__(self, digest: str, detail: str = ""):
        self.digest = digest
        super().__init__(f"no recorded response for request digest {digest}" + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    arguments: str

    def parsed_arguments(self) -> dict[str, Any]:
        try:
            value = json.loads(self.arguments or "{}")
        except json.JSONDecodeError:
            return {}
        return value if isinstance(value, dict) else {}


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str = ""
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant", "tool"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "tool" and not self.tool_call_id:
            raise ValueError("tool messages need a tool_call_id")

    def to_dict(self) -> dict[str, Any]:
        """OpenAI chat-completions wire form."""
        out: dict[str, Any] = {"role": self.role, "content": self.content}
        if self.tool_calls:
            out["tool_calls"] = [
                {"id": c.id, "type": "function", "function": {"name": c.name, "arguments": c.arguments}}
                for c in self.tool_calls
            ]
        if self.tool_call_id:
            out["tool_call_id"] = self.tool_call_id
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ChatMessage:
        calls = []
        for c in raw.get("tool_calls") or ():
            fn = c.get("function") or {}
            if "name" not in fn:
                raise MalformedResponseError("tool call without function name")
            args = fn.get("arguments", "")
            if not isinstance(args, str):
                args = json.dumps(args, sort_keys=True)
            calls.append(ToolCall(id=str(c.get("id", "")), name=fn["name"], arguments=args))
        return cls(
            role=raw.get("role", "assistant"),
            content=raw.get("content") or "",
            tool_calls=tuple(calls),
            tool_call_id=raw.get("tool_call_id"),
            name=raw.get("name"),
        )


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: dict[str, Any] = field(default_factory=lambda: {"type": "object", "properties": {}})

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "function",
            "function": {"name": self.name, "description": self.description, "parameters": self.parameters},
        }


@dataclass(frozen=True)
class UsageStats:
    input_tokens: int = 0
    output_tokens: int = 0
    wall_time: float = 0.0
    cost: Decimal = Decimal(0)
    energy: Decimal = Decimal(0)
    calls: int = 0

    def __post_init__(self):
        for name in ("input_tokens", "output_tokens", "wall_time", "cost", "energy", "calls"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    def __add__(self, other: UsageStats) -> UsageStats:
        return UsageStats(
            input_tokens=self.input_tokens + other.input_tokens,
            output_tokens=self.output_tokens + other.output_tokens,
            wall_time=self.wall_time + other.wall_time,
            cost=self.cost + other.cost,
            energy=self.energy + other.energy,
            calls=self.calls + other.calls,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "calls": self.calls,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "total_tokens": self.total_tokens,
            "wall_time_s": round(self.wall_time, 6),
            "cost_usd": str(self.cost),
            "energy_wh": str(self.energy),
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> UsageStats:
        return cls(
            input_tokens=int(raw["input_tokens"]),
            output_tokens=int(raw["output_tokens"]),
            wall_time=float(raw.get("wall_time_s", 0.0)),
            cost=Decimal(str(raw.get("cost_usd", "0"))),
            energy=Decimal(str(raw.get("energy_wh", "0"))),
            calls=int(raw.get("calls", 0)),
        )


@dataclass(frozen=True)
class Rates:
    """Prices per million tokens and energy per token."""

    input_per_million: Decimal = DEFAULT_RATE_IN
    output_per_million: Decimal = DEFAULT_RATE_OUT
    wh_per_token: Decimal = WH_PER_TOKEN


def _dec(value: Any) -> Decimal:
    return value if isinstance(value, Decimal) else Decimal(str(value))


def estimate_cost(input_tokens: int, output_tokens: int, rate_in: Any = DEFAULT_RATE_IN, rate_out: Any = DEFAULT_RATE_OUT) -> Decimal:
    """Dollar cost with rates given per million tokens. Exact decimal arithmetic."""
    if input_tokens < 0 or output_tokens < 0:
        raise ValueError("token counts must be nonnegative")
    rate_in, rate_out = _dec(rate_in), _dec(rate_out)
    if rate_in < 0 or rate_out < 0:
        raise ValueError("rates must be nonnegative")
    return (Decimal(input_tokens) * rate_in + Decimal(output_tokens) * rate_out) / _MILLION


def estimate_energy(total_tokens: int, wh_per_token: Any = WH_PER_TOKEN) -> Decimal:
    """Watt-hours at a flat per-token rate (0.00006 Wh by default)."""
    if total_tokens < 0:
        raise ValueError("token count must be nonnegative")
    return Decimal(total_tokens) * _dec(wh_per_token)


@dataclass(frozen=True)
class RawUsage:
    """What a backend reports for one call, before pricing."""

    input_tokens: int
    output_tokens: int
    wall_time: float


class Backend(Protocol):
    def chat(
        self, messages: list[ChatMessage], tools: list[ToolSpec], temperature: float, digest: str
    ) -> tuple[ChatMessage, RawUsage]: ...


def request_digest(messages: list[ChatMessage], tools: list[ToolSpec], temperature: float) -> str:
    """Stable key over ordered messages, tool specs and temperature."""
    payload = {
        "messages": [m.to_dict() for m in messages],
        "tools": [t.to_dict() for t in tools],
        "temperature": float(temperature),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class Gateway:
    """Uniform ``complete`` over a backend, accumulating :class:`UsageStats`."""

    def __init__(self, backend: Backend, rates: Rates | None = None):
        self.backend = backend
        self.rates = rates or Rates()
        self._usage = UsageStats()
        self._lock = threading.Lock()

    @property
    def usage(self) -> UsageStats:
        with self._lock:
            return self._usage

    def price(self, raw: RawUsage) -> UsageStats:
        return UsageStats(
            input_tokens=raw.input_tokens,
            output_tokens=raw.output_tokens,
            wall_time=raw.wall_time,
            cost=estimate_cost(raw.input_tokens, raw.output_tokens, self.rates.input_per_million, self.rates.output_per_million),
            energy=estimate_energy(raw.input_tokens + raw.output_tokens, self.rates.wh_per_token),
            calls=1,
        )

    def complete(
        self, messages: list[ChatMessage], tools: list[ToolSpec] | None = None, temperature: float = 0.0
    ) -> tuple[ChatMessage, UsageStats]:
        if not messages:
            raise ValueError("messages must be nonempty")
        if not 0.0 <= temperature <= 1.0:
            raise ValueError(f"temperature {temperature} outside [0, 1]")
        tools = list(tools or ())
        names = [t.name for t in tools]
        if len(names) != len(set(names)):
            raise ValueError("tool names must be unique per request")
        digest = request_digest(messages, tools, temperature)
        message, raw = self.backend.chat(list(messages), tools, temperature, digest)
        if message.role != "assistant":
            raise MalformedResponseError(f"backend answered with role {message.role!r}")
        delta = self.price(raw)
        with self._lock:
            self._usage = self._usage + delta
        return message, delta
