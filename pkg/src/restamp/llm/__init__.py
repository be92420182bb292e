from .backends import (
    CallableBackend,
    ConfigurationError,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    read_transcript,
)
from .gateway import (
    ChatMessage,
    Gateway,
    GatewayError,
    MalformedResponseError,
    Rates,
    RawUsage,
    ReplayMissError,
    ToolCall,
    ToolSpec,
    TransportError,
    UsageStats,
    estimate_cost,
    estimate_energy,
    request_digest,
)

__all__ = [
    "CallableBackend",
    "ChatMessage",
    "ConfigurationError",
    "Gateway",
    "GatewayError",
    "MalformedResponseError",
    "Rates",
    "RawUsage",
    "RecordingBackend",
    "RemoteBackend",
    "ReplayBackend",
    "ReplayMissError",
    "ToolCall",
    "ToolSpec",
    "TransportError",
    "UsageStats",
    "estimate_cost",
    "estimate_energy",
    "read_transcript",
    "request_digest",
]
