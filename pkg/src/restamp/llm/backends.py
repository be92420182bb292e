"""Gateway backends: remote OpenAI-compatible HTTP, transcript record and replay."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Any, Callable

import requests

from .gateway import (
    ChatMessage,
    MalformedResponseError,
    RawUsage,
    ReplayMissError,
    ToolSpec,
    TransportError,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "OPENAI_API_KEY"
BASE_URL_ENV = "RESTAMP_LLM_BASE_URL"
MODEL_ENV = "RESTAMP_LLM_MODEL"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o-mini"


class ConfigurationError(Exception):
    pass


class RemoteBackend:
    """OpenAI-compatible ``POST {base_url}/chat/completions``."""

    def __init__(
        self,
        api_key: str | None = None,
        base_url: str | None = None,
        model: str | None = None,
        timeout: float = 120.0,
    ):
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise ConfigurationError(f"no API key: set {API_KEY_ENV}")
        self.base_url = (base_url or os.environ.get(BASE_URL_ENV) or DEFAULT_BASE_URL).rstrip("/")
        self.model = model or os.environ.get(MODEL_ENV) or DEFAULT_MODEL
        self.timeout = timeout
        self.session = requests.Session()

    def payload(self, messages: list[ChatMessage], tools: list[ToolSpec], temperature: float) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": temperature,
        }
        if tools:
            body["tools"] = [t.to_dict() for t in tools]
            body["tool_choice"] = "auto"
        return body

    def chat(self, messages, tools, temperature, digest) -> tuple[ChatMessage, RawUsage]:
        started = time.perf_counter()
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                json=self.payload(messages, tools, temperature),
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"chat completion request failed: {exc}") from exc
        elapsed = time.perf_counter() - started
        if resp.status_code != 200:
            raise TransportError(f"chat completion returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            message = ChatMessage.from_dict(data["choices"][0]["message"])
            usage = data.get("usage") or {}
            raw = RawUsage(
                input_tokens=int(usage.get("prompt_tokens", 0)),
                output_tokens=int(usage.get("completion_tokens", 0)),
                wall_time=elapsed,
            )
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected chat completion payload: {exc}") from exc
        return message, raw


class ReplayBackend:
    """Serves responses from a line-delimited JSON transcript.

    Strict mode looks entries up by request digest and fails on a miss.
    Lenient mode falls back to the next unconsumed entry in file order.
    """

    def __init__(self, transcript: str | Path | list[dict[str, Any]], strict: bool = True):
        if isinstance(transcript, (str, Path)):
            entries = read_transcript(transcript)
        else:
            entries = list(transcript)
        self.entries = entries
        self.strict = strict
        self._used = [False] * len(entries)
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self._used.count(False)

    def _take(self, digest: str) -> dict[str, Any]:
        for i, entry in enumerate(self.entries):
            if not self._used[i] and entry["digest"] == digest:
                self._used[i] = True
                return entry
        if self.strict:
            raise ReplayMissError(digest)
        for i, entry in enumerate(self.entries):
            if not self._used[i]:
                log.warning("replay digest mismatch; falling back to entry %d", entry.get("seq", i))
                self._used[i] = True
                return entry
        raise ReplayMissError(digest, "transcript exhausted")

    def chat(self, messages, tools, temperature, digest) -> tuple[ChatMessage, RawUsage]:
        with self._lock:
            entry = self._take(digest)
        usage = entry.get("usage") or {}
        return ChatMessage.from_dict(entry["response"]), RawUsage(
            input_tokens=int(usage.get("input_tokens", 0)),
            output_tokens=int(usage.get("output_tokens", 0)),
            wall_time=float(usage.get("wall_time", 0.0)),
        )


class RecordingBackend:
    """Wraps a backend and appends each exchange to a transcript file."""

    def __init__(self, inner, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")
        self._seq = 0
        self._lock = threading.Lock()

    def chat(self, messages, tools, temperature, digest) -> tuple[ChatMessage, RawUsage]:
        message, raw = self.inner.chat(messages, tools, temperature, digest)
        with self._lock:
            self._seq += 1
            line = {
                "seq": self._seq,
                "digest": digest,
                "response": message.to_dict(),
                "usage": {
                    "input_tokens": raw.input_tokens,
                    "output_tokens": raw.output_tokens,
                    "wall_time": raw.wall_time,
                },
            }
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n")
        return message, raw


class CallableBackend:
    """Adapter for a plain function ``(messages, tools) -> (ChatMessage, RawUsage)``."""

    def __init__(self, fn: Callable[[list[ChatMessage], list[ToolSpec]], tuple[ChatMessage, RawUsage]]):
        self.fn = fn

    def chat(self, messages, tools, temperature, digest):
        return self.fn(messages, tools)


def read_transcript(path: str | Path) -> list[dict[str, Any]]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(json.loads(line))
    return entries
