"""In-process HTTP service implementing the bundled ``minipet`` API.

With no faults enabled every response uses a status and media type that
``minipet.json`` documents for the operation. Each :class:`SeededFault` swaps in
one specific deviation.
"""

from __future__ import annotations

import json
import logging
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from email.parser import BytesParser
from email.policy import HTTP
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any
from urllib.parse import parse_qs, urlsplit

log = logging.getLogger(__name__)

STATUSES = ("available", "pending", "sold")
MAX_BODY = 2048
MAX_NAME = 64
SEED_PETS = (("doggie", "available"), ("kitty", "pending"), ("bunny", "sold"))
SEED_USERS = {"theUser": "12345"}


@dataclass(frozen=True)
class SeededFault:
    identifier: str
    operation: str
    trigger: str
    deviation: str


FAULTS = {
    f.identifier: f
    for f in (
        SeededFault(
            "login-200",
            "GET /user/login",
            "unknown user or wrong password",
            "answers 200 with a session instead of the documented 400",
        ),
        SeededFault(
            "undocumented-500",
            "POST /pets",
            f"request body larger than {MAX_BODY} bytes",
            "answers 500 text/plain, a status the OpenAPI document omits",
        ),
    )
}


def load_fault_config(path: str | Path) -> list[str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    faults = raw.get("faults", []) if isinstance(raw, dict) else raw
    return list(faults)


class PetStore:
    def __init__(self):
        self._lock = threading.Lock()
        self.pets: dict[int, dict[str, Any]] = {}
        self.next_id = 1
        self.users = dict(SEED_USERS)
        for name, status in SEED_PETS:
            self.add({"name": name, "status": status})

    def add(self, pet: dict[str, Any]) -> dict[str, Any]:
        with self._lock:
            record = {"id": self.next_id, "name": pet["name"], "status": pet.get("status", "available")}
            self.pets[self.next_id] = record
            self.next_id += 1
            return dict(record)

    def get(self, pet_id: int) -> dict[str, Any] | None:
        with self._lock:
            pet = self.pets.get(pet_id)
            return dict(pet) if pet else None

    def delete(self, pet_id: int) -> bool:
        with self._lock:
            return self.pets.pop(pet_id, None) is not None

    def list(self, status: str | None) -> list[dict[str, Any]]:
        with self._lock:
            return [dict(p) for p in self.pets.values() if status is None or p["status"] == status]


class _Reply(Exception):
    def __init__(self, status: int, payload: Any = None, tag: str = "", text: str | None = None):
        self.status = status
        self.payload = payload
        self.tag = tag
        self.text = text


def _to_xml(tag: str, payload: Any) -> bytes:
    def build(parent_tag: str, value: Any) -> ET.Element:
        el = ET.Element(parent_tag)
        if isinstance(value, dict):
            for k, v in value.items():
                el.append(build(k, v))
        elif isinstance(value, list):
            for item in value:
                el.append(build("Pet", item))
        else:
            el.text = str(value)
        return el

    return ET.tostring(build(tag, payload), encoding="utf-8", xml_declaration=True)


def _wants_xml(accept: str | None) -> bool:
    if not accept:
        return False
    accept = accept.lower()
    xml_at = accept.find("application/xml")
    json_at = accept.find("application/json")
    return xml_at != -1 and (json_at == -1 or xml_at < json_at)


def _parse_pet_json(body: bytes) -> dict[str, Any]:
    try:
        data = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise _Reply(405) from None
    if not isinstance(data, dict):
        raise _Reply(405)
    return data


def _parse_pet_xml(body: bytes) -> dict[str, Any]:
    try:
        root = ET.fromstring(body)
    except ET.ParseError:
        raise _Reply(405) from None
    data: dict[str, Any] = {}
    for child in root:
        data[child.tag] = child.text or ""
    return data


def _parse_multipart(content_type: str, body: bytes) -> dict[str, Any]:
    head = f"Content-Type: {content_type}\r\n\r\n".encode("latin-1")
    msg = BytesParser(policy=HTTP).parsebytes(head + body)
    if not msg.is_multipart():
        raise _Reply(405)
    fields: dict[str, Any] = {}
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if not name:
            continue
        payload = part.get_payload(decode=True) or b""
        if part.get_filename() is not None:
            fields[name] = payload
        else:
            fields[name] = payload.decode("utf-8", errors="replace")
    if not isinstance(fields.get("photo"), bytes) or not fields["photo"]:
        raise _Reply(405)
    return fields


def _valid_pet(data: dict[str, Any]) -> dict[str, Any]:
    name = data.get("name")
    status = data.get("status", "available")
    if not isinstance(name, str) or not name.strip() or len(name) > MAX_NAME:
        raise _Reply(405)
    if status not in STATUSES:
        raise _Reply(405)
    return {"name": name, "status": status}


def _pet_id(raw: str) -> int:
    if not raw.isdigit() or int(raw) < 1:
        raise _Reply(400)
    return int(raw)


class _Handler(BaseHTTPRequestHandler):
    server_version = "minipet/1.0"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("demo-target: " + fmt, *args)

    @property
    def app(self) -> DemoTarget:
        return self.server.app  # type: ignore[attr-defined]

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send(self, reply: _Reply) -> None:
        if reply.text is not None:
            data = reply.text.encode("utf-8")
            ctype = "text/plain"
        elif reply.payload is not None:
            if _wants_xml(self.headers.get("Accept")):
                data = _to_xml(reply.tag, reply.payload)
                ctype = "application/xml"
            else:
                data = json.dumps(reply.payload).encode("utf-8")
                ctype = "application/json"
        else:
            data, ctype = b"", None
        self.send_response(reply.status)
        if ctype:
            self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        if self.command != "HEAD":
            self.wfile.write(data)

    def _dispatch(self) -> None:
        url = urlsplit(self.path)
        query = {k: v[-1] for k, v in parse_qs(url.query, keep_blank_values=True).items()}
        segments = [s for s in url.path.split("/") if s]
        body = self._body()
        try:
            self.app.route(self.command, segments, query, self.headers, body)
        except _Reply as reply:
            self._send(reply)
            return
        self._send(_Reply(500, text="handler produced no reply"))

    do_GET = do_POST = do_PUT = do_DELETE = do_PATCH = do_HEAD = do_OPTIONS = _dispatch


class DemoTarget:
    """A running minipet service. Use as a context manager or call :meth:`stop`."""

    def __init__(self, faults: list[str] | tuple[str, ...] = (), host: str = "127.0.0.1", port: int = 0):
        unknown = [f for f in faults if f not in FAULTS]
        if unknown:
            raise ValueError(f"unknown faults {unknown}; known: {sorted(FAULTS)}")
        self.faults = frozenset(faults)
        self.store = PetStore()
        self._server = ThreadingHTTPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self._server.app = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> DemoTarget:
        self._thread = threading.Thread(target=self._server.serve_forever, name="minipet", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> DemoTarget:
        return self.start() if self._thread is None else self

    def __exit__(self, *exc) -> None:
        self.stop()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    # -- routes ------------------------------------------------------------

    def route(self, method: str, segments: list[str], query: dict[str, str], headers, body: bytes) -> None:
        if segments == ["pets"]:
            if method == "GET":
                self.list_pets(query)
            if method == "POST":
                self.add_pet(headers, body)
        elif len(segments) == 2 and segments[0] == "pets":
            if method == "GET":
                self.get_pet(segments[1])
            if method == "DELETE":
                self.delete_pet(segments[1])
        elif segments == ["user", "login"]:
            if method == "GET":
                self.login(query)
        else:
            raise _Reply(404)
        raise _Reply(405)

    def list_pets(self, query: dict[str, str]) -> None:
        status = query.get("status")
        pets = self.store.list(status) if status is None or status in STATUSES else []
        raise _Reply(200, pets, "pets")

    def add_pet(self, headers, body: bytes) -> None:
        if len(body) > MAX_BODY:
            if "undocumented-500" in self.faults:
                raise _Reply(500, text="request entity exceeded internal buffer")
            raise _Reply(405)
        raw_ct = headers.get("Content-Type") or ""
        ctype = raw_ct.split(";", 1)[0].strip().lower()
        if ctype == "application/json":
            data = _parse_pet_json(body)
        elif ctype in ("application/xml", "text/xml"):
            data = _parse_pet_xml(body)
        elif ctype == "multipart/form-data":
            data = _parse_multipart(raw_ct, body)
        else:
            raise _Reply(405)
        raise _Reply(200, self.store.add(_valid_pet(data)), "Pet")

    def get_pet(self, raw_id: str) -> None:
        pet = self.store.get(_pet_id(raw_id))
        if pet is None:
            raise _Reply(404)
        raise _Reply(200, pet, "Pet")

    def delete_pet(self, raw_id: str) -> None:
        if not self.store.delete(_pet_id(raw_id)):
            raise _Reply(404)
        raise _Reply(200)

    def login(self, query: dict[str, str]) -> None:
        username = query.get("username")
        password = query.get("password")
        if not username or password is None:
            raise _Reply(400)
        if self.store.users.get(username) != password and "login-200" not in self.faults:
            raise _Reply(400)
        raise _Reply(200, {"token": f"session-{username}", "username": username}, "Session")


def serve(faults: list[str] | tuple[str, ...] = (), port: int = 0, host: str = "127.0.0.1") -> DemoTarget:
    """Start a demo target in a background thread and return its handle.

    Raises:
        OSError: the port is already in use.
    """
    return DemoTarget(faults, host=host, port=port).start()
