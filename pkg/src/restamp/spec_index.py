"""Queryable index over an OpenAPI 2.0 / 3.x document.

Both dialects are normalized into one model: ``consumes``/``produces`` in
Swagger 2.0 and ``requestBody``/``content`` in 3.x all end up as
``request_types`` on operations and ``content_types`` on responses.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

HTTP_METHODS = ("get", "put", "post", "delete", "options", "head", "patch", "trace")
BODY_METHODS = frozenset({"POST", "PUT", "PATCH"})
PARAM_LOCATIONS = ("path", "query", "header", "form")
DEFAULT_DIGEST_BUDGET = 4000

_TEMPLATE_VAR = re.compile(r"\{([^{}/]+)\}")


class SpecError(Exception):
    """Base class for load-time errors."""


class SpecParseError(SpecError):
    pass


class SpecReferenceError(SpecError):
    """Dangling or non-local ``$ref``, or a duplicated path template."""


class UnsupportedDialectError(SpecError):
    pass


@dataclass(frozen=True)
class ValueKind:
    type: str
    format: str | None = None
    enum: tuple[Any, ...] | None = None
    minimum: float | None = None
    maximum: float | None = None

    def describe(self) -> str:
        parts = [self.type]
        if self.format:
            parts.append(self.format)
        text = " ".join(parts)
        extra = []
        if self.enum is not None:
            extra.append("enum=" + "|".join(str(v) for v in self.enum))
        if self.minimum is not None:
            extra.append(f"min={_num(self.minimum)}")
        if self.maximum is not None:
            extra.append(f"max={_num(self.maximum)}")
        if extra:
            text += " (" + ", ".join(extra) + ")"
        return text


@dataclass(frozen=True)
class ParameterEntry:
    name: str
    location: str
    required: bool
    value_kind: ValueKind


@dataclass(frozen=True)
class ResponseEntry:
    status: int
    description: str
    content_types: tuple[str, ...] = ()
    # top-level property names of the response body schema (array items unwrapped)
    fields: frozenset[str] = frozenset()
    schema_name: str | None = None


@dataclass(frozen=True)
class OperationEntry:
    method: str
    parameters: tuple[ParameterEntry, ...]
    request_types: tuple[str, ...]
    responses: dict[int, ResponseEntry]
    operation_id: str | None = None
    request_schema: str | None = None
    summary: str = ""
    # body schema name per request media type, where the schema is a named definition
    request_schemas: dict[str, str] = field(default_factory=dict)

    def parameter(self, name: str, location: str) -> ParameterEntry | None:
        for p in self.parameters:
            if p.name == name and p.location == location:
                return p
        return None

    @property
    def response_types(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for resp in self.responses.values():
            for ct in resp.content_types:
                seen.setdefault(ct, None)
        return tuple(seen)


@dataclass(frozen=True)
class PathEntry:
    template: str
    operations: dict[str, OperationEntry]

    @property
    def segments(self) -> tuple[str, ...]:
        return tuple(self.template.strip("/").split("/")) if self.template != "/" else ()


@dataclass(frozen=True)
class PropertyDigest:
    name: str
    kind: str
    required: bool
    constraints: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SchemaDigest:
    name: str
    properties: tuple[PropertyDigest, ...]
    example_values: dict[str, Any] | None = None
    found: bool = True
    text: str = ""

    def property_names(self) -> list[str]:
        return [p.name for p in self.properties]


@dataclass(frozen=True)
class EndpointDigest:
    path: str
    operations: tuple[OperationEntry, ...]
    text: str
    found: bool = True


@dataclass(frozen=True)
class SpecIndex:
    paths: tuple[PathEntry, ...]
    definitions: dict[str, SchemaDigest]
    source_version: str
    title: str = ""

    def path(self, template: str) -> PathEntry | None:
        for entry in self.paths:
            if entry.template == template:
                return entry
        return None

    def operation(self, template: str, method: str) -> OperationEntry | None:
        entry = self.path(template)
        if entry is None:
            return None
        return entry.operations.get(method.upper())

    def iter_operations(self):
        for entry in self.paths:
            for method, op in entry.operations.items():
                yield entry.template, method, op


# ---------------------------------------------------------------------------
# loading


class _DupCheckingLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    keys = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in keys:
            raise _DuplicateKey(str(key))
        keys.add(key)
    return loader.construct_mapping(node, deep=deep)


_DupCheckingLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


class _DuplicateKey(Exception):
    pass


def _no_dup_pairs(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise _DuplicateKey(k)
        out[k] = v
    return out


def _decode(document: str, format: str) -> dict:
    try:
        if format == "json":
            doc = json.loads(document, object_pairs_hook=_no_dup_pairs)
        elif format in ("yaml", "yaml-subset"):
            doc = yaml.load(document, Loader=_DupCheckingLoader)
        else:
            raise ValueError(f"unknown document format {format!r}")
    except _DuplicateKey as exc:
        raise SpecReferenceError(f"duplicate key {exc.args[0]!r} in document") from None
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise SpecParseError(str(exc)) from exc
    if not isinstance(doc, dict):
        raise SpecParseError("document root must be an object")
    return doc


class _Resolver:
    def __init__(self, doc: dict):
        self.doc = doc

    def target(self, ref: str) -> Any:
        if not isinstance(ref, str) or not ref.startswith("#/"):
            raise SpecReferenceError(f"only local references are supported: {ref!r}")
        node: Any = self.doc
        for raw in ref[2:].split("/"):
            part = raw.replace("~1", "/").replace("~0", "~")
            if isinstance(node, dict) and part in node:
                node = node[part]
            else:
                raise SpecReferenceError(f"dangling reference {ref!r}")
        return node

    def deref(self, node: Any, _seen: tuple[str, ...] = ()) -> Any:
        while isinstance(node, dict) and "$ref" in node:
            ref = node["$ref"]
            if ref in _seen:
                raise SpecReferenceError(f"circular reference {ref!r}")
            _seen = _seen + (ref,)
            node = self.target(ref)
        return node


def _ref_name(node: Any) -> str | None:
    if isinstance(node, dict) and isinstance(node.get("$ref"), str):
        return node["$ref"].rsplit("/", 1)[-1]
    return None


def _check_refs(node: Any, resolver: _Resolver) -> None:
    # every $ref anywhere in the document must resolve locally
    if isinstance(node, dict):
        ref = node.get("$ref")
        if ref is not None:
            resolver.target(ref)
        for v in node.values():
            _check_refs(v, resolver)
    elif isinstance(node, list):
        for v in node:
            _check_refs(v, resolver)


def _dialect(doc: dict) -> str:
    if str(doc.get("swagger", "")) == "2.0":
        return "2.0"
    version = str(doc.get("openapi", ""))
    if re.match(r"^3\.\d+(\.\d+)?$", version):
        return version
    raise UnsupportedDialectError(
        f"expected 'swagger: 2.0' or 'openapi: 3.x', got {doc.get('openapi') or doc.get('swagger')!r}"
    )


def _value_kind(schema: dict, resolver: _Resolver) -> ValueKind:
    schema = resolver.deref(schema or {})
    if schema.get("type") == "array" and isinstance(schema.get("items"), dict):
        item = resolver.deref(schema["items"])
        return ValueKind(
            type="array",
            format=item.get("type"),
            enum=tuple(item["enum"]) if "enum" in item else None,
        )
    return ValueKind(
        type=str(schema.get("type", "string")),
        format=schema.get("format"),
        enum=tuple(schema["enum"]) if "enum" in schema else None,
        minimum=schema.get("minimum"),
        maximum=schema.get("maximum"),
    )


def _schema_fields(schema: Any, resolver: _Resolver) -> tuple[frozenset[str], str | None]:
    if not isinstance(schema, dict):
        return frozenset(), None
    name = _ref_name(schema)
    schema = resolver.deref(schema)
    if schema.get("type") == "array" and isinstance(schema.get("items"), dict):
        name = name or _ref_name(schema["items"])
        schema = resolver.deref(schema["items"])
    props = schema.get("properties") or {}
    return frozenset(props), name


def _parameters(raw: list, resolver: _Resolver, dialect: str) -> tuple[list[ParameterEntry], list[dict]]:
    """Split raw parameter objects into named parameters and 2.0 body params."""
    params: list[ParameterEntry] = []
    bodies: list[dict] = []
    for item in raw or []:
        p = resolver.deref(item)
        loc = p.get("in")
        if loc == "body":
            bodies.append(p)
            continue
        if loc == "formData":
            loc = "form"
        if loc not in PARAM_LOCATIONS:
            # cookie parameters are outside the model
            continue
        kind_src = p.get("schema", p) if dialect != "2.0" else p
        params.append(
            ParameterEntry(
                name=str(p["name"]),
                location=loc,
                required=True if loc == "path" else bool(p.get("required", False)),
                value_kind=_value_kind(kind_src, resolver),
            )
        )
    return params, bodies


def _merge_params(path_level: list[ParameterEntry], op_level: list[ParameterEntry]) -> tuple[ParameterEntry, ...]:
    merged: dict[tuple[str, str], ParameterEntry] = {}
    for p in path_level + op_level:
        merged[(p.location, p.name)] = p
    return tuple(merged.values())


def _status(code: Any) -> int | None:
    text = str(code)
    if not re.fullmatch(r"\d{3}", text):
        # 'default' and range keys like '4XX' carry no concrete status
        return None
    value = int(text)
    if not 100 <= value <= 599:
        raise SpecParseError(f"status code {value} outside 100..599")
    return value


def _operation(
    method: str,
    raw: dict,
    path_params: list[ParameterEntry],
    doc: dict,
    resolver: _Resolver,
    dialect: str,
) -> OperationEntry:
    own, bodies = _parameters(raw.get("parameters", []), resolver, dialect)
    params = _merge_params(path_params, own)
    request_types: tuple[str, ...] = ()
    request_schema = None
    request_schemas: dict[str, str] = {}
    responses: dict[int, ResponseEntry] = {}
    if dialect == "2.0":
        consumes = tuple(raw.get("consumes", doc.get("consumes", ())))
        produces = tuple(raw.get("produces", doc.get("produces", ())))
        has_form = any(p.location == "form" for p in params)
        if bodies:
            request_types = consumes or ("application/json",)
            request_schema = _ref_name(bodies[0].get("schema"))
            if request_schema:
                request_schemas = {ct: request_schema for ct in request_types}
        elif has_form:
            request_types = consumes or ("application/x-www-form-urlencoded",)
        for code, resp in (raw.get("responses") or {}).items():
            status = _status(code)
            if status is None:
                continue
            resp = resolver.deref(resp)
            schema = resp.get("schema")
            fields, name = _schema_fields(schema, resolver)
            responses[status] = ResponseEntry(
                status=status,
                description=str(resp.get("description", "")),
                content_types=produces if schema is not None else (),
                fields=fields,
                schema_name=name,
            )
    else:
        body = raw.get("requestBody")
        if body is not None:
            body = resolver.deref(body)
            content = body.get("content") or {}
            request_types = tuple(content)
            for ct, media in content.items():
                name = _ref_name((media or {}).get("schema"))
                if name:
                    request_schemas[ct] = name
            request_schema = next(iter(request_schemas.values()), None)
        for code, resp in (raw.get("responses") or {}).items():
            status = _status(code)
            if status is None:
                continue
            resp = resolver.deref(resp)
            content = resp.get("content") or {}
            fields: frozenset[str] = frozenset()
            name = None
            for media in content.values():
                fields, name = _schema_fields((media or {}).get("schema"), resolver)
                if fields or name:
                    break
            responses[status] = ResponseEntry(
                status=status,
                description=str(resp.get("description", "")),
                content_types=tuple(content),
                fields=fields,
                schema_name=name,
            )
    if method not in BODY_METHODS:
        request_types = ()
        request_schemas = {}
    seen: set[tuple[str, str]] = set()
    for p in params:
        if (p.name, p.location) in seen:
            raise SpecParseError(f"duplicate parameter {p.name!r} in {p.location}")
        seen.add((p.name, p.location))
    return OperationEntry(
        method=method,
        parameters=params,
        request_types=request_types,
        responses=responses,
        operation_id=raw.get("operationId"),
        request_schema=request_schema,
        summary=str(raw.get("summary", "")),
        request_schemas=request_schemas,
    )


def _kind_of(prop: dict, resolver: _Resolver) -> str:
    ref = _ref_name(prop)
    if ref:
        return ref
    prop = resolver.deref(prop)
    if "enum" in prop:
        return "enum"
    if prop.get("type") == "array":
        items = prop.get("items") or {}
        return f"array<{_ref_name(items) or resolver.deref(items).get('type', 'any')}>"
    return str(prop.get("format") or prop.get("type") or "any")


def _definition(name: str, raw: dict, resolver: _Resolver) -> SchemaDigest:
    raw = resolver.deref(raw)
    required = set(raw.get("required") or ())
    props = []
    examples: dict[str, Any] = {}
    for pname, prop in (raw.get("properties") or {}).items():
        resolved = resolver.deref(prop)
        constraints = {}
        for key in ("enum", "minimum", "maximum", "minLength", "maxLength", "pattern"):
            if key in resolved:
                constraints[key] = resolved[key]
        if "format" in resolved and "enum" in resolved:
            constraints["format"] = resolved["format"]
        if "example" in resolved:
            examples[pname] = resolved["example"]
        props.append(
            PropertyDigest(
                name=pname,
                kind=_kind_of(prop, resolver),
                required=pname in required,
                constraints=constraints,
            )
        )
    digest = SchemaDigest(name=name, properties=tuple(props), example_values=examples or None)
    return SchemaDigest(
        name=digest.name,
        properties=digest.properties,
        example_values=digest.example_values,
        text=_definition_text(digest),
    )


def _normalized_template(template: str) -> str:
    return _TEMPLATE_VAR.sub("{}", template)


def load_spec(document: str | bytes, format: str = "json") -> SpecIndex:
    """Parse an OpenAPI document into a :class:`SpecIndex`.

    Raises:
        SpecParseError: malformed document.
        SpecReferenceError: dangling/remote ``$ref`` or duplicate path template.
        UnsupportedDialectError: neither Swagger 2.0 nor OpenAPI 3.x.
    """
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    doc = _decode(document, format)
    dialect = _dialect(doc)
    resolver = _Resolver(doc)
    _check_refs(doc, resolver)

    raw_paths = doc.get("paths") or {}
    if not isinstance(raw_paths, dict):
        raise SpecParseError("'paths' must be an object")
    entries: list[PathEntry] = []
    seen_shapes: dict[str, str] = {}
    for template, item in raw_paths.items():
        if not template.startswith("/"):
            raise SpecParseError(f"path template {template!r} must begin with '/'")
        shape = _normalized_template(template)
        if shape in seen_shapes:
            raise SpecReferenceError(
                f"duplicate path template {template!r} (clashes with {seen_shapes[shape]!r})"
            )
        seen_shapes[shape] = template
        item = resolver.deref(item or {})
        path_params, _ = _parameters(item.get("parameters", []), resolver, dialect)
        ops: dict[str, OperationEntry] = {}
        for method in HTTP_METHODS:
            if method in item:
                ops[method.upper()] = _operation(
                    method.upper(), resolver.deref(item[method]), path_params, doc, resolver, dialect
                )
        entries.append(PathEntry(template=template, operations=ops))

    raw_defs = doc.get("definitions") if dialect == "2.0" else (doc.get("components") or {}).get("schemas")
    definitions = {name: _definition(name, raw, resolver) for name, raw in (raw_defs or {}).items()}
    title = str((doc.get("info") or {}).get("title", ""))
    return SpecIndex(paths=tuple(entries), definitions=definitions, source_version=dialect, title=title)


def load_spec_file(path: str | Path) -> SpecIndex:
    path = Path(path)
    fmt = "yaml" if path.suffix in (".yaml", ".yml") else "json"
    return load_spec(path.read_text(encoding="utf-8"), fmt)


# ---------------------------------------------------------------------------
# retrieval


def list_paths(index: SpecIndex) -> list[str]:
    return [entry.template for entry in index.paths]


def _num(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else str(value)


def _truncate(text: str, budget: int) -> str:
    if len(text) <= budget:
        return text
    marker = f"\n...[truncated {len(text) - budget} chars]"
    return text[: max(0, budget - len(marker))] + marker


def _operation_text(op: OperationEntry) -> list[str]:
    head = op.method
    if op.operation_id:
        head += f" (operationId: {op.operation_id})"
    if op.summary:
        head += f" - {op.summary}"
    lines = [head]
    if op.parameters:
        lines.append("  parameters:")
        for p in op.parameters:
            req = "required" if p.required else "optional"
            lines.append(f"    - {p.name} ({p.location}, {req}): {p.value_kind.describe()}")
    else:
        lines.append("  parameters: none")
    if op.request_types:
        kinds = [
            f"{ct} ({op.request_schemas[ct]})" if ct in op.request_schemas else ct for ct in op.request_types
        ]
        lines.append(f"  request types: {', '.join(kinds)}")
    lines.append("  responses:")
    for status in sorted(op.responses):
        resp = op.responses[status]
        line = f"    {status}: {resp.description}"
        if resp.content_types:
            line += f" [{', '.join(resp.content_types)}]"
        if resp.schema_name:
            line += f" schema: {resp.schema_name}"
        lines.append(line)
    return lines


def describe_endpoint(index: SpecIndex, path: str, budget: int = DEFAULT_DIGEST_BUDGET) -> EndpointDigest:
    """Summarize every operation on ``path``.

    An unknown path is not an exception: the returned digest has
    ``found=False`` and a message suitable as tool output.
    """
    entry = index.path(path)
    if entry is None:
        known = ", ".join(list_paths(index)) or "(none)"
        return EndpointDigest(
            path=path,
            operations=(),
            text=f"Unknown endpoint {path!r}. Known endpoints: {known}",
            found=False,
        )
    lines = [f"ENDPOINT {entry.template}"]
    for op in entry.operations.values():
        lines.extend(_operation_text(op))
    return EndpointDigest(
        path=path,
        operations=tuple(entry.operations.values()),
        text=_truncate("\n".join(lines), budget),
    )


def _definition_text(digest: SchemaDigest) -> str:
    lines = [f"DEFINITION {digest.name}"]
    for p in digest.properties:
        line = f"  - {p.name}: {p.kind}"
        if p.required:
            line += " (required)"
        if p.constraints:
            parts = []
            for key, value in p.constraints.items():
                if isinstance(value, list):
                    value = "|".join(str(v) for v in value)
                parts.append(f"{key}={value}")
            line += " [" + ", ".join(parts) + "]"
        lines.append(line)
    if digest.example_values:
        ex = ", ".join(f"{k}={json.dumps(v)}" for k, v in digest.example_values.items())
        lines.append(f"  example: {ex}")
    return "\n".join(lines)


def describe_definition(index: SpecIndex, name: str, budget: int = DEFAULT_DIGEST_BUDGET) -> SchemaDigest:
    digest = index.definitions.get(name)
    if digest is None:
        known = ", ".join(index.definitions) or "(none)"
        return SchemaDigest(
            name=name,
            properties=(),
            found=False,
            text=f"Definition {name!r} not found. Known definitions: {known}",
        )
    if len(digest.text) <= budget:
        return digest
    return SchemaDigest(
        name=digest.name,
        properties=digest.properties,
        example_values=digest.example_values,
        text=_truncate(digest.text, budget),
    )


def retrieve(index: SpecIndex, query: str, budget: int = DEFAULT_DIGEST_BUDGET) -> str:
    """Text form used by the retriever tool: '/...' is an endpoint, anything else a definition."""
    query = query.strip()
    if query.startswith("/"):
        return describe_endpoint(index, query, budget).text
    return describe_definition(index, query, budget).text


def template_variables(template: str) -> list[str]:
    return _TEMPLATE_VAR.findall(template)
