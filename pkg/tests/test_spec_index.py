from __future__ import annotations

import json
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restamp.spec_index import (
    DEFAULT_DIGEST_BUDGET,
    SpecParseError,
    SpecReferenceError,
    UnsupportedDialectError,
    describe_definition,
    describe_endpoint,
    list_paths,
    load_spec,
    retrieve,
)

SWAGGER_YAML = """
swagger: "2.0"
info: {title: tiny, version: "1"}
consumes: [application/json]
produces: [application/json, application/xml]
paths:
  /pet:
    post:
      operationId: addPet
      parameters:
        - in: body
          name: body
          required: true
          schema: {$ref: "#/definitions/Pet"}
      responses:
        "200": {description: ok, schema: {$ref: "#/definitions/Pet"}}
        "405": {description: Invalid input}
  /pet/{petId}/uploadImage:
    post:
      consumes: [multipart/form-data]
      parameters:
        - {in: path, name: petId, type: integer, required: true}
        - {in: formData, name: additionalMetadata, type: string}
        - {in: formData, name: file, type: file}
      responses:
        "200": {description: ok}
  /pet/findByStatus:
    get:
      parameters:
        - in: query
          name: status
          type: array
          items: {type: string, enum: [available, pending, sold]}
        - {in: header, name: api_key, type: string}
      responses:
        "200": {description: ok}
        default: {description: anything else}
definitions:
  Pet:
    type: object
    required: [name]
    properties:
      id: {type: integer, format: int64}
      name: {type: string, example: doggie}
"""


def _doc(**paths) -> str:
    return json.dumps({"openapi": "3.0.3", "info": {"title": "t", "version": "1"}, "paths": paths})


class TestLoadMinipet:
    def test_three_paths_five_operations(self, index):
        assert len(index.paths) == 3
        assert sum(len(p.operations) for p in index.paths) == 5
        assert index.source_version == "3.0.3"

    def test_list_paths_in_document_order(self, index):
        assert list_paths(index) == ["/pets", "/pets/{id}", "/user/login"]

    def test_loading_twice_is_identical(self, fixtures_dir):
        text = (fixtures_dir / "minipet.json").read_text()
        assert load_spec(text) == load_spec(text)
        assert list_paths(load_spec(text)) == list_paths(load_spec(text))

    def test_path_parameters_are_required(self, index):
        for template, method, op in index.iter_operations():
            for p in op.parameters:
                if p.location == "path":
                    assert p.required, (template, method, p.name)

    def test_request_types_only_on_body_methods(self, index):
        for _, method, op in index.iter_operations():
            if method not in ("POST", "PUT", "PATCH"):
                assert op.request_types == ()
        assert index.operation("/pets", "POST").request_types == (
            "application/json",
            "application/xml",
            "multipart/form-data",
        )

    def test_login_documents_bad_credentials(self, index):
        op = index.operation("/user/login", "GET")
        assert op.responses[400].description == "Invalid username/password supplied"


class TestLoadErrors:
    def test_malformed_json(self):
        with pytest.raises(SpecParseError):
            load_spec("{not json")

    def test_duplicate_path_template(self):
        text = '{"openapi": "3.0.0", "paths": {"/a": {}, "/a": {}}}'
        with pytest.raises(SpecReferenceError):
            load_spec(text)

    def test_templates_differing_only_in_variable_names_clash(self):
        with pytest.raises(SpecReferenceError):
            load_spec(_doc(**{"/a/{x}": {}, "/a/{y}": {}}))

    def test_dangling_ref(self):
        doc = _doc(**{"/a": {"get": {"responses": {"200": {"$ref": "#/components/responses/Nope"}}}}})
        with pytest.raises(SpecReferenceError, match="dangling"):
            load_spec(doc)

    def test_remote_ref_rejected(self):
        doc = _doc(**{"/a": {"get": {"responses": {"200": {"$ref": "http://example.com/x.json"}}}}})
        with pytest.raises(SpecReferenceError, match="local"):
            load_spec(doc)

    def test_unsupported_dialect(self):
        with pytest.raises(UnsupportedDialectError):
            load_spec('{"openapi": "1.2", "paths": {}}')

    def test_empty_paths_is_valid(self):
        index = load_spec(_doc())
        assert index.paths == ()
        assert list_paths(index) == []


@pytest.fixture(scope="module")
def swagger():
    return load_spec(SWAGGER_YAML, "yaml-subset")


class TestSwaggerNormalisation:
    def test_consumes_and_produces(self, swagger):
        op = swagger.operation("/pet", "POST")
        assert op.request_types == ("application/json",)
        assert op.responses[200].content_types == ("application/json", "application/xml")
        assert op.responses[405].content_types == ()
        assert op.request_schemas == {"application/json": "Pet"}

    def test_form_data_becomes_form_parameters(self, swagger):
        op = swagger.operation("/pet/{petId}/uploadImage", "POST")
        assert op.request_types == ("multipart/form-data",)
        assert {(p.name, p.location) for p in op.parameters} == {
            ("petId", "path"),
            ("additionalMetadata", "form"),
            ("file", "form"),
        }

    def test_default_response_is_skipped(self, swagger):
        op = swagger.operation("/pet/findByStatus", "GET")
        assert set(op.responses) == {200}
        assert op.parameter("status", "query").value_kind.enum == ("available", "pending", "sold")

    def test_definitions_from_swagger(self, swagger):
        pet = describe_definition(swagger, "Pet")
        assert pet.found
        assert pet.example_values == {"name": "doggie"}


class TestDescribeEndpoint:
    def test_pets_by_id(self, index):
        digest = describe_endpoint(index, "/pets/{id}")
        assert digest.found
        assert [op.method for op in digest.operations] == ["GET", "DELETE"]
        for op in digest.operations:
            assert set(op.responses) == {200, 400, 404}
            (param,) = op.parameters
            assert (param.name, param.location, param.required) == ("id", "path", True)
        assert "- id (path, required): integer int64 (min=1)" in digest.text

    def test_unknown_path_is_a_message(self, index):
        digest = describe_endpoint(index, "/nope")
        assert not digest.found
        assert "Unknown endpoint '/nope'" in digest.text
        assert "/pets/{id}" in digest.text

    def test_login_mentions_documented_400(self, index):
        assert "400: Invalid username/password supplied" in describe_endpoint(index, "/user/login").text

    def test_every_listed_path_describes(self, index):
        for path in list_paths(index):
            assert describe_endpoint(index, path).found

    def test_digest_values_exist_in_source(self, index, minipet_doc):
        source = json.dumps(minipet_doc)
        for path in list_paths(index):
            text = describe_endpoint(index, path).text
            for status in re.findall(r"^\s+(\d{3}):", text, re.MULTILINE):
                assert f'"{status}"' in source
            for ctype in re.findall(r"\b(?:application|multipart|text)/[a-z+-]+", text):
                assert f'"{ctype}"' in source
            for name in re.findall(r"^\s+- (\w+) \(", text, re.MULTILINE):
                assert f'"name": "{name}"' in source

    def test_truncation_marker(self, index):
        digest = describe_endpoint(index, "/pets", budget=120)
        assert len(digest.text) <= 120
        assert re.search(r"\.\.\.\[truncated \d+ chars\]$", digest.text)
        assert len(describe_endpoint(index, "/pets").text) <= DEFAULT_DIGEST_BUDGET


class TestDescribeDefinition:
    def test_pet(self, index):
        pet = describe_definition(index, "Pet")
        props = {p.name: p for p in pet.properties}
        assert set(props) == {"id", "name", "status"}
        assert props["id"].kind == "int64"
        assert props["name"].kind == "string" and props["name"].required
        assert props["status"].constraints["enum"] == ["available", "pending", "sold"]

    def test_user_has_credentials(self, index):
        names = describe_definition(index, "User").property_names()
        assert {"username", "password"} <= set(names)

    @pytest.mark.parametrize("name", ["", "Order"])
    def test_not_found_message(self, index, name):
        digest = describe_definition(index, name)
        assert not digest.found
        assert "not found" in digest.text


def test_retrieve_dispatches_on_slash(index):
    assert retrieve(index, " /pets ").startswith("ENDPOINT /pets")
    assert retrieve(index, "Session").startswith("DEFINITION Session")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.from_regex(r"/[a-z]{1,6}(/\{[a-z]{1,4}\})?", fullmatch=True), unique=True, max_size=6))
def test_load_is_deterministic_and_ordered(templates):
    shapes = {re.sub(r"\{[^}]+\}", "{}", t) for t in templates}
    doc = _doc(**{t: {"get": {"responses": {"200": {"description": "ok"}}}} for t in templates})
    if len(shapes) < len(templates):
        with pytest.raises(SpecReferenceError):
            load_spec(doc)
        return
    assert list_paths(load_spec(doc)) == templates
    assert load_spec(doc) == load_spec(doc)
