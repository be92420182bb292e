from __future__ import annotations

import socket

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from restamp.dsl import Assertion, Body, TestCase, TestStep, TestSuite, parse_suite, serialize_suite
from restamp.runner import (
    UNMATCHED,
    AssertionFailure,
    CaseResult,
    ExecutionReport,
    InteractionLog,
    InteractionRecord,
    ParsedBody,
    RunOptions,
    StepFault,
    match_path,
    merge_logs,
    run_suite,
    template_bindings,
)


def _suite(*cases: TestCase, base=None) -> TestSuite:
    return TestSuite("s", cases, base if base is not None else {"Accept": "application/json"})


def _status(code: int) -> Assertion:
    return Assertion("status_equals", code)


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestMatchPath:
    @pytest.mark.parametrize(
        ("url", "expected"),
        [
            ("/pets/42", "/pets/{id}"),
            ("/pets", "/pets"),
            ("/pets/", "/pets"),
            ("/pets?status=sold", "/pets"),
            ("http://host:1/pets/7?x=1", "/pets/{id}"),
            ("/unknown/thing", UNMATCHED),
            ("/pets/1/photo", UNMATCHED),
            ("/user/login", "/user/login"),
        ],
    )
    def test_examples(self, index, url, expected):
        assert match_path(index, "GET", url) == expected

    def test_literal_segments_win(self):
        from restamp.spec_index import load_spec

        doc = '{"openapi": "3.0.0", "paths": {"/u/{name}": {}, "/u/login": {}, "/{a}/{b}": {}}}'
        idx = load_spec(doc)
        assert match_path(idx, "GET", "/u/login") == "/u/login"
        assert match_path(idx, "GET", "/u/bob") == "/u/{name}"
        assert match_path(idx, "GET", "/x/y") == "/{a}/{b}"

    def test_bindings(self):
        assert template_bindings("/pets/{id}", "/pets/9?x=1") == {"id": "9"}


class TestRunAgainstDemo:
    def test_seed_suite(self, demo, index, seed):
        report, log = run_suite(seed, demo.url, index=index)
        assert report.totals == {"passed": 1, "failed": 0, "errored": 0}
        (rec,) = log.records
        assert (rec.method, rec.template, rec.status, rec.response_content_type) == ("GET", "/pets", 200, "application/json")
        assert rec.url == "/pets?status=available"
        assert rec.params["query"] == ["status"]

    def test_bad_password_against_login_bug(self, login_bug, index):
        step = TestStep("GET", "/user/login", query_params={"username": "theUser", "password": "nope"}, assertions=(_status(400),))
        report, _ = run_suite(_suite(TestCase("testLoginWithInvalidPassword", (step,))), login_bug.url, index=index)
        (result,) = report.results
        assert result.verdict == "failed"
        assert result.failures == (AssertionFailure(0, "status_equals", 400, 200),)

    def test_unreachable_target(self, seed):
        report, log = run_suite(seed, f"http://127.0.0.1:{_free_port()}", RunOptions(timeout=1))
        assert [r.verdict for r in report.results] == ["errored"]
        assert report.results[0].failures == ()
        assert "connection fault" in report.results[0].fault
        assert len(log) == 0

    def test_capture_then_use(self, demo, index):
        steps = (
            TestStep("POST", "/pets", body=Body("application/json", '{"name": "rex"}'), captures={"id": "id", "petName": "name"}),
            TestStep(
                "GET",
                "/pets/{id}",
                headers={"X-Echo": "{{petName}}"},
                assertions=(_status(200), Assertion("body_field_equals", "rex", "name")),
            ),
        )
        report, log = run_suite(_suite(TestCase("testCreateThenGet", steps)), demo.url, index=index)
        assert report.totals["passed"] == 1
        assert [r.template for r in log.records] == ["/pets", "/pets/{id}"]
        assert log.records[1].url == "/pets/4"

    def test_unresolvable_capture_errors_case(self, demo):
        steps = (
            TestStep("GET", "/pets", captures={"petId": "0.missing"}),
            TestStep("GET", "/pets", assertions=(_status(200),)),
        )
        report, log = run_suite(_suite(TestCase("testBadCapture", steps)), demo.url)
        (result,) = report.results
        assert (result.verdict, result.step) == ("errored", 0)
        assert result.failures == ()
        assert len(log) == 1

    def test_stops_at_first_failing_step(self, demo):
        steps = (
            TestStep("GET", "/pets/999", assertions=(_status(200),)),
            TestStep("GET", "/pets", assertions=(_status(200),)),
        )
        report, log = run_suite(_suite(TestCase("testStops", steps)), demo.url)
        assert report.results[0].step == 0
        assert len(log) == 1

    def test_xml_body_selectors(self, demo):
        step = TestStep(
            "GET",
            "/pets/1",
            headers={"Accept": "application/xml"},
            assertions=(
                Assertion("content_type_equals", "application/xml"),
                Assertion("body_field_equals", "doggie", "name"),
                Assertion("body_field_exists", False, "owner"),
            ),
        )
        report, _ = run_suite(_suite(TestCase("testXmlPet", (step,))), demo.url)
        assert report.totals["passed"] == 1, report.render()

    def test_multipart_upload(self, demo, index, assets_dir):
        step = TestStep(
            "POST",
            "/pets",
            form_params={"name": "snap"},
            body=Body("multipart/form-data", file="pet.png", field="photo"),
            assertions=(_status(200), Assertion("body_field_equals", "snap", "name")),
        )
        report, log = run_suite(_suite(TestCase("testUpload", (step,))), demo.url, index=index, asset_dir=assets_dir)
        assert report.totals["passed"] == 1, report.render()
        rec = log.records[0]
        assert rec.request_content_type == "multipart/form-data"
        assert rec.params["form"] == ["name", "photo"]

    def test_header_and_class_assertions(self, demo):
        step = TestStep(
            "GET",
            "/pets",
            assertions=(
                Assertion("status_class_equals", "2xx"),
                Assertion("header_contains", "Content-Type: json"),
                Assertion("header_contains", "X-Missing: x"),
            ),
        )
        report, _ = run_suite(_suite(TestCase("testHeaders", (step,))), demo.url)
        (result,) = report.results
        assert [f.kind for f in result.failures] == ["header_contains"]

    def test_malformed_json_body_errors(self, demo):
        step = TestStep("DELETE", "/pets/2", headers={}, assertions=(Assertion("body_field_exists", True, "id"),))
        report, _ = run_suite(_suite(TestCase("testBodyless", (step,))), demo.url)
        assert report.results[0].verdict in ("failed", "errored")

    def test_runner_does_not_mutate_suite(self, demo, seed):
        before = serialize_suite(seed)
        run_suite(seed, demo.url)
        assert serialize_suite(seed) == before


class TestReport:
    def test_totals_and_round_trip(self):
        report = ExecutionReport(
            (
                CaseResult("testA", "passed", duration_ms=3.0),
                CaseResult("testB", "failed", (AssertionFailure(0, "status_equals", 400, 200),), step=0),
                CaseResult("testC", "errored", fault="boom", step=1),
            )
        )
        assert report.totals == {"passed": 1, "failed": 1, "errored": 1}
        assert "duration_ms" not in str(report.to_dict())
        back = ExecutionReport.from_dict(report.to_dict())
        assert back.to_dict() == report.to_dict()
        text = report.render()
        assert "FAIL testB: step 0 status_equals expected 400 got 200" in text
        assert "ERROR testC: step 1: boom" in text


class TestLog:
    def _record(self, seq: int, status: int = 200) -> InteractionRecord:
        return InteractionRecord(seq, "GET", "/pets", "/pets", status, None, "application/json", {}, "0" * 64, "testA", 0)

    def test_sequence_must_increase(self):
        log = InteractionLog("t", [])
        log.append(self._record(1))
        with pytest.raises(ValueError):
            log.append(self._record(1))

    def test_status_range(self):
        with pytest.raises(ValueError):
            InteractionLog("t").append(self._record(1, status=99))

    def test_jsonl_round_trip(self, tmp_path):
        log = InteractionLog("demo", [self._record(1), self._record(2, 404)])
        path = tmp_path / "log.jsonl"
        log.write(path)
        assert InteractionLog.read(path) == log
        assert path.read_text().splitlines()[0] == '{"format": "restamp-interactions/1", "target": "demo"}'

    def test_merge_renumbers(self):
        a = InteractionLog("t", [self._record(1), self._record(2)])
        b = InteractionLog("t", [self._record(1)])
        assert [r.seq for r in merge_logs([a, b]).records] == [1, 2, 3]


class TestParsedBody:
    def test_json_selectors(self):
        body = ParsedBody(b'{"items": [{"id": 3}], "ok": true}', "application/json")
        assert body.select("items.0.id") == 3
        assert body.select("ok") is True

    def test_malformed_json(self):
        with pytest.raises(StepFault):
            ParsedBody(b"{", "application/json").select("a")


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    st.lists(
        st.tuples(
            st.sampled_from(["GET", "DELETE", "POST"]),
            st.sampled_from(["/pets", "/pets/1", "/pets/abc", "/user/login", "/nope"]),
            st.sampled_from([200, 400, 404]),
        ),
        min_size=1,
        max_size=6,
    )
)
def test_one_record_per_attempted_step(demo, index, plan):
    cases = []
    for i, (method, path, code) in enumerate(plan):
        cases.append(TestCase(f"testStep{i}", (TestStep(method, path, assertions=(_status(code),)),), "d"))
    suite = parse_suite(serialize_suite(_suite(*cases)))
    first, log1 = run_suite(suite, demo.url, index=index)
    assert len(log1) == len(plan)
    assert [r.seq for r in log1.records] == list(range(1, len(plan) + 1))
