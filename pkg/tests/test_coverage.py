from __future__ import annotations

import pytest
from hypothesis import HealthCheck, given, settings
from oracles import half_up_percent, oracle_coverage
from strategies import interaction_logs

from restamp.coverage import (
    METRICS,
    CoverageMismatchError,
    CoverageReport,
    compute_coverage,
    diff_coverage,
    documented_targets,
    percent,
    render_table,
)
from restamp.runner import InteractionLog, InteractionRecord
from restamp.spec_index import load_spec

DENOMINATORS = {
    "path": 3,
    "operation": 5,
    "status_class": 9,
    "status": 11,
    "response_type": 8,
    "request_type": 3,
    "parameter": 5,
}


def _rec(seq, method, url, status, *, resp="application/json", req=None, params=None) -> InteractionRecord:
    return InteractionRecord(seq, method, "", url, status, req, resp, params or {}, "0" * 64, "testX", 0)


def _log(*records: InteractionRecord) -> InteractionLog:
    return InteractionLog("t", list(records))


def _pairs(report: CoverageReport) -> dict[str, tuple[int, int]]:
    return {m: (report.metrics[m].covered, report.metrics[m].total) for m in METRICS}


def test_minipet_denominators(index):
    assert {m: len(v) for m, v in documented_targets(index).items()} == DENOMINATORS


def test_empty_log(index):
    report = compute_coverage(index, _log())
    assert _pairs(report) == {m: (0, t) for m, t in DENOMINATORS.items()}
    assert report.undocumented == ()


def test_two_record_example(index, minipet_doc):
    log = _log(
        _rec(1, "GET", "/pets", 200),
        _rec(2, "GET", "/user/login?username=a&password=b", 200, params={"query": ["username", "password"]}),
    )
    report = compute_coverage(index, log)
    # frozen from the brute-force oracle
    expected = {
        "path": (2, 3),
        "operation": (2, 5),
        "status_class": (2, 9),
        "status": (2, 11),
        "response_type": (2, 8),
        "request_type": (0, 3),
        "parameter": (2, 5),
    }
    assert oracle_coverage(minipet_doc, log.records) == expected
    assert _pairs(report) == expected


def test_saturation(index):
    records = []
    for template, method, op in index.iter_operations():
        url = template.replace("{id}", "1")
        supplied: dict[str, list[str]] = {}
        for p in op.parameters:
            if p.location != "path":
                supplied.setdefault(p.location, []).append(p.name)
        for status, resp in op.responses.items():
            for ct in resp.content_types or (None,):
                for req in op.request_types or (None,):
                    records.append(_rec(len(records) + 1, method, url, status, resp=ct, req=req, params=supplied))
    report = compute_coverage(index, _log(*records))
    assert all(report.ratio(m) == 1.0 for m in METRICS)
    assert report.undocumented == ()


def test_undocumented_status_is_diverted(index):
    report = compute_coverage(index, _log(_rec(1, "GET", "/pets", 500, resp="text/plain")))
    assert _pairs(report)["path"] == (0, 3)
    assert [(u.kind, u.value) for u in report.undocumented] == [("status", "500")]


def test_undocumented_media_type_still_counts_status(index):
    report = compute_coverage(index, _log(_rec(1, "GET", "/pets", 200, resp="text/csv")))
    assert _pairs(report)["status"] == (1, 11)
    assert _pairs(report)["response_type"] == (0, 8)
    assert [(u.kind, u.value) for u in report.undocumented] == [("response_type", "text/csv")]


def test_unmatched_path_and_method(index):
    report = compute_coverage(index, _log(_rec(1, "GET", "/nope", 200), _rec(2, "PUT", "/pets", 200)))
    assert [u.kind for u in report.undocumented] == ["path", "operation"]
    assert all(report.metrics[m].covered == 0 for m in METRICS)


def test_header_parameters_case_insensitive():
    doc = """{"openapi": "3.0.0", "paths": {"/a": {"get": {
        "parameters": [{"in": "header", "name": "api_key", "schema": {"type": "string"}}],
        "responses": {"200": {"description": "ok"}}}}}}"""
    idx = load_spec(doc)
    report = compute_coverage(idx, _log(_rec(1, "GET", "/a", 200, resp=None, params={"header": ["API_KEY"]})))
    assert _pairs(report)["parameter"] == (1, 1)


def test_multiple_logs_equal_concatenation(index):
    a = _log(_rec(1, "GET", "/pets", 200))
    b = _log(_rec(1, "DELETE", "/pets/3", 404))
    joined = _log(_rec(1, "GET", "/pets", 200), _rec(2, "DELETE", "/pets/3", 404))
    assert compute_coverage(index, [a, b]) == compute_coverage(index, joined)


def test_json_round_trip(index):
    report = compute_coverage(index, _log(_rec(1, "GET", "/pets", 418)))
    assert CoverageReport.from_dict(report.to_dict()) == report


class TestPercent:
    @pytest.mark.parametrize(("c", "t", "expected"), [(0, 3, 0), (1, 3, 33), (2, 3, 67), (1, 8, 13), (3, 8, 38), (0, 0, 100)])
    def test_half_up(self, c, t, expected):
        assert percent(c, t) == expected == half_up_percent(c, t)

    def test_table_marks_vacuous(self):
        idx = load_spec('{"openapi": "3.0.0", "paths": {}}')
        text = render_table({"Run": compute_coverage(idx, _log())})
        assert "100% (0/0)*" in text
        assert "vacuous" in text


class TestDiff:
    def test_identical_is_zero(self, index):
        r = compute_coverage(index, _log(_rec(1, "GET", "/pets", 200)))
        assert diff_coverage(r, r) == {m: 0.0 for m in METRICS}

    def test_path_delta(self, index):
        before = compute_coverage(index, _log())
        after = compute_coverage(
            index,
            _log(_rec(1, "GET", "/pets", 200), _rec(2, "GET", "/pets/1", 200), _rec(3, "GET", "/user/login", 200)),
        )
        assert diff_coverage(before, after)["path"] == 1.0

    def test_different_specs(self, index):
        other = load_spec('{"openapi": "3.0.0", "paths": {"/a": {}}}')
        with pytest.raises(CoverageMismatchError):
            diff_coverage(compute_coverage(index, _log()), compute_coverage(other, _log()))


_SETTINGS = settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])


@_SETTINGS
@given(interaction_logs())
def test_matches_oracle(index, minipet_doc, log):
    assert _pairs(compute_coverage(index, log)) == oracle_coverage(minipet_doc, log.records)


@_SETTINGS
@given(interaction_logs(), interaction_logs())
def test_append_is_monotone(index, log, extra):
    before = compute_coverage(index, log)
    combined = InteractionLog("t", log.records + [r for r in extra.records])
    after = compute_coverage(index, [combined])
    for m in METRICS:
        assert after.metrics[m].covered >= before.metrics[m].covered


@_SETTINGS
@given(interaction_logs())
def test_duplication_is_idempotent(index, log):
    assert _pairs(compute_coverage(index, [log, log])) == _pairs(compute_coverage(index, log))


@_SETTINGS
@given(interaction_logs())
def test_undocumented_records_change_nothing(index, log):
    report = compute_coverage(index, log)
    kept = []
    for rec in log.records:
        alone = compute_coverage(index, _log(rec))
        if not any(u.kind in ("path", "operation", "status") for u in alone.undocumented):
            kept.append(rec)
    assert _pairs(compute_coverage(index, _log(*kept))) == _pairs(report)
