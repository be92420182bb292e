"""Command-line entry point: ``restamp <command> ...``.

Exit codes: 0 success (warnings may be printed), 1 the executed suite has
failing or errored cases (``run`` only), 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Iterator

from . import __version__
from .coverage import compute_coverage, render_table
from .demo_target import FAULTS, DemoTarget, load_fault_config
from .dsl import SuiteError, load_suite_file, serialize_suite
from .llm import ConfigurationError, Gateway, RecordingBackend, RemoteBackend, ReplayBackend
from .reporting import ReportError, build_report, render_report
from .runner import ExecutionReport, InteractionLog, RunOptions, run_suite
from .spec_index import SpecError, load_spec_file
from .triage import TriageError, apply_overrides, classify, counts, labels_to_json, load_overrides, TITLES, LABELS
from .workflows import MODES, Limits, amplify

log = logging.getLogger("restamp")

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2

DEMO = "demo"
DEMO_LABEL = "demo-target"


class UsageError(Exception):
    """A configuration or input problem; reported and mapped to exit code 2."""


def fixtures_dir() -> Path:
    return Path(str(resources.files("restamp") / "fixtures"))


def _spec(path: str):
    try:
        return load_spec_file(path)
    except FileNotFoundError:
        raise UsageError(f"spec file not found: {path}") from None
    except (OSError, SpecError) as exc:
        raise UsageError(f"cannot load spec {path}: {exc}") from None


def _suite(path: str, asset_dir=None):
    try:
        return load_suite_file(path, asset_dir)
    except FileNotFoundError:
        raise UsageError(f"suite file not found: {path}") from None
    except SuiteError as exc:
        raise UsageError(f"invalid suite {path}:\n{exc.to_json()}") from None


def _faults(args) -> list[str]:
    faults = [f for f in (args.faults or "").split(",") if f]
    if getattr(args, "fault_config", None):
        faults += load_fault_config(args.fault_config)
    unknown = [f for f in faults if f not in FAULTS]
    if unknown:
        raise UsageError(f"unknown faults {unknown}; known: {', '.join(sorted(FAULTS))}")
    return sorted(set(faults))


@contextlib.contextmanager
def _target(args) -> Iterator[tuple[str, str]]:
    """Yield (url, label); the label is what gets written to output files."""
    if args.target == DEMO:
        with DemoTarget(_faults(args)) as demo:
            yield demo.url, DEMO_LABEL
    else:
        if args.faults or getattr(args, "fault_config", None):
            raise UsageError("--faults only applies to --target demo")
        yield args.target, args.target


def _gateway(args) -> Gateway:
    try:
        if args.gateway == "replay":
            if not args.transcript:
                raise UsageError("replay mode needs --transcript")
            if not Path(args.transcript).is_file():
                raise UsageError(f"transcript not found: {args.transcript}")
            return Gateway(ReplayBackend(args.transcript, strict=not args.lenient))
        remote = RemoteBackend()
        if args.gateway == "record":
            if not args.transcript:
                raise UsageError("record mode needs --transcript")
            return Gateway(RecordingBackend(remote, args.transcript))
        return Gateway(remote)
    except ConfigurationError as exc:
        raise UsageError(f"configuration error: {exc}") from None


def _limits(args) -> Limits:
    if not args.limits:
        return Limits()
    try:
        return Limits.from_dict(json.loads(Path(args.limits).read_text(encoding="utf-8")))
    except (OSError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid limits file {args.limits}: {exc}") from None


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dump(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_amplify(args) -> int:
    index = _spec(args.spec)
    asset_dir = Path(args.asset_dir) if args.asset_dir else fixtures_dir() / "assets"
    seed = _suite(args.seed, asset_dir)
    limits = _limits(args)
    gateway = _gateway(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with _target(args) as (url, label):
        faults = _faults(args) if args.target == DEMO else []
        result = amplify(
            index,
            seed,
            args.mode,
            url,
            gateway,
            limits,
            asset_dir=asset_dir,
            run_options=RunOptions(timeout=args.timeout),
        )
    interactions = InteractionLog(target=label, records=result.log.records)
    seed_names = set(seed.case_names)
    initial_log = InteractionLog(target=label, records=[r for r in interactions.records if r.case in seed_names])
    initial = compute_coverage(index, initial_log)
    amplified = compute_coverage(index, interactions)
    labels = classify(result.report, result.suite, index)

    manifest = {
        "tool": "restamp",
        "version": __version__,
        "mode": args.mode,
        "spec": Path(args.spec).name,
        "seed": Path(args.seed).name,
        "gateway": args.gateway,
        "transcript": Path(args.transcript).name if args.transcript else None,
        "target": label,
        "faults": faults,
        "limits": {k: getattr(limits, k) for k in ("max_llm_calls", "max_repairs", "max_node_visits", "parallel_fanout", "temperature")},
    }
    _write(out / "run.json", _dump(manifest))
    _write(out / "suite.json", serialize_suite(result.suite))
    _write(out / "execution_report.json", _dump(result.report.to_dict()))
    interactions.write(out / "interactions.jsonl")
    _write(out / "coverage.json", _dump({"initial": initial.to_dict(), "amplified": amplified.to_dict()}))
    _write(out / "coverage.txt", render_table({"Initial Coverage": initial, "Amplified": amplified}))
    _write(out / "triage.json", labels_to_json(labels))
    usage = {"total": result.usage.to_dict(), "endpoints": {t.endpoint: t.usage.to_dict() for t in result.traces}}
    _write(out / "usage.json", _dump(usage))
    _write(out / "traces.json", result.traces_json())
    timings = out / "timings.json"
    if args.gateway == "replay":
        # replayed runs must produce identical trees, so wall-clock data stays out
        timings.unlink(missing_ok=True)
    else:
        _write(timings, _dump({r.name: round(r.duration_ms, 3) for r in result.report.results}))

    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(result.report.render())
    print()
    print(render_table({"Initial Coverage": initial, "Amplified": amplified}), end="")
    print(f"\nwrote {out}")
    return EXIT_OK


def cmd_coverage(args) -> int:
    index = _spec(args.spec)
    logs = []
    for path in args.logs:
        try:
            logs.append(InteractionLog.read(path))
        except FileNotFoundError:
            raise UsageError(f"log not found: {path}") from None
        except (ValueError, KeyError) as exc:
            raise UsageError(f"malformed log {path}: {exc}") from None
    report = compute_coverage(index, logs)
    print(report.render())
    print(report.to_json(), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    index = _spec(args.spec) if args.spec else None
    asset_dir = Path(args.asset_dir) if args.asset_dir else fixtures_dir() / "assets"
    suite = _suite(args.suite, asset_dir)
    with _target(args) as (url, label):
        report, interactions = run_suite(suite, url, RunOptions(timeout=args.timeout), index=index, asset_dir=asset_dir)
    print(report.render())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "execution_report.json", _dump(report.to_dict()))
        InteractionLog(target=label, records=interactions.records).write(out / "interactions.jsonl")
    t = report.totals
    return EXIT_OK if t["failed"] == 0 and t["errored"] == 0 else EXIT_FAILURES


def render_triage(labels) -> str:
    total = len(labels)
    tally = counts(labels)
    lines = [f"Failed Tests: {total}"]
    for label in LABELS:
        pct = (200 * tally[label] + total) // (2 * total) if total else 0
        lines.append(f"{TITLES[label]}: {tally[label]} ({pct}%)")
    lines.append("")
    for name, t in sorted(labels.items()):
        mark = " [override]" if t.overridden else ""
        lines.append(f"{name}: {t.label}{mark} - {t.rationale}")
    return "\n".join(lines)


def cmd_triage(args) -> int:
    index = _spec(args.spec)
    suite = _suite(args.suite)
    try:
        report = ExecutionReport.from_dict(json.loads(Path(args.report).read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise UsageError(f"report not found: {args.report}") from None
    try:
        labels = classify(report, suite, index)
        if args.overrides:
            labels = apply_overrides(labels, load_overrides(args.overrides))
    except TriageError as exc:
        raise UsageError(str(exc)) from None
    print(render_triage(labels))
    if args.out:
        _write(Path(args.out), labels_to_json(labels))
    return EXIT_OK


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.dirs]
    for d in dirs:
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")
    try:
        report = build_report(dirs)
    except ReportError as exc:
        raise UsageError(str(exc)) from None
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(render_report(report), end="")
    return EXIT_OK


def cmd_serve_demo(args) -> int:
    faults = _faults(args)
    try:
        demo = DemoTarget(faults, host=args.host, port=args.port)
    except OSError as exc:
        raise UsageError(f"cannot bind {args.host}:{args.port}: {exc}") from None
    print(f"minipet listening on {demo.url} (faults: {', '.join(faults) or 'none'})", flush=True)
    try:
        demo.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        demo.stop()
    return EXIT_OK


def cmd_record_fixtures(args) -> int:
    from .fixture_recording import record_bundled_transcripts

    written = record_bundled_transcripts(Path(args.out) if args.out else fixtures_dir() / "transcripts")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_target(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--target", required=required, help="base URL of the API, or 'demo' for a fresh in-process minipet")
    p.add_argument("--faults", default="", help="comma-separated demo-target faults: " + ", ".join(sorted(FAULTS)))
    p.add_argument("--fault-config", help='JSON file {"faults": [...]} for the demo target')
    p.add_argument("--timeout", type=float, default=10.0, help="per-request timeout in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restamp", description="LLM-driven REST API test amplification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("amplify", help="amplify a seed suite endpoint by endpoint")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", required=True, help="seed suite document")
    p.add_argument("--mode", choices=MODES, default="multi")
    _add_target(p)
    p.add_argument("--gateway", choices=("replay", "record", "remote"), default="replay")
    p.add_argument("--transcript", help="transcript to replay from or record to")
    p.add_argument("--lenient", action="store_true", help="replay by sequence when a request digest misses")
    p.add_argument("--limits", help="JSON file overriding workflow limits")
    p.add_argument("--asset-dir", help="directory of upload assets (defaults to the bundled ones)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_amplify)

    p = sub.add_parser("coverage", help="structural coverage of interaction logs")
    p.add_argument("--spec", required=True)
    p.add_argument("logs", nargs="*", help="interaction logs (JSON lines)")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("run", help="execute a suite against a target")
    p.add_argument("--suite", required=True)
    p.add_argument("--spec", help="spec used to attribute interactions to templates")
    _add_target(p)
    p.add_argument("--asset-dir")
    p.add_argument("--out", help="directory for execution_report.json and interactions.jsonl")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("triage", help="classify failed cases")
    p.add_argument("--report", required=True, help="execution_report.json")
    p.add_argument("--suite", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--overrides", help='JSON file {"caseName": "label"}')
    p.add_argument("--out", help="write labels as JSON here")
    p.set_defaults(func=cmd_triage)

    p = sub.add_parser("report", help="result tables over amplification output directories")
    p.add_argument("dirs", nargs="+", help="output directories; runs of the same mode are averaged")
    p.add_argument("--json", action="store_true", help="emit JSON instead of text tables")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve-demo", help="run the minipet demo target in the foreground")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--faults", default="")
    p.add_argument("--fault-config")
    p.set_defaults(func=cmd_serve_demo)

    p = sub.add_parser("record-fixtures", help="re-record the bundled replay transcripts")
    p.add_argument("--out", help="directory for S1/M1/M2 transcripts (defaults to the bundled location)")
    p.set_defaults(func=cmd_record_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"restamp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
