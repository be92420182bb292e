"""Re-record the bundled replay transcripts from the scripted authoring model.

Each transcript is recorded against a fresh demo target with the
``login-200`` fault enabled; replay it under the same conditions.
"""

from __future__ import annotations

from pathlib import Path

from .demo_target import DemoTarget
from .dsl import load_suite_file
from .llm import CallableBackend, Gateway, RecordingBackend
from .scripted import ScriptedModel
from .spec_index import load_spec_file
from .workflows import Limits, amplify

RECORDING_FAULTS = ("login-200",)

# name -> (mode, endpoints whose first writer draft is broken)
TRANSCRIPTS = {
    "S1": ("single", ()),
    "M1": ("multi", ()),
    "M2": ("multi", ("/user/login",)),
}


def bundled_fixtures() -> Path:
    return Path(__file__).parent / "fixtures"


def record_transcript(name: str, path: Path, fixtures: Path | None = None) -> Path:
    mode, broken = TRANSCRIPTS[name]
    fixtures = fixtures or bundled_fixtures()
    index = load_spec_file(fixtures / "minipet.json")
    seed = load_suite_file(fixtures / "seed_suite.json")
    gateway = Gateway(RecordingBackend(CallableBackend(ScriptedModel(broken)), path))
    with DemoTarget(RECORDING_FAULTS) as demo:
        amplify(index, seed, mode, demo.url, gateway, Limits(), asset_dir=fixtures / "assets")
    return path


def record_bundled_transcripts(out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    return [record_transcript(name, out_dir / f"{name}.jsonl") for name in TRANSCRIPTS]
