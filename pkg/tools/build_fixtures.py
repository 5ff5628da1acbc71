#!/usr/bin/env python3
"""Regenerate the bundled fixture corpus: detection cassettes + labels,
golden transcripts, and the frozen determinism digest.

Each detection fixture pairs a schema with a scripted player (inputs.jsonl)
and a planned sequence of line responses; playing the session once through
a recording wrapper produces provider.cassette.jsonl. Labels are whatever
the rules interpreter predicted during that same run, so the corpus is
self-consistent by construction.

Run from the repo root:  python3 tools/build_fixtures.py
"""

from __future__ import annotations

import hashlib
import json
import shutil
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from dramaturge.engine import run_scripted  # noqa: E402
from dramaturge.harness import run_detection  # noqa: E402
from dramaturge.interpretation import RulesInterpreter  # noqa: E402
from dramaturge.instantiation import Instantiator  # noqa: E402
from dramaturge.provider import (  # noqa: E402
    Cassette,
    RecordingProvider,
    ReplayProvider,
    SequenceProvider,
)
from dramaturge.schema import parse_schema  # noqa: E402
from dramaturge.transcript import PlayerInput  # noqa: E402

FIXTURES = REPO / "fixtures"


def _response(speaker, dialogue=None, actions=None, narration=None, pause=True, realized=()):
    return json.dumps(
        {
            "speaker": speaker,
            "narration": narration,
            "actions": actions,
            "dialogue": dialogue,
            "pause": pause,
            "realized": list(realized),
        },
        ensure_ascii=False,
    )


# Planned next-line responses per fixture, in the order the engine will ask.
PLANS: dict[str, list[str]] = {
    "superhero_reporter": [
        _response(
            "Maria",
            narration="The challenge has begun.",
            actions="whispering",
            dialogue="Which one catches your eye?",
            pause=True,
            realized=["ask_whats_going_on"],
        ),
        _response(
            "Maria",
            actions="grinning",
            dialogue="Then go get your quote before the bell. Press badge up, past the barrier, go.",
            pause=False,
            realized=["pick_favorite"],
        ),
        _response(
            "Volt",
            actions="straightening up",
            dialogue="A comment? Sure. Everything you'll see tonight was decided on Tuesday.",
            pause=True,
            realized=["quote_request"],
        ),
        _response(
            "Volt",
            actions="glancing down the corridor",
            dialogue="Ask who books the venue. That's all I'm saying.",
            pause=False,
            realized=["rigging_pressed"],
        ),
        _response(
            "Maria",
            narration="The newsroom holds its breath.",
            actions="reading over Sam's shoulder",
            dialogue="Run it.",
            pause=False,
            realized=["file_story"],
        ),
    ],
    "midnight_library": [
        _response(
            "Mr. Hollow",
            narration="The lamp above him flickers.",
            actions="looking up at last",
            dialogue="Closing time means very little to me now.",
            pause=True,
            realized=["greet_patron"],
        ),
        _response(
            "Mr. Hollow",
            actions="tapping the book's spine",
            dialogue="The name on this cover will do.",
            pause=True,
            realized=["ask_name"],
        ),
        _response(
            "Mr. Hollow",
            narration="He returns to his page as if the conversation were shelved.",
            pause=True,
        ),
    ],
    "harbor_gambit": [
        _response(
            "Inspector Tane",
            narration="The stamp falls before page two is turned.",
            actions="waving at the tide",
            dialogue="Cleared. Mind the shoals, captain.",
            pause=False,
            realized=["show_manifest"],
        ),
        _response(
            "Brin",
            actions="relaying the heading",
            dialogue="The Teeth it is. All hands, long watch.",
            pause=False,
            realized=["set_course"],
        ),
    ],
    "quiet_garden": [
        _response(
            "Grandmother Osei",
            actions="patting the turned earth flat",
            dialogue="Gardens rest. People should learn it from them.",
            pause=True,
        ),
        _response(
            "Grandmother Osei",
            narration="The kettle begins to sing indoors.",
            dialogue="The roses? They kept a promise. Come pour the tea.",
            pause=True,
        ),
    ],
    "signal_static": [
        _response(
            "The Voice",
            narration="Static swells and settles.",
            dialogue="That is not a storm. Stay off the ridge road tonight.",
            pause=True,
            realized=["ask_about_storm"],
        ),
        _response(
            "The Voice",
            dialogue="Good. Write these down exactly: four, nine, four...",
            pause=True,
            realized=["hold_frequency"],
        ),
    ],
}


def load_inputs(path: Path) -> list[PlayerInput]:
    inputs = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        if raw.strip():
            data = json.loads(raw)
            inputs.append(PlayerInput(actions=data.get("actions"), dialogue=data.get("dialogue")))
    return inputs


def build_detection_fixture(name: str) -> None:
    fixture_dir = FIXTURES / "detection" / name
    schema = parse_schema((fixture_dir / "schema.json").read_text(encoding="utf-8"))
    inputs = load_inputs(fixture_dir / "inputs.jsonl")
    rules = json.loads((fixture_dir / "rules.json").read_text(encoding="utf-8"))

    cassette = Cassette()
    provider = RecordingProvider(SequenceProvider(PLANS[name]), cassette, clock=lambda: 0.0)
    session, predictions = run_detection(
        schema, inputs, RulesInterpreter(rules), Instantiator(provider))

    cassette.save(fixture_dir / "provider.cassette.jsonl")
    (fixture_dir / "labels.json").write_text(
        json.dumps(predictions, indent=2) + "\n", encoding="utf-8")

    digest = hashlib.sha256(session.log_text().encode("utf-8")).hexdigest()
    (fixture_dir / "expected_digest.txt").write_text(digest + "\n", encoding="utf-8")
    print(f"  {name}: {len(cassette.exchanges)} exchanges, "
          f"{len(session.transcript)} lines, digest {digest[:12]}...")


def build_golden(name: str) -> None:
    fixture_dir = FIXTURES / "detection" / name
    golden_dir = FIXTURES / "goldens" / name
    golden_dir.mkdir(parents=True, exist_ok=True)

    schema = parse_schema((fixture_dir / "schema.json").read_text(encoding="utf-8"))
    inputs = load_inputs(fixture_dir / "inputs.jsonl")
    rules = json.loads((fixture_dir / "rules.json").read_text(encoding="utf-8"))
    provider = ReplayProvider.from_file(fixture_dir / "provider.cassette.jsonl")
    session = run_scripted(schema, inputs, Instantiator(provider), RulesInterpreter(rules))

    shutil.copy(fixture_dir / "schema.json", golden_dir / "schema.json")
    shutil.copy(fixture_dir / "provider.cassette.jsonl", golden_dir / "provider.cassette.jsonl")
    (golden_dir / "transcript.jsonl").write_text(session.log_text(), encoding="utf-8")
    print(f"  golden {name}: {len(session.log)} log records")


def main() -> None:
    print("building detection fixtures:")
    for name in sorted(PLANS):
        build_detection_fixture(name)
    print("building goldens:")
    build_golden("superhero_reporter")
    build_golden("harbor_gambit")


if __name__ == "__main__":
    main()
