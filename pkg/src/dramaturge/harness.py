"""Evaluation harness: event-detection accuracy, outcome-realization latency,
pause cadence, and golden-transcript regression.

A detection fixture pairs a schema with a scripted player and per-input
label sets (the event ids a correct judge must mark satisfied). Precision
and recall are counted over (input, event id) pairs; an input where the
engine had nothing pending counts as an empty prediction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .engine import (
    EngineConfig,
    EventState,
    Phase,
    ReplayDivergence,
    Session,
    advance,
    load_transcript_log,
    replay,
    start_playthrough,
    submit_input,
)
from .instantiation import Instantiator
from .interpretation import RulesInterpreter
from .provider import Cassette, CassetteMiss, ReplayProvider
from .schema import StorySchema, parse_schema
from .transcript import Line, LineKind, PlayerInput

logger = logging.getLogger(__name__)

CASSETTE_FILE = "provider.cassette.jsonl"


class FixtureError(Exception):
    pass


@dataclass
class DetectionFixture:
    name: str
    schema: StorySchema
    inputs: list[PlayerInput]
    labels: list[set[str]]
    rules: dict[str, list[str]] | None = None
    cassette: Cassette | None = None

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.inputs):
            raise FixtureError(
                f"{self.name}: {len(self.labels)} label sets for {len(self.inputs)} inputs")
        known = {event.id for scene in self.schema.scenes for event in scene.events}
        for i, label_set in enumerate(self.labels):
            unknown = label_set - known
            if unknown:
                raise FixtureError(
                    f"{self.name}: labels[{i}] references unknown events {sorted(unknown)}")

    @classmethod
    def load(cls, directory: str | Path) -> "DetectionFixture":
        directory = Path(directory)
        schema = parse_schema((directory / "schema.json").read_text(encoding="utf-8"))
        inputs = []
        for raw in (directory / "inputs.jsonl").read_text(encoding="utf-8").splitlines():
            if raw.strip():
                data = json.loads(raw)
                inputs.append(PlayerInput(actions=data.get("actions"),
                                          dialogue=data.get("dialogue")))
        labels = [set(entry) for entry in
                  json.loads((directory / "labels.json").read_text(encoding="utf-8"))]
        rules_path = directory / "rules.json"
        rules = (json.loads(rules_path.read_text(encoding="utf-8"))
                 if rules_path.exists() else None)
        cassette_path = directory / CASSETTE_FILE
        cassette = Cassette.load(cassette_path) if cassette_path.exists() else None
        return cls(name=directory.name, schema=schema, inputs=inputs, labels=labels,
                   rules=rules, cassette=cassette)

    def rules_interpreter(self) -> RulesInterpreter:
        if self.rules is not None:
            return RulesInterpreter(self.rules)
        return RulesInterpreter.from_schema(self.schema)


class _CaptureInterpreter:
    """Wraps a judge and keeps every prediction it makes."""

    def __init__(self, inner):
        self.inner = inner
        self.calls: list[list[str]] = []

    def descriptor(self) -> dict:
        from .engine import interpreter_descriptor

        return interpreter_descriptor(self.inner)

    def judge(self, ctx):
        result = self.inner.judge(ctx)
        self.calls.append(list(result.satisfied_event_ids))
        return result


def run_detection(schema: StorySchema, inputs: list[PlayerInput], interpreter,
                  instantiator, config: EngineConfig | None = None,
                  ) -> tuple[Session, list[list[str]]]:
    """Play the scripted inputs; returns the session plus one predicted
    satisfied-set per input (empty when the engine skipped the judge)."""
    capture = _CaptureInterpreter(interpreter)
    session = start_playthrough(schema, config)
    predictions: list[list[str]] = []
    for player_input in inputs:
        if session.phase is not Phase.AWAITING_INPUT:
            raise FixtureError(
                "inputs are inconsistent with the pause structure: "
                f"session is {session.phase.value} with inputs remaining")
        before = len(capture.calls)
        submit_input(session, player_input, capture)
        predictions.append(capture.calls[before] if len(capture.calls) > before else [])
        while session.phase is Phase.AWAITING_ADVANCE:
            advance(session, instantiator)
    return session, predictions


@dataclass
class FixtureOutcome:
    name: str
    predictions: list[list[str]]
    labels: list[set[str]]
    session: Session

    @property
    def counts(self) -> tuple[int, int, int]:
        tp = fp = fn = 0
        for predicted, labelled in zip(self.predictions, self.labels):
            predicted_set = set(predicted)
            tp += len(predicted_set & labelled)
            fp += len(predicted_set - labelled)
            fn += len(labelled - predicted_set)
        return tp, fp, fn


def run_fixture(fixture: DetectionFixture, interpreter, cassette: Cassette | None = None,
                config: EngineConfig | None = None) -> FixtureOutcome:
    """Drive one fixture against a cassette-backed instantiator and record
    predicted satisfied sets against the fixture's labels."""
    cassette = cassette or fixture.cassette
    if cassette is None:
        raise FixtureError(f"{fixture.name}: no provider cassette available")
    instantiator = Instantiator(ReplayProvider(cassette))
    session, predictions = run_detection(
        fixture.schema, fixture.inputs, interpreter, instantiator, config)
    return FixtureOutcome(name=fixture.name, predictions=predictions,
                          labels=fixture.labels, session=session)


# -- metrics -------------------------------------------------------------------


def _ratio(numerator: int, denominator: int) -> float:
    # Zero denominator means nothing predicted/labelled: perfect agreement.
    return numerator / denominator if denominator else 1.0


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def realization_latencies(session: Session) -> dict[str, int]:
    """Lines from Triggered to Realized for every realized event."""
    out = {}
    for (scene_id, event_id), status in session.event_status.items():
        if status.state is EventState.REALIZED:
            out[event_id] = status.realized_at - status.triggered_at
    return out


def pause_cadence(transcript: list[Line]) -> list[int]:
    """Generated-line runs between pauses (player lines excluded)."""
    gaps = []
    run = 0
    for line in transcript:
        if line.kind is LineKind.PLAYER:
            continue
        run += 1
        if line.pause_after:
            gaps.append(run)
            run = 0
    if run:
        gaps.append(run)
    return gaps


@dataclass
class MetricsReport:
    per_fixture: dict[str, dict] = field(default_factory=dict)
    aggregate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"fixtures": self.per_fixture, "aggregate": self.aggregate}

    def table(self) -> str:
        width = max([len("fixture")] + [len(name) for name in self.per_fixture])
        rows = [f"{'fixture':<{width}}  precision  recall     f1"]
        for name in sorted(self.per_fixture):
            m = self.per_fixture[name]
            rows.append(f"{name:<{width}}  {m['precision']:>9.3f}  {m['recall']:>6.3f}  {m['f1']:>5.3f}")
        agg = self.aggregate
        rows.append(f"{'aggregate':<{width}}  {agg['precision']:>9.3f}  {agg['recall']:>6.3f}  {agg['f1']:>5.3f}")
        return "\n".join(rows)


def compute_metrics(outcomes: list[FixtureOutcome]) -> MetricsReport:
    """Precision/recall/F1 over (input, event id) pairs, plus latency and
    cadence per fixture. Order of outcomes does not affect the aggregate."""
    report = MetricsReport()
    total_tp = total_fp = total_fn = 0
    for outcome in outcomes:
        tp, fp, fn = outcome.counts
        total_tp += tp
        total_fp += fp
        total_fn += fn
        precision = _ratio(tp, tp + fp)
        recall = _ratio(tp, tp + fn)
        report.per_fixture[outcome.name] = {
            "tp": tp,
            "fp": fp,
            "fn": fn,
            "precision": precision,
            "recall": recall,
            "f1": _f1(precision, recall),
            "realization_latency": realization_latencies(outcome.session),
            "pause_cadence": pause_cadence(outcome.session.transcript),
        }
    precision = _ratio(total_tp, total_tp + total_fp)
    recall = _ratio(total_tp, total_tp + total_fn)
    report.aggregate = {
        "tp": total_tp,
        "fp": total_fp,
        "fn": total_fn,
        "precision": precision,
        "recall": recall,
        "f1": _f1(precision, recall),
    }
    return report


def run_corpus(fixtures_dir: str | Path, interpreter_kind: str = "rules",
               provider=None) -> MetricsReport:
    """Run every fixture directory under fixtures_dir and build the report."""
    fixtures_dir = Path(fixtures_dir)
    outcomes = []
    for entry in sorted(fixtures_dir.iterdir()):
        if not entry.is_dir() or not (entry / "schema.json").exists():
            continue
        fixture = DetectionFixture.load(entry)
        if interpreter_kind == "rules":
            interpreter = fixture.rules_interpreter()
        elif interpreter_kind == "llm":
            from .interpretation import LlmInterpreter

            judge_provider = provider
            if judge_provider is None and fixture.cassette is not None:
                judge_provider = ReplayProvider(fixture.cassette)
            if judge_provider is None:
                raise FixtureError(f"{fixture.name}: llm interpreter needs a provider")
            interpreter = LlmInterpreter(judge_provider)
        else:
            raise ValueError(f"unknown interpreter kind {interpreter_kind!r}")
        outcomes.append(run_fixture(fixture, interpreter))
    return compute_metrics(outcomes)


# -- golden transcripts ----------------------------------------------------------


@dataclass
class GoldenResult:
    name: str
    passed: bool
    detail: str = ""


def run_golden_suite(goldens_dir: str | Path) -> list[GoldenResult]:
    """Replay every golden directory; pass means exact reproduction."""
    goldens_dir = Path(goldens_dir)
    results = []
    entries = [p for p in sorted(goldens_dir.iterdir()) if p.is_dir()] if goldens_dir.exists() else []
    if not entries:
        logger.warning("golden suite: no golden directories under %s", goldens_dir)
        return results
    for entry in entries:
        name = entry.name
        try:
            schema = parse_schema((entry / "schema.json").read_text(encoding="utf-8"))
            log_records = load_transcript_log(entry / "transcript.jsonl")
            cassette = Cassette.load(entry / CASSETTE_FILE)
            replay(schema, log_records, cassette)
        except ReplayDivergence as exc:
            results.append(GoldenResult(name, False, f"divergence at record {exc.index}"))
        except CassetteMiss as exc:
            results.append(GoldenResult(name, False, f"cassette miss: {exc.key[:12]}..."))
        except Exception as exc:  # fixture defects surface as failures, not crashes
            results.append(GoldenResult(name, False, f"{type(exc).__name__}: {exc}"))
        else:
            results.append(GoldenResult(name, True))
    return results
