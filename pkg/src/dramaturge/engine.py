"""The playthrough state machine.

A session unfolds line by line: every scene opens with its opening line
verbatim, the playthrough pauses for player input when a generated line
says so, predicate conditions are judged after every input, line-count
conditions trigger deterministically, and a triggered end-scene outcome
starts a short closing budget so the outcome can be expressed before the
scene cuts. Identical (schema, config, inputs, cassette) always reproduce
a byte-identical transcript log.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .instantiation import (
    INVALID_SPEAKER,
    InstantiationContext,
    InstantiationResult,
    Instantiator,
    ResponseFormatError,
)
from .interpretation import (
    InterpretationContext,
    LlmInterpreter,
    RulesInterpreter,
    evaluate_line_count,
)
from .provider import Cassette, CompletionProvider, ReplayProvider
from .schema import (
    Diagnostic,
    Event,
    LineCountCondition,
    PredicateCondition,
    Scene,
    StorySchema,
    has_errors,
    parse_schema,
    player_character,
    serialize_schema,
    validate_schema,
)
from .transcript import NARRATOR, Line, LineKind, PlayerInput

logger = logging.getLogger(__name__)

LOG_VERSION = "1"
SNAPSHOT_VERSION = "1"


class EngineError(Exception):
    pass


class SchemaInvalidError(EngineError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("schema has validation errors: "
                         + "; ".join(d.render() for d in diagnostics if d.severity.value == "error"))


class WrongPhaseError(EngineError):
    def __init__(self, expected: "Phase", actual: "Phase"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"operation requires phase {expected.value}, session is {actual.value}")


class EmptyInputError(EngineError):
    pass


class SnapshotVersionError(EngineError):
    pass


class ReplayDivergence(EngineError):
    """Replay produced a record different from the logged one."""

    def __init__(self, index: int, expected: str, actual: str):
        self.index = index
        super().__init__(
            f"replay diverged at log record {index}: expected {expected!r}, got {actual!r}")


class Phase(str, Enum):
    AWAITING_INPUT = "awaiting_input"
    AWAITING_ADVANCE = "awaiting_advance"
    FINISHED = "finished"


class EventState(str, Enum):
    PENDING = "pending"
    TRIGGERED = "triggered"
    REALIZED = "realized"
    EXPIRED = "expired"


# Lifecycle is monotone: an event leaves PENDING at most once and never returns.
_ALLOWED_TRANSITIONS = {
    (EventState.PENDING, EventState.TRIGGERED),
    (EventState.TRIGGERED, EventState.REALIZED),
    (EventState.PENDING, EventState.EXPIRED),
    (EventState.TRIGGERED, EventState.EXPIRED),
}


@dataclass
class EventStatus:
    state: EventState = EventState.PENDING
    triggered_at: int | None = None
    realized_at: int | None = None

    def to_record(self) -> dict:
        return {"state": self.state.value, "triggered_at": self.triggered_at,
                "realized_at": self.realized_at}

    @classmethod
    def from_record(cls, record: dict) -> "EventStatus":
        return cls(state=EventState(record["state"]), triggered_at=record["triggered_at"],
                   realized_at=record["realized_at"])


@dataclass(frozen=True)
class EngineConfig:
    max_closing_lines: int = 3
    max_lines_without_pause: int = 6
    max_total_lines: int = 200
    parse_retry_limit: int = 1

    def __post_init__(self) -> None:
        if self.max_closing_lines < 1:
            raise ValueError("max_closing_lines must be >= 1")
        if self.max_lines_without_pause < 1:
            raise ValueError("max_lines_without_pause must be >= 1")
        if self.max_total_lines < 1:
            raise ValueError("max_total_lines must be >= 1")
        if self.parse_retry_limit < 0:
            raise ValueError("parse_retry_limit must be >= 0")

    def to_dict(self) -> dict:
        return {
            "max_closing_lines": self.max_closing_lines,
            "max_lines_without_pause": self.max_lines_without_pause,
            "max_total_lines": self.max_total_lines,
            "parse_retry_limit": self.parse_retry_limit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        return cls(**data)


@dataclass
class StepResult:
    """What one engine step produced, for callers that relay events.

    triggered_event_ids entries are (scene id, event id) pairs, since a
    step that transitions scenes can trigger entry events in the new scene.
    """

    new_lines: list[Line] = field(default_factory=list)
    needs_input: bool = False
    scene_ended: bool = False
    ended_scene_id: str | None = None
    next_scene_id: str | None = None
    finished: bool = False
    triggered_event_ids: list[tuple[str, str]] = field(default_factory=list)
    realized_event_ids: list[str] = field(default_factory=list)


def _dump_record(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


class Session:
    """Live playthrough state. Single-threaded: callers serialize mutations."""

    def __init__(self, schema: StorySchema, config: EngineConfig):
        self.schema = schema
        self.config = config
        self.current_scene_id: str = schema.scenes[0].id if schema.scenes else ""
        self.transcript: list[Line] = []
        self.event_status: dict[tuple[str, str], EventStatus] = {
            (scene.id, event.id): EventStatus()
            for scene in schema.scenes
            for event in scene.events
        }
        self.generated_count_in_scene: int = 0
        self.closing_budget: int | None = None
        self.phase: Phase = Phase.AWAITING_ADVANCE
        self.log: list[dict] = []
        self._interpreter_logged = False

    # -- views ---------------------------------------------------------------

    @property
    def finished(self) -> bool:
        return self.phase is Phase.FINISHED

    def current_scene(self) -> Scene:
        return self.schema.scene(self.current_scene_id)

    def status_of(self, scene_id: str, event_id: str) -> EventStatus:
        return self.event_status[(scene_id, event_id)]

    def scene_lines(self, scene_id: str | None = None) -> list[Line]:
        scene_id = scene_id or self.current_scene_id
        return [line for line in self.transcript if line.scene_id == scene_id]

    def player_name(self) -> str:
        return player_character(self.schema).name

    def log_text(self) -> str:
        """The transcript log, line-delimited; byte-stable across runs."""
        return "".join(_dump_record(r) + "\n" for r in self.log)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Session):
            return NotImplemented
        return snapshot(self) == snapshot(other)

    # -- internal bookkeeping --------------------------------------------------

    def _append_line(self, line: Line) -> None:
        self.transcript.append(line)
        self.log.append({"type": "line", **line.to_record()})

    def _set_status(self, scene_id: str, event_id: str, state: EventState, at_line: int) -> None:
        status = self.event_status[(scene_id, event_id)]
        if (status.state, state) not in _ALLOWED_TRANSITIONS:
            raise EngineError(
                f"illegal event transition {status.state.value} -> {state.value} for {event_id}")
        status.state = state
        if state is EventState.TRIGGERED:
            status.triggered_at = at_line
        elif state is EventState.REALIZED:
            status.realized_at = at_line
        self.log.append({"type": "event", "scene": scene_id, "event": event_id,
                         "status": state.value, "at_line": at_line})

    def _log_interpreter(self, interpreter: object) -> None:
        if self._interpreter_logged:
            return
        self._interpreter_logged = True
        self.log.append({"type": "interpreter", "descriptor": interpreter_descriptor(interpreter)})


def interpreter_descriptor(interpreter: object) -> dict:
    describe = getattr(interpreter, "descriptor", None)
    if callable(describe):
        return describe()
    return {"kind": "custom"}


def interpreter_from_descriptor(descriptor: dict, provider: CompletionProvider | None):
    kind = descriptor.get("kind")
    if kind == "rules":
        return RulesInterpreter(descriptor["rules"])
    if kind == "llm":
        if provider is None:
            raise EngineError("llm interpreter needs a provider to replay")
        return LlmInterpreter(provider, retry_limit=descriptor.get("retry_limit", 1))
    raise EngineError(f"cannot reconstruct interpreter of kind {kind!r}; pass one explicitly")


def _opening_line(index: int, scene: Scene) -> Line:
    return Line(
        index=index,
        scene_id=scene.id,
        kind=LineKind.OPENING,
        speaker=NARRATOR,
        narration=scene.opening_line,
        actions=None,
        dialogue=None,
        pause_after=True,
    )


def start_playthrough(schema: StorySchema, config: EngineConfig | None = None) -> Session:
    """New session on scene[0]: its opening line, verbatim, already pausing
    for the first player input; every event Pending."""
    config = config or EngineConfig()
    diagnostics = validate_schema(schema)
    if has_errors(diagnostics):
        raise SchemaInvalidError(diagnostics)
    session = Session(schema, config)
    session.log.append({"type": "header", "version": LOG_VERSION, "title": schema.title,
                        "config": config.to_dict()})
    session._append_line(_opening_line(0, schema.scenes[0]))
    session.generated_count_in_scene = 1
    session.phase = Phase.AWAITING_INPUT
    _trigger_line_counts_on_entry(session, schema.scenes[0], at_line=0)
    return session


def _require_phase(session: Session, expected: Phase) -> None:
    if session.phase is not expected:
        raise WrongPhaseError(expected, session.phase)


def _pending_predicates(session: Session, scene: Scene) -> list[tuple[str, str]]:
    return [
        (event.id, event.condition.statement)
        for event in scene.events
        if isinstance(event.condition, PredicateCondition)
        and session.status_of(scene.id, event.id).state is EventState.PENDING
    ]


def _scene_event(scene: Scene, event_id: str) -> Event:
    for event in scene.events:
        if event.id == event_id:
            return event
    raise KeyError(event_id)


def _maybe_open_closing_budget(session: Session, scene: Scene, triggered: list[str]) -> None:
    if session.closing_budget is not None:
        return
    if any(_scene_event(scene, event_id).outcome.ends_scene for event_id in triggered):
        session.closing_budget = session.config.max_closing_lines


def _trigger_line_counts_on_entry(session: Session, scene: Scene,
                                  at_line: int) -> list[tuple[str, str]]:
    """Scene entry counts as generated line 1, so LineCount(1) events leave
    Pending at the opening line, before any advance."""
    pending = [
        (event.id, event.condition)
        for event in scene.events
        if isinstance(event.condition, LineCountCondition)
        and session.status_of(scene.id, event.id).state is EventState.PENDING
    ]
    triggered = evaluate_line_count(pending, session.generated_count_in_scene)
    for event_id in triggered:
        session._set_status(scene.id, event_id, EventState.TRIGGERED, at_line=at_line)
    _maybe_open_closing_budget(session, scene, triggered)
    return [(scene.id, event_id) for event_id in triggered]


def submit_input(session: Session, player_input: PlayerInput, interpreter) -> StepResult:
    """Append the player's line and judge the scene's pending predicates.

    The interpreter call runs before any mutation, so a provider failure
    leaves the session untouched and the input can simply be retried.
    """
    _require_phase(session, Phase.AWAITING_INPUT)
    if not ((player_input.actions or "").strip() or (player_input.dialogue or "").strip()):
        raise EmptyInputError("player input needs actions or dialogue")

    scene = session.current_scene()
    index = len(session.transcript)
    player_line = Line(
        index=index,
        scene_id=scene.id,
        kind=LineKind.PLAYER,
        speaker=session.player_name(),
        narration=None,
        actions=player_input.actions,
        dialogue=player_input.dialogue,
        pause_after=False,
    )

    pending = _pending_predicates(session, scene)
    satisfied: tuple[str, ...] = ()
    if pending:
        ctx = InterpretationContext(
            transcript_lines=tuple(session.scene_lines()) + (player_line,),
            pending_predicates=tuple(pending),
            player_character_name=session.player_name(),
        )
        satisfied = interpreter.judge(ctx).satisfied_event_ids

    session._log_interpreter(interpreter)
    session._append_line(player_line)
    pending_ids = {event_id for event_id, _ in pending}
    triggered = [event_id for event_id in satisfied if event_id in pending_ids]
    for event_id in triggered:
        session._set_status(scene.id, event_id, EventState.TRIGGERED, at_line=index)
    _maybe_open_closing_budget(session, scene, triggered)
    session.phase = Phase.AWAITING_ADVANCE
    if len(session.transcript) >= session.config.max_total_lines:
        session.phase = Phase.FINISHED
    return StepResult(new_lines=[player_line],
                      triggered_event_ids=[(scene.id, e) for e in triggered],
                      finished=session.finished)


def _instantiation_context(session: Session, scene: Scene) -> InstantiationContext:
    scene_characters = tuple(
        c for c in session.schema.characters if c.name in scene.character_names
    )
    active = tuple(
        (event.id, event.outcome.description)
        for event in scene.events
        if session.status_of(scene.id, event.id).state is EventState.TRIGGERED
    )
    last_input = None
    for line in reversed(session.transcript):
        if line.kind is LineKind.PLAYER:
            last_input = PlayerInput(actions=line.actions, dialogue=line.dialogue)
            break
    return InstantiationContext(
        style=session.schema.style,
        scene_characters=scene_characters,
        player_character_name=session.player_name(),
        setting=scene.setting,
        prior_lines=tuple(session.transcript),
        active_outcomes=active,
        last_player_input=last_input,
    )


def _forced_pause(session: Session, wants_pause: bool) -> bool:
    if wants_pause:
        return True
    run = 1  # counting the line about to be appended
    for line in reversed(session.transcript):
        if line.kind is LineKind.GENERATED and not line.pause_after:
            run += 1
        else:
            break
    return run > session.config.max_lines_without_pause


def advance(session: Session, instantiator) -> tuple[Session, StepResult]:
    """Generate exactly one line and run the scene bookkeeping.

    Line-count triggers fire deterministically when the generated-line
    count reaches their threshold; realized ids from the response retire
    triggered outcomes; the scene ends when an end-scene outcome realizes
    or the closing budget runs out, whichever comes first.
    """
    _require_phase(session, Phase.AWAITING_ADVANCE)
    scene = session.current_scene()
    config = session.config
    closing_was_active = session.closing_budget is not None

    result: InstantiationResult = instantiator.next_line(_instantiation_context(session, scene))
    if result.speaker == session.player_name():
        raise ResponseFormatError(
            INVALID_SPEAKER, "generated lines never belong to the player character")

    index = len(session.transcript)
    new_count = session.generated_count_in_scene + 1

    newly_realized = [
        event_id for event_id in result.realized_event_ids
        if session.status_of(scene.id, event_id).state is EventState.TRIGGERED
    ]
    pending_counts = [
        (event.id, event.condition)
        for event in scene.events
        if isinstance(event.condition, LineCountCondition)
        and session.status_of(scene.id, event.id).state is EventState.PENDING
    ]
    newly_triggered = evaluate_line_count(pending_counts, new_count)

    ends_realized = [
        event_id for event_id in newly_realized
        if _scene_event(scene, event_id).outcome.ends_scene
    ]

    # The budget only counts lines generated after the triggering step, so the
    # line that tipped a line-count trigger does not consume closing budget.
    budget = session.closing_budget
    if budget is None and any(
        _scene_event(scene, event_id).outcome.ends_scene for event_id in newly_triggered
    ):
        budget = config.max_closing_lines
    if closing_was_active:
        budget = budget - 1  # type: ignore[operand]

    scene_ends = bool(ends_realized) or budget == 0

    pause = _forced_pause(session, result.pause)
    if scene_ends or budget is not None:
        pause = False  # closing mode and scene cuts never pause

    line = Line(
        index=index,
        scene_id=scene.id,
        kind=LineKind.GENERATED,
        speaker=result.speaker,
        narration=result.narration,
        actions=result.actions,
        dialogue=result.dialogue,
        pause_after=pause,
    )
    session._append_line(line)
    session.generated_count_in_scene = new_count
    for event_id in newly_realized:
        session._set_status(scene.id, event_id, EventState.REALIZED, at_line=index)
    for event_id in newly_triggered:
        session._set_status(scene.id, event_id, EventState.TRIGGERED, at_line=index)
    session.closing_budget = budget

    step = StepResult(
        new_lines=[line],
        triggered_event_ids=[(scene.id, e) for e in newly_triggered],
        realized_event_ids=newly_realized,
    )

    if scene_ends:
        step.scene_ended = True
        step.ended_scene_id = scene.id
        governing = _governing_event(session, scene, ends_realized)
        target = governing.outcome.transition_to if governing else None
        for event in scene.events:
            if session.status_of(scene.id, event.id).state in (
                EventState.PENDING, EventState.TRIGGERED,
            ):
                session._set_status(scene.id, event.id, EventState.EXPIRED, at_line=index)
        session.closing_budget = None
        if target is not None and len(session.transcript) < config.max_total_lines:
            next_scene = session.schema.scene(target)
            opening = _opening_line(len(session.transcript), next_scene)
            session._append_line(opening)
            session.current_scene_id = target
            session.generated_count_in_scene = 1
            session.phase = Phase.AWAITING_INPUT
            step.next_scene_id = target
            step.new_lines.append(opening)
            step.triggered_event_ids.extend(
                _trigger_line_counts_on_entry(session, next_scene,
                                              at_line=opening.index))
        else:
            session.phase = Phase.FINISHED
    else:
        session.phase = Phase.AWAITING_INPUT if pause else Phase.AWAITING_ADVANCE

    if session.phase is not Phase.FINISHED and len(session.transcript) >= config.max_total_lines:
        session.phase = Phase.FINISHED

    step.needs_input = session.phase is Phase.AWAITING_INPUT
    step.finished = session.phase is Phase.FINISHED
    return session, step


def _governing_event(session: Session, scene: Scene, ends_realized: list[str]) -> Event | None:
    """The outcome that decides the transition: the earliest-authored realized
    end-scene event, else the earliest-authored triggered one."""
    if ends_realized:
        wanted = set(ends_realized)
        for event in scene.events:
            if event.id in wanted:
                return event
    for event in scene.events:
        if (event.outcome.ends_scene
                and session.status_of(scene.id, event.id).state is EventState.TRIGGERED):
            return event
    return None


def run_until_pause(session: Session, instantiator) -> list[StepResult]:
    """Advance until the playthrough pauses for input, ends a turn, or finishes."""
    steps = []
    while session.phase is Phase.AWAITING_ADVANCE:
        _, step = advance(session, instantiator)
        steps.append(step)
    return steps


def run_scripted(schema: StorySchema, inputs: list[PlayerInput], instantiator, interpreter,
                 config: EngineConfig | None = None) -> Session:
    """Play a whole session from a fixed input script (stops when the script
    is exhausted or the playthrough finishes)."""
    session = start_playthrough(schema, config)
    remaining = list(inputs)
    while not session.finished:
        if session.phase is Phase.AWAITING_INPUT:
            if not remaining:
                break
            submit_input(session, remaining.pop(0), interpreter)
        else:
            advance(session, instantiator)
    return session


# -- snapshot / resume ---------------------------------------------------------


def snapshot(session: Session) -> dict:
    """Self-contained serializable session state (version "1")."""
    return {
        "version": SNAPSHOT_VERSION,
        "schema": json.loads(serialize_schema(session.schema)),
        "config": session.config.to_dict(),
        "current_scene": session.current_scene_id,
        "transcript": [line.to_record() for line in session.transcript],
        "event_status": [
            {"scene": scene_id, "event": event_id, **status.to_record()}
            for (scene_id, event_id), status in session.event_status.items()
        ],
        "generated_count_in_scene": session.generated_count_in_scene,
        "closing_budget": session.closing_budget,
        "phase": session.phase.value,
        "log": [dict(record) for record in session.log],
        "interpreter_logged": session._interpreter_logged,
    }


def resume(snapshot_doc: dict, config: EngineConfig | None = None) -> Session:
    """Rebuild a session from a snapshot; resume(snapshot(s)) equals s."""
    version = snapshot_doc.get("version")
    if version != SNAPSHOT_VERSION:
        raise SnapshotVersionError(
            f"snapshot version {version!r} is not supported (expected {SNAPSHOT_VERSION!r})")
    schema = parse_schema(json.dumps(snapshot_doc["schema"]))
    session = Session(schema, config or EngineConfig.from_dict(snapshot_doc["config"]))
    session.current_scene_id = snapshot_doc["current_scene"]
    session.transcript = [Line.from_record(r) for r in snapshot_doc["transcript"]]
    session.event_status = {
        (entry["scene"], entry["event"]): EventStatus.from_record(entry)
        for entry in snapshot_doc["event_status"]
    }
    session.generated_count_in_scene = snapshot_doc["generated_count_in_scene"]
    session.closing_budget = snapshot_doc["closing_budget"]
    session.phase = Phase(snapshot_doc["phase"])
    session.log = [dict(record) for record in snapshot_doc["log"]]
    session._interpreter_logged = snapshot_doc["interpreter_logged"]
    return session


# -- record / replay -------------------------------------------------------------


def load_transcript_log(path: str | Path) -> list[dict]:
    records = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        if raw.strip():
            records.append(json.loads(raw))
    return records


def replay(schema: StorySchema, log_records: list[dict], cassette: Cassette,
           interpreter=None) -> Session:
    """Re-execute the logged player inputs against the cassette and verify
    the engine reproduces the log exactly.

    Raises CassetteMiss when an exchange is absent and ReplayDivergence
    (naming the first differing record index) when reproduction drifts.
    """
    header = next((r for r in log_records if r.get("type") == "header"), None)
    if header is None:
        raise EngineError("transcript log has no header record")
    if header.get("version") != LOG_VERSION:
        raise EngineError(f"unsupported transcript log version {header.get('version')!r}")
    config = EngineConfig.from_dict(header["config"])

    provider = ReplayProvider(cassette)
    instantiator = Instantiator(provider, retry_limit=config.parse_retry_limit)
    if interpreter is None:
        descriptor_record = next(
            (r for r in log_records if r.get("type") == "interpreter"), None)
        if descriptor_record is not None:
            interpreter = interpreter_from_descriptor(descriptor_record["descriptor"], provider)

    inputs = [
        PlayerInput(actions=r["actions"], dialogue=r["dialogue"])
        for r in log_records
        if r.get("type") == "line" and r.get("kind") == LineKind.PLAYER.value
    ]

    session = start_playthrough(schema, config)
    pending_inputs = list(inputs)
    cursor = 0

    def check_prefix() -> None:
        # Compare as we go so a drifting record is named before the drift
        # cascades into later prompts (and cassette misses).
        nonlocal cursor
        while cursor < len(session.log):
            if cursor >= len(log_records):
                raise ReplayDivergence(cursor, "end of recorded log",
                                       _dump_record(session.log[cursor]))
            expected = _dump_record(log_records[cursor])
            actual = _dump_record(session.log[cursor])
            if expected != actual:
                raise ReplayDivergence(cursor, expected, actual)
            cursor += 1

    check_prefix()
    while len(session.log) < len(log_records):
        if session.phase is Phase.AWAITING_INPUT:
            if not pending_inputs:
                break
            submit_input(session, pending_inputs.pop(0), interpreter)
        elif session.phase is Phase.AWAITING_ADVANCE:
            advance(session, instantiator)
        else:
            break
        check_prefix()

    if len(session.log) != len(log_records):
        raise ReplayDivergence(len(session.log), f"{len(log_records)} records",
                               f"{len(session.log)} records")
    return session
