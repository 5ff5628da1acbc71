"""Story schema: types, JSON parsing, and static validation.

A schema is a single JSON document:

    {
      "title": ..., "style": ...,
      "characters": [{"name": ..., "description": ...}, ...],
      "scenes": [
        {"name": ..., "characters": [names...], "setting": ...,
         "opening_line": ...,
         "events": [{"id": ..., "when": ... | "after_lines": n,
                     "outcome": {"description": ..., "ends_scene": bool,
                                 "transition_to": scene-name?}}, ...]},
        ...
      ]
    }

The first listed character is the player character. Parsing reports
format problems (syntax, missing/ill-typed fields, duplicate keys);
validate_schema() reports every semantic invariant violation. Both speak
in Diagnostics with structural locators like "scenes[0].events[1].outcome".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .transcript import NARRATOR

ROOT_PATH = "$"


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    code: str
    message: str
    path: str

    def render(self) -> str:
        """One-line form: SEVERITY code path: message."""
        return f"{self.severity.value.upper()} {self.code} {self.path}: {self.message}"


class SchemaFormatError(Exception):
    """Raised by parse_schema for documents that do not fit the format."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        summary = "; ".join(d.render() for d in diagnostics[:3])
        super().__init__(summary or "invalid schema document")


@dataclass(frozen=True)
class Character:
    name: str
    description: str


@dataclass(frozen=True)
class PredicateCondition:
    """Free-text statement judged true/false against the playthrough."""

    statement: str


@dataclass(frozen=True)
class LineCountCondition:
    """Triggers once the scene has generated at least line_count lines."""

    line_count: int


Condition = PredicateCondition | LineCountCondition


@dataclass(frozen=True)
class Outcome:
    description: str
    ends_scene: bool = False
    transition_to: str | None = None


@dataclass(frozen=True)
class Event:
    id: str
    condition: Condition
    outcome: Outcome


@dataclass(frozen=True)
class Scene:
    id: str
    character_names: tuple[str, ...]
    setting: str
    opening_line: str
    events: tuple[Event, ...]


@dataclass(frozen=True)
class StorySchema:
    title: str
    style: str
    characters: tuple[Character, ...]
    scenes: tuple[Scene, ...]

    def scene(self, scene_id: str) -> Scene:
        for scene in self.scenes:
            if scene.id == scene_id:
                return scene
        raise KeyError(scene_id)

    def character(self, name: str) -> Character:
        for character in self.characters:
            if character.name == name:
                return character
        raise KeyError(name)


def player_character(schema: StorySchema) -> Character:
    """The first-listed character, voiced exclusively by player input."""
    return schema.characters[0]


# --- parsing -----------------------------------------------------------------


def _reject_duplicate_keys(pairs: list[tuple[str, object]]):
    seen = set()
    for key, _ in pairs:
        if key in seen:
            raise _DuplicateKey(key)
        seen.add(key)
    return dict(pairs)


class _DuplicateKey(Exception):
    def __init__(self, key: str):
        self.key = key


class _Parser:
    def __init__(self) -> None:
        self.diagnostics: list[Diagnostic] = []

    def error(self, code: str, path: str, message: str) -> None:
        self.diagnostics.append(Diagnostic(Severity.ERROR, code, message, path))

    def require(self, obj: dict, key: str, kind: type | tuple, path: str):
        """Fetch obj[key], recording missing-field / wrong-type. None on failure."""
        if key not in obj:
            self.error("missing-field", f"{path}.{key}" if path != ROOT_PATH else key,
                       f"required field {key!r} is missing")
            return None
        value = obj[key]
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            expected = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
            self.error("wrong-type", f"{path}.{key}" if path != ROOT_PATH else key,
                       f"field {key!r} must be {expected}, got {type(value).__name__}")
            return None
        return value

    def parse(self, document: str) -> StorySchema | None:
        try:
            data = json.loads(document, object_pairs_hook=_reject_duplicate_keys)
        except _DuplicateKey as dup:
            self.error("duplicate-key", ROOT_PATH, f"duplicate object key {dup.key!r}")
            return None
        except json.JSONDecodeError as exc:
            self.error("syntax", ROOT_PATH, f"invalid JSON: {exc}")
            return None
        if not isinstance(data, dict):
            self.error("syntax", ROOT_PATH, "document root must be a JSON object")
            return None

        title = self.require(data, "title", str, ROOT_PATH)
        style = self.require(data, "style", str, ROOT_PATH)
        characters = self._parse_characters(data)
        scenes = self._parse_scenes(data)
        if self.diagnostics:
            return None
        return StorySchema(title=title, style=style, characters=characters, scenes=scenes)

    def _parse_characters(self, data: dict) -> tuple[Character, ...]:
        raw = self.require(data, "characters", list, ROOT_PATH)
        if raw is None:
            return ()
        out = []
        for i, item in enumerate(raw):
            path = f"characters[{i}]"
            if not isinstance(item, dict):
                self.error("wrong-type", path, "character entries must be objects")
                continue
            name = self.require(item, "name", str, path)
            description = self.require(item, "description", str, path)
            if name is not None and description is not None:
                out.append(Character(name=name, description=description))
        return tuple(out)

    def _parse_scenes(self, data: dict) -> tuple[Scene, ...]:
        raw = self.require(data, "scenes", list, ROOT_PATH)
        if raw is None:
            return ()
        out = []
        for i, item in enumerate(raw):
            path = f"scenes[{i}]"
            if not isinstance(item, dict):
                self.error("wrong-type", path, "scene entries must be objects")
                continue
            scene = self._parse_scene(item, path)
            if scene is not None:
                out.append(scene)
        return tuple(out)

    def _parse_scene(self, item: dict, path: str) -> Scene | None:
        name = self.require(item, "name", str, path)
        names = self.require(item, "characters", list, path)
        setting = self.require(item, "setting", str, path)
        opening = self.require(item, "opening_line", str, path)
        raw_events = self.require(item, "events", list, path)
        character_names: list[str] = []
        if names is not None:
            for j, entry in enumerate(names):
                if not isinstance(entry, str):
                    self.error("wrong-type", f"{path}.characters[{j}]",
                               "scene character entries must be name strings")
                else:
                    character_names.append(entry)
        events = []
        if raw_events is not None:
            for j, raw_event in enumerate(raw_events):
                event_path = f"{path}.events[{j}]"
                if not isinstance(raw_event, dict):
                    self.error("wrong-type", event_path, "event entries must be objects")
                    continue
                event = self._parse_event(raw_event, event_path)
                if event is not None:
                    events.append(event)
        if self.diagnostics:
            return None
        return Scene(
            id=name,
            character_names=tuple(character_names),
            setting=setting,
            opening_line=opening,
            events=tuple(events),
        )

    def _parse_event(self, item: dict, path: str) -> Event | None:
        event_id = self.require(item, "id", str, path)
        condition = self._parse_condition(item, path)
        outcome = None
        raw_outcome = self.require(item, "outcome", dict, path)
        if raw_outcome is not None:
            description = self.require(raw_outcome, "description", str, f"{path}.outcome")
            ends_scene = self.require(raw_outcome, "ends_scene", bool, f"{path}.outcome")
            transition_to = None
            if "transition_to" in raw_outcome:
                transition_to = self.require(raw_outcome, "transition_to", str, f"{path}.outcome")
            if description is not None and ends_scene is not None:
                outcome = Outcome(description=description, ends_scene=ends_scene,
                                  transition_to=transition_to)
        if event_id is None or condition is None or outcome is None:
            return None
        return Event(id=event_id, condition=condition, outcome=outcome)

    def _parse_condition(self, item: dict, path: str) -> Condition | None:
        has_when = "when" in item
        has_count = "after_lines" in item
        if has_when and has_count:
            self.error("condition-ambiguous", path,
                       "exactly one of 'when' / 'after_lines' is allowed, not both")
            return None
        if not has_when and not has_count:
            self.error("condition-missing", path,
                       "event needs a condition: either 'when' or 'after_lines'")
            return None
        if has_when:
            statement = self.require(item, "when", str, path)
            return None if statement is None else PredicateCondition(statement=statement)
        count = self.require(item, "after_lines", int, path)
        return None if count is None else LineCountCondition(line_count=count)


def parse_schema(document: str) -> StorySchema:
    """Parse a schema document; raises SchemaFormatError with diagnostics."""
    parser = _Parser()
    schema = parser.parse(document)
    if schema is None:
        raise SchemaFormatError(parser.diagnostics)
    return schema


def serialize_schema(schema: StorySchema) -> str:
    """Render a schema back to its document form (parse round-trips)."""

    def event_obj(event: Event) -> dict:
        obj: dict = {"id": event.id}
        if isinstance(event.condition, PredicateCondition):
            obj["when"] = event.condition.statement
        else:
            obj["after_lines"] = event.condition.line_count
        outcome: dict = {
            "description": event.outcome.description,
            "ends_scene": event.outcome.ends_scene,
        }
        if event.outcome.transition_to is not None:
            outcome["transition_to"] = event.outcome.transition_to
        obj["outcome"] = outcome
        return obj

    doc = {
        "title": schema.title,
        "style": schema.style,
        "characters": [
            {"name": c.name, "description": c.description} for c in schema.characters
        ],
        "scenes": [
            {
                "name": s.id,
                "characters": list(s.character_names),
                "setting": s.setting,
                "opening_line": s.opening_line,
                "events": [event_obj(e) for e in s.events],
            }
            for s in schema.scenes
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


# --- validation --------------------------------------------------------------


def validate_schema(schema: StorySchema) -> list[Diagnostic]:
    """Every invariant violation as a Diagnostic; empty list means playable.

    Errors block playthrough start; warnings do not. Output is sorted by
    (path, code) so equal schemas always yield the identical list.
    """
    diags: list[Diagnostic] = []

    def error(code: str, path: str, message: str) -> None:
        diags.append(Diagnostic(Severity.ERROR, code, message, path))

    def warning(code: str, path: str, message: str) -> None:
        diags.append(Diagnostic(Severity.WARNING, code, message, path))

    if not schema.characters:
        error("no-characters", "characters", "at least one character is required")
    if not schema.scenes:
        error("no-scenes", "scenes", "at least one scene is required")

    seen_names: set[str] = set()
    for i, character in enumerate(schema.characters):
        path = f"characters[{i}]"
        if not character.name.strip():
            error("empty-name", f"{path}.name", "character name must be non-empty")
        if "\n" in character.name:
            error("name-has-newline", f"{path}.name", "character name must not contain newlines")
        if ":" in character.name:
            error("name-has-colon", f"{path}.name",
                  "character name must not contain ':' (reserved speaker delimiter)")
        if character.name == NARRATOR:
            error("reserved-name", f"{path}.name",
                  f"{NARRATOR!r} is reserved for pure narration lines")
        if not character.description.strip():
            error("empty-description", f"{path}.description",
                  "character description must be non-empty")
        if character.name in seen_names:
            error("duplicate-character", f"{path}.name",
                  f"character name {character.name!r} is already defined")
        seen_names.add(character.name)

    schema_names = {c.name for c in schema.characters}
    scene_ids: set[str] = set()
    for i, scene in enumerate(schema.scenes):
        path = f"scenes[{i}]"
        if scene.id in scene_ids:
            error("duplicate-scene", f"{path}.name", f"scene name {scene.id!r} is already used")
        scene_ids.add(scene.id)
        if not scene.opening_line:
            error("empty-opening-line", f"{path}.opening_line",
                  "scene opening line must be non-empty")
        for name in scene.character_names:
            if name not in schema_names:
                error("unknown-character", f"{path}.characters",
                      f"scene lists {name!r}, which is not a schema character")
        if not scene.events:
            error("no-events", f"{path}.events", "scene needs at least one event")
        self_ids: set[str] = set()
        endable = False
        for j, event in enumerate(scene.events):
            event_path = f"{path}.events[{j}]"
            if event.id in self_ids:
                error("duplicate-event", f"{event_path}.id",
                      f"event id {event.id!r} is already used in this scene")
            self_ids.add(event.id)
            if isinstance(event.condition, PredicateCondition):
                if not event.condition.statement.strip():
                    error("empty-condition", f"{event_path}.when",
                          "condition statement must be non-empty")
                else:
                    _lint_predicate(warning, event.condition.statement, scene, schema,
                                    f"{event_path}.when")
            else:
                if event.condition.line_count < 1:
                    error("invalid-line-count", f"{event_path}.after_lines",
                          "after_lines must be a positive integer")
            if event.outcome.ends_scene:
                endable = True
            if event.outcome.transition_to is not None:
                out_path = f"{event_path}.outcome.transition_to"
                if not event.outcome.ends_scene:
                    error("transition-without-end", out_path,
                          "transition_to requires ends_scene=true")
                if event.outcome.transition_to not in {s.id for s in schema.scenes}:
                    error("transition-unknown-scene", out_path,
                          f"no scene named {event.outcome.transition_to!r}")
        if scene.events and not endable:
            error("scene-never-ends", f"{path}.events",
                  "no event ends the scene, so the playthrough could never leave it")

    for i in _unreachable_scenes(schema):
        warning("unreachable-scene", f"scenes[{i}]",
                f"scene {schema.scenes[i].id!r} is never reached from the opening scene")

    diags.sort(key=lambda d: (d.path, d.code))
    return diags


def _lint_predicate(warning, statement: str, scene: Scene, schema: StorySchema, path: str) -> None:
    lowered = statement.lower()
    present = [n for n in scene.character_names if n.lower() in lowered]
    if present:
        return
    absent = sorted(
        c.name for c in schema.characters
        if c.name not in scene.character_names and c.name.lower() in lowered
    )
    if absent:
        message = "condition mentions no scene character (mentions absent: {})".format(
            ", ".join(absent)
        )
    else:
        message = "condition mentions no scene character"
    warning("condition-no-scene-character", path, message)


def _unreachable_scenes(schema: StorySchema) -> list[int]:
    """Indices of scenes breadth-first-unreachable from scenes[0] via transitions."""
    if not schema.scenes:
        return []
    index_of = {scene.id: i for i, scene in enumerate(schema.scenes)}
    visited = {0}
    frontier = [0]
    while frontier:
        current = frontier.pop(0)
        for event in schema.scenes[current].events:
            target = event.outcome.transition_to
            if target in index_of and index_of[target] not in visited:
                visited.add(index_of[target])
                frontier.append(index_of[target])
    return [i for i in range(len(schema.scenes)) if i not in visited]


def check_document(document: str) -> tuple[StorySchema | None, list[Diagnostic]]:
    """Parse then validate; never raises. Schema is None on parse failure."""
    try:
        schema = parse_schema(document)
    except SchemaFormatError as exc:
        return None, list(exc.diagnostics)
    return schema, validate_schema(schema)


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)
