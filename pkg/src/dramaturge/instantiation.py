"""Next-line generation: prompt construction and structured-response parsing.

One completion produces one line plus control data: the speaking character,
the pause flag that decides whether the playthrough stops for player input,
and the ids of triggered outcomes the line has now expressed. The player
character is never a legal speaker here; their words come only from input.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from importlib import resources
from string import Template

from .provider import CompletionProvider, Prompt, PromptPurpose
from .schema import Character
from .transcript import NARRATOR, Line, PlayerInput, render_line_parts

logger = logging.getLogger(__name__)

TEMPLATE_ID = "instantiation/v1"
REMINDER_TEMPLATE_ID = "format-reminder/v1"

MALFORMED_STRUCTURE = "malformed-structure"
INVALID_SPEAKER = "invalid-speaker"
EMPTY_CONTENT = "empty-content"

_FENCE_RE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


def _load_template(name: str) -> Template:
    text = resources.files("dramaturge").joinpath(f"templates/{name}").read_text("utf-8")
    return Template(text)


class ResponseFormatError(Exception):
    """A completion that cannot be accepted as a line (engine retries once)."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


@dataclass(frozen=True)
class InstantiationContext:
    """Everything the next-line prompt is conditioned on."""

    style: str
    scene_characters: tuple[Character, ...]
    player_character_name: str
    setting: str
    prior_lines: tuple[Line, ...]
    active_outcomes: tuple[tuple[str, str], ...] = ()
    last_player_input: PlayerInput | None = None

    def __post_init__(self) -> None:
        if not self.prior_lines:
            raise ValueError("prior_lines must be non-empty (the opening line always exists)")

    @property
    def speaker_names(self) -> frozenset[str]:
        return frozenset(c.name for c in self.scene_characters) | {NARRATOR}


@dataclass(frozen=True)
class InstantiationResult:
    speaker: str
    narration: str | None
    actions: str | None
    dialogue: str | None
    pause: bool
    realized_event_ids: tuple[str, ...] = ()

    @property
    def content(self) -> str:
        return render_line_parts(self.speaker, self.narration, self.actions, self.dialogue)


def build_instantiation_prompt(ctx: InstantiationContext) -> Prompt:
    """Deterministic prompt text; equal contexts render byte-identically."""
    characters = "\n".join(
        f"- {c.name}: {c.description}" for c in ctx.scene_characters
    )
    transcript = "\n".join(line.content for line in ctx.prior_lines)

    outcomes_section = ""
    if ctx.active_outcomes:
        listed = "\n".join(f"- {event_id}: {desc}" for event_id, desc in ctx.active_outcomes)
        outcomes_section = (
            "\nOutcomes whose conditions are now satisfied. Incorporate them"
            " organically into the playthrough; you may use multiple lines to"
            ' convey one. When your line expresses an outcome, list its id in'
            ' "realized":\n' + listed + "\n"
        )

    responsiveness_section = ""
    if ctx.last_player_input is not None:
        responsiveness_section = (
            f"\nThe next line must be highly responsive to the most recent input"
            f" from {ctx.player_character_name}: {ctx.last_player_input.render()}"
            f" (regardless of whether that input satisfied any event conditions).\n"
        )

    text = _load_template("instantiation_v1.txt").substitute(
        style=ctx.style,
        characters=characters,
        setting=ctx.setting,
        player_name=ctx.player_character_name,
        transcript=transcript,
        outcomes_section=outcomes_section,
        responsiveness_section=responsiveness_section,
    )
    return Prompt(template_id=TEMPLATE_ID, rendered_text=text,
                  purpose=PromptPurpose.INSTANTIATION)


def with_format_reminder(prompt: Prompt, reason: str) -> Prompt:
    """The retry prompt: original text plus an appended format reminder."""
    reminder = _load_template("format_reminder_v1.txt").substitute(reason=reason)
    return Prompt(template_id=prompt.template_id,
                  rendered_text=prompt.rendered_text + reminder,
                  purpose=prompt.purpose)


def _strip_fences(raw: str) -> str:
    raw = raw.strip()
    match = _FENCE_RE.match(raw)
    if match:
        return match.group(1).strip()
    return raw


def _load_response_object(raw: str) -> dict:
    text = _strip_fences(raw)
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        # Some backends wrap the object in prose; salvage the outermost braces.
        start, end = text.find("{"), text.rfind("}")
        if start == -1 or end <= start:
            raise ResponseFormatError(MALFORMED_STRUCTURE, "response is not a JSON object")
        try:
            data = json.loads(text[start : end + 1])
        except json.JSONDecodeError:
            raise ResponseFormatError(MALFORMED_STRUCTURE, "response is not a JSON object")
    if not isinstance(data, dict):
        raise ResponseFormatError(MALFORMED_STRUCTURE, "response must be a JSON object")
    return data


def _optional_text(data: dict, key: str) -> str | None:
    value = data.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise ResponseFormatError(MALFORMED_STRUCTURE, f"field {key!r} must be a string")
    value = value.strip()
    return value or None


def parse_instantiation_response(raw: str, ctx: InstantiationContext) -> InstantiationResult:
    """Validate a completion into an InstantiationResult.

    Unknown realized ids are dropped with a warning; a player-character or
    unknown speaker is a hard failure so the engine can retry.
    """
    data = _load_response_object(raw)

    speaker = data.get("speaker")
    if not isinstance(speaker, str) or not speaker.strip():
        raise ResponseFormatError(MALFORMED_STRUCTURE, "field 'speaker' must be a non-empty string")
    speaker = speaker.strip()

    pause = data.get("pause")
    if not isinstance(pause, bool):
        raise ResponseFormatError(MALFORMED_STRUCTURE, "field 'pause' must be a boolean")

    narration = _optional_text(data, "narration")
    actions = _optional_text(data, "actions")
    dialogue = _optional_text(data, "dialogue")

    if speaker == ctx.player_character_name:
        raise ResponseFormatError(
            INVALID_SPEAKER,
            f"{speaker!r} is the player character; their lines come only from player input")
    if speaker not in ctx.speaker_names:
        raise ResponseFormatError(INVALID_SPEAKER, f"{speaker!r} is not a scene character")
    if speaker == NARRATOR and (actions or dialogue):
        raise ResponseFormatError(
            MALFORMED_STRUCTURE, "NARRATOR lines carry narration only, no actions/dialogue")

    if not (narration or actions or dialogue):
        raise ResponseFormatError(EMPTY_CONTENT, "the line says nothing")

    raw_realized = data.get("realized", [])
    if not isinstance(raw_realized, list):
        raise ResponseFormatError(MALFORMED_STRUCTURE, "field 'realized' must be a list")
    active_ids = {event_id for event_id, _ in ctx.active_outcomes}
    realized: list[str] = []
    for entry in raw_realized:
        if not isinstance(entry, str) or entry not in active_ids:
            logger.warning("dropping unknown realized event id %r", entry)
            continue
        if entry not in realized:
            realized.append(entry)

    return InstantiationResult(
        speaker=speaker,
        narration=narration,
        actions=actions,
        dialogue=dialogue,
        pause=pause,
        realized_event_ids=tuple(realized),
    )


def render_instantiation_result(result: InstantiationResult) -> str:
    """Canonical wire encoding; parse_instantiation_response round-trips it."""
    return json.dumps(
        {
            "speaker": result.speaker,
            "narration": result.narration,
            "actions": result.actions,
            "dialogue": result.dialogue,
            "pause": result.pause,
            "realized": list(result.realized_event_ids),
        },
        ensure_ascii=False,
    )


class Instantiator:
    """Provider-backed next-line generator with bounded format retries."""

    def __init__(self, provider: CompletionProvider, retry_limit: int = 1):
        self.provider = provider
        self.retry_limit = retry_limit

    def next_line(self, ctx: InstantiationContext) -> InstantiationResult:
        prompt = build_instantiation_prompt(ctx)
        attempt = 0
        while True:
            raw = self.provider.complete(prompt)
            try:
                return parse_instantiation_response(raw, ctx)
            except ResponseFormatError as exc:
                if attempt >= self.retry_limit:
                    raise
                attempt += 1
                logger.warning("retrying instantiation after %s: %s", exc.code, exc)
                prompt = with_format_reminder(build_instantiation_prompt(ctx), str(exc))
