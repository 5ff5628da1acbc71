"""Transcript primitives: lines, player input, canonical rendering.

A playthrough is an ordered list of lines. A line carries one character's
actions/dialogue, optionally prefixed by third-person narration; pure
narration uses the reserved NARRATOR speaker.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

NARRATOR = "NARRATOR"


class LineKind(str, Enum):
    OPENING = "opening"
    GENERATED = "generated"
    PLAYER = "player"


@dataclass(frozen=True)
class Line:
    """One transcript unit.

    index is global and monotonically increasing across the whole
    playthrough; pause_after records the engine-effective pause (the
    playthrough stops for input after this line iff it is True).
    """

    index: int
    scene_id: str
    kind: LineKind
    speaker: str
    narration: str | None = None
    actions: str | None = None
    dialogue: str | None = None
    pause_after: bool = False

    def __post_init__(self) -> None:
        if not (self.narration or self.actions or self.dialogue):
            raise ValueError("line needs at least one of narration/actions/dialogue")
        if self.index < 0:
            raise ValueError("line index must be nonnegative")

    @property
    def content(self) -> str:
        """Canonical rendering for prompts, display, and logs."""
        return render_line_parts(self.speaker, self.narration, self.actions, self.dialogue)

    def to_record(self) -> dict:
        # Stable key order: logs are compared byte-for-byte on replay.
        return {
            "index": self.index,
            "scene": self.scene_id,
            "kind": self.kind.value,
            "speaker": self.speaker,
            "narration": self.narration,
            "actions": self.actions,
            "dialogue": self.dialogue,
            "pause": self.pause_after,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Line":
        return cls(
            index=record["index"],
            scene_id=record["scene"],
            kind=LineKind(record["kind"]),
            speaker=record["speaker"],
            narration=record["narration"],
            actions=record["actions"],
            dialogue=record["dialogue"],
            pause_after=record["pause"],
        )


@dataclass(frozen=True)
class PlayerInput:
    """Player contribution in "(actions) dialogue" form; either part may be empty."""

    actions: str | None = None
    dialogue: str | None = None

    def __post_init__(self) -> None:
        if not (self.actions and self.actions.strip()) and not (
            self.dialogue and self.dialogue.strip()
        ):
            raise ValueError("player input needs actions or dialogue")

    def render(self) -> str:
        """Serialize back to the "(actions) dialogue" input form."""
        parts = []
        if self.actions:
            parts.append(f"({self.actions})")
        if self.dialogue:
            parts.append(self.dialogue)
        return " ".join(parts)


def parse_player_input(text: str) -> PlayerInput | None:
    """Parse raw "(actions) dialogue" text; returns None for blank input.

    A leading parenthesized span is the actions part; everything after it
    is dialogue. Text without a leading "(" is dialogue only.
    """
    text = text.strip()
    if not text:
        return None
    actions = None
    dialogue = None
    if text.startswith("("):
        close = text.find(")")
        if close == -1:
            # Unterminated actions span: treat the rest as actions.
            actions = text[1:].strip()
        else:
            actions = text[1:close].strip()
            rest = text[close + 1 :].strip()
            dialogue = rest or None
    else:
        dialogue = text
    if not actions and not dialogue:
        return None
    return PlayerInput(actions=actions or None, dialogue=dialogue)


def render_line_parts(
    speaker: str,
    narration: str | None,
    actions: str | None,
    dialogue: str | None,
) -> str:
    """Canonical "<narration> <Speaker>: (<actions>) <dialogue>" rendering.

    Absent parts are omitted; a pure-narration (NARRATOR) line renders as
    the narration text alone.
    """
    parts: list[str] = []
    if narration:
        parts.append(narration)
    if speaker != NARRATOR and (actions or dialogue):
        spoken = f"{speaker}:"
        if actions:
            spoken += f" ({actions})"
        if dialogue:
            spoken += f" {dialogue}"
        parts.append(spoken)
    return " ".join(parts)
