"""Condition interpretation: which pending events does the playthrough satisfy?

Runs after every player input. Free-text predicate conditions are judged by
a completion backend; line-count conditions are handled deterministically
and never reach a provider. A rule-based interpreter (substring matching on
the last player line) ships for deterministic tests and evaluation oracles.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .instantiation import (
    ResponseFormatError,
    _load_response_object,
    _load_template,
    with_format_reminder,
)
from .provider import CompletionProvider, Prompt, PromptPurpose
from .schema import LineCountCondition, PredicateCondition, StorySchema
from .transcript import Line, LineKind

logger = logging.getLogger(__name__)

TEMPLATE_ID = "interpretation/v1"

_QUOTED_RE = re.compile(r'"([^"]+)"')


@dataclass(frozen=True)
class InterpretationContext:
    """Current-scene transcript plus the predicate conditions still pending."""

    transcript_lines: tuple[Line, ...]
    pending_predicates: tuple[tuple[str, str], ...]
    player_character_name: str

    def __post_init__(self) -> None:
        ids = [event_id for event_id, _ in self.pending_predicates]
        if len(ids) != len(set(ids)):
            raise ValueError("pending predicate ids must be unique")


@dataclass(frozen=True)
class InterpretationResult:
    satisfied_event_ids: tuple[str, ...]


def evaluate_line_count(pending: list[tuple[str, LineCountCondition]],
                        generated_count: int) -> list[str]:
    """Ids whose threshold the scene's generated-line count has reached."""
    return [event_id for event_id, cond in pending if cond.line_count <= generated_count]


def build_interpretation_prompt(ctx: InterpretationContext) -> Prompt:
    if not ctx.pending_predicates:
        raise ValueError("no pending predicates; the provider call should be skipped")
    transcript = "\n".join(line.content for line in ctx.transcript_lines)
    conditions = "\n".join(f"- {event_id}: {statement}"
                           for event_id, statement in ctx.pending_predicates)
    text = _load_template("interpretation_v1.txt").substitute(
        transcript=transcript,
        conditions=conditions,
    )
    return Prompt(template_id=TEMPLATE_ID, rendered_text=text,
                  purpose=PromptPurpose.INTERPRETATION)


class InterpretationFormatError(Exception):
    pass


def parse_interpretation_response(raw: str, ctx: InterpretationContext) -> InterpretationResult:
    """Filter the reported ids down to the pending set; empty is valid."""
    try:
        data = _load_response_object(raw)
    except ResponseFormatError as exc:
        raise InterpretationFormatError(str(exc)) from exc
    satisfied = data.get("satisfied")
    if not isinstance(satisfied, list):
        raise InterpretationFormatError("field 'satisfied' must be a list of event ids")
    pending_ids = {event_id for event_id, _ in ctx.pending_predicates}
    out: list[str] = []
    for entry in satisfied:
        if not isinstance(entry, str) or entry not in pending_ids:
            logger.warning("dropping unknown satisfied event id %r", entry)
            continue
        if entry not in out:
            out.append(entry)
    return InterpretationResult(satisfied_event_ids=tuple(out))


class LlmInterpreter:
    """Provider-backed judge; a malformed reply is retried once, then read
    as "nothing satisfied" (a missed trigger recovers on the next input)."""

    def __init__(self, provider: CompletionProvider, retry_limit: int = 1):
        self.provider = provider
        self.retry_limit = retry_limit

    def descriptor(self) -> dict:
        """Replay identity: enough to reconstruct this judge from a cassette."""
        return {"kind": "llm", "retry_limit": self.retry_limit}

    def judge(self, ctx: InterpretationContext) -> InterpretationResult:
        if not ctx.pending_predicates:
            return InterpretationResult(satisfied_event_ids=())
        prompt = build_interpretation_prompt(ctx)
        for attempt in range(self.retry_limit + 1):
            raw = self.provider.complete(prompt)
            try:
                return parse_interpretation_response(raw, ctx)
            except InterpretationFormatError as exc:
                if attempt >= self.retry_limit:
                    logger.warning("interpretation unusable after retries (%s); "
                                   "treating as nothing satisfied", exc)
                    return InterpretationResult(satisfied_event_ids=())
                prompt = with_format_reminder(build_interpretation_prompt(ctx), str(exc))
        return InterpretationResult(satisfied_event_ids=())


class RulesInterpreter:
    """Deterministic judge: an event is satisfied when the last player line
    contains any of its key phrases (case-insensitive substring match)."""

    def __init__(self, rules: dict[str, list[str]]):
        self.rules = {event_id: [k.lower() for k in keys] for event_id, keys in rules.items()}

    def descriptor(self) -> dict:
        return {"kind": "rules", "rules": self.rules}

    @classmethod
    def from_schema(cls, schema: StorySchema) -> "RulesInterpreter":
        """Default keys per predicate event: double-quoted spans inside the
        condition statement, else the whole statement."""
        rules: dict[str, list[str]] = {}
        for scene in schema.scenes:
            for event in scene.events:
                if isinstance(event.condition, PredicateCondition):
                    quoted = _QUOTED_RE.findall(event.condition.statement)
                    rules[event.id] = quoted or [event.condition.statement]
        return cls(rules)

    def judge(self, ctx: InterpretationContext) -> InterpretationResult:
        last_player = next(
            (line for line in reversed(ctx.transcript_lines) if line.kind is LineKind.PLAYER),
            None,
        )
        if last_player is None:
            return InterpretationResult(satisfied_event_ids=())
        haystack = last_player.content.lower()
        satisfied = tuple(
            event_id
            for event_id, _ in ctx.pending_predicates
            if any(key in haystack for key in self.rules.get(event_id, ()))
        )
        return InterpretationResult(satisfied_event_ids=satisfied)
