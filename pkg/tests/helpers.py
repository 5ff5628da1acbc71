"""Shared test scaffolding: schema builders and scripted engine doubles."""

from __future__ import annotations

import json
import random

from dramaturge.instantiation import InstantiationContext, InstantiationResult
from dramaturge.interpretation import InterpretationResult
from dramaturge.schema import (
    Character,
    Event,
    LineCountCondition,
    Outcome,
    PredicateCondition,
    Scene,
    StorySchema,
)
from dramaturge.transcript import NARRATOR


def response_json(speaker="Maria", narration=None, actions=None, dialogue="Hm.",
                  pause=True, realized=(), **extra) -> str:
    data = {"speaker": speaker, "narration": narration, "actions": actions,
            "dialogue": dialogue, "pause": pause, "realized": list(realized)}
    data.update(extra)
    return json.dumps(data, ensure_ascii=False)


def line_count_event(event_id="ender", n=1, ends_scene=True, transition_to=None,
                     description="it ends") -> Event:
    return Event(id=event_id, condition=LineCountCondition(line_count=n),
                 outcome=Outcome(description=description, ends_scene=ends_scene,
                                 transition_to=transition_to))


def predicate_event(event_id, statement, ends_scene=False, transition_to=None,
                    description="something happens") -> Event:
    return Event(id=event_id, condition=PredicateCondition(statement=statement),
                 outcome=Outcome(description=description, ends_scene=ends_scene,
                                 transition_to=transition_to))


def make_schema(scenes: list[Scene] | None = None,
                characters: list[Character] | None = None,
                title="Test Story", style="plain prose") -> StorySchema:
    characters = characters or [
        Character(name="Ava", description="the player"),
        Character(name="Bern", description="a talkative companion"),
    ]
    scenes = scenes or [
        Scene(id="One", character_names=tuple(c.name for c in characters),
              setting="a small room", opening_line="it begins.",
              events=(line_count_event(n=50),)),
    ]
    return StorySchema(title=title, style=style, characters=tuple(characters),
                       scenes=tuple(scenes))


class ScriptedInstantiator:
    """Returns a fixed plan of results, failing loudly when it runs dry."""

    def __init__(self, plan: list[InstantiationResult]):
        self.plan = list(plan)

    def next_line(self, ctx: InstantiationContext) -> InstantiationResult:
        if not self.plan:
            raise AssertionError("scripted instantiator ran out of planned lines")
        return self.plan.pop(0)


def gen_result(speaker="Bern", dialogue="Indeed.", narration=None, actions=None,
               pause=True, realized=()) -> InstantiationResult:
    return InstantiationResult(speaker=speaker, narration=narration, actions=actions,
                               dialogue=dialogue, pause=pause,
                               realized_event_ids=tuple(realized))


class AutoInstantiator:
    """Policy double for arbitrary schemas: speaks as the first non-player
    scene character (or the narrator), realizes one active outcome per line,
    and pauses pseudo-randomly from a fixed seed."""

    def __init__(self, seed: int = 0, realize_promptly: bool = True):
        self.rng = random.Random(seed)
        self.realize_promptly = realize_promptly

    def next_line(self, ctx: InstantiationContext) -> InstantiationResult:
        speaker = next(
            (c.name for c in ctx.scene_characters if c.name != ctx.player_character_name),
            NARRATOR,
        )
        realized = ()
        if self.realize_promptly and ctx.active_outcomes:
            realized = (ctx.active_outcomes[0][0],)
        if speaker == NARRATOR:
            return InstantiationResult(
                speaker=NARRATOR, narration=f"time passes ({self.rng.randrange(1000)}).",
                actions=None, dialogue=None, pause=self.rng.random() < 0.5,
                realized_event_ids=realized)
        return InstantiationResult(
            speaker=speaker, narration=None, actions=None,
            dialogue=f"and then ({self.rng.randrange(1000)}).",
            pause=self.rng.random() < 0.5, realized_event_ids=realized)


class StaticInterpreter:
    """Judges from a fixed queue of satisfied-id lists (one per call)."""

    def __init__(self, per_call: list[list[str]]):
        self.per_call = list(per_call)

    def judge(self, ctx) -> InterpretationResult:
        ids = self.per_call.pop(0) if self.per_call else []
        pending = {event_id for event_id, _ in ctx.pending_predicates}
        return InterpretationResult(
            satisfied_event_ids=tuple(i for i in ids if i in pending))


class NullInterpreter:
    def judge(self, ctx) -> InterpretationResult:
        return InterpretationResult(satisfied_event_ids=())

    def descriptor(self) -> dict:
        return {"kind": "rules", "rules": {}}


def random_valid_schema(rng: random.Random) -> StorySchema:
    """A seeded, always-valid schema: scenes chained by line-count transition
    events, plus assorted predicate events that may or may not fire."""
    names = [f"Role{chr(65 + i)}{rng.randrange(100)}" for i in range(rng.randint(2, 4))]
    characters = [Character(name=n, description=f"described as {rng.randrange(10**6)}")
                  for n in names]
    scene_count = rng.randint(1, 4)
    scene_ids = [f"Scene{i}_{rng.randrange(1000)}" for i in range(scene_count)]
    scenes = []
    for i, sid in enumerate(scene_ids):
        present = [names[0]] + [n for n in names[1:] if rng.random() < 0.8]
        target = scene_ids[i + 1] if i + 1 < scene_count else None
        events = [line_count_event(
            event_id=f"end_{i}", n=rng.randint(1, 4), ends_scene=True,
            transition_to=target, description=f"scene {i} wraps up")]
        for k in range(rng.randint(0, 2)):
            events.append(predicate_event(
                f"pred_{i}_{k}", f"{names[0]} (player) does thing {rng.randrange(100)}",
                description=f"aside {rng.randrange(100)}"))
        rng.shuffle(events)
        scenes.append(Scene(
            id=sid,
            character_names=tuple(present),
            setting=f"setting {rng.randrange(10**6)}",
            opening_line=f"scene {i} opens with token {rng.randrange(10**9)}.",
            events=tuple(events),
        ))
    return StorySchema(title=f"Random {rng.randrange(10**6)}",
                       style=f"style {rng.randrange(10**6)}",
                       characters=tuple(characters), scenes=tuple(scenes))
