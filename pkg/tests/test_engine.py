"""Playthrough state machine: turn loop, triggers, scene ends, replay."""

import json

import pytest

from dramaturge.engine import (
    EngineConfig,
    EventState,
    Phase,
    ReplayDivergence,
    SchemaInvalidError,
    SnapshotVersionError,
    WrongPhaseError,
    advance,
    replay,
    resume,
    run_scripted,
    run_until_pause,
    snapshot,
    start_playthrough,
    submit_input,
)
from dramaturge.instantiation import Instantiator, ResponseFormatError
from dramaturge.interpretation import RulesInterpreter
from dramaturge.provider import (
    Cassette,
    CassetteMiss,
    RecordingProvider,
    ReplayProvider,
    SequenceProvider,
)
from dramaturge.schema import Character, Scene, parse_schema
from dramaturge.transcript import LineKind, NARRATOR, PlayerInput

from helpers import (
    AutoInstantiator,
    NullInterpreter,
    ScriptedInstantiator,
    StaticInterpreter,
    gen_result,
    line_count_event,
    make_schema,
    predicate_event,
)

OPENING_SUPERHERO = ("you walk into the reporter's corner on your first day — the "
                     "superhero showdown is about to begin, and you want the story.")


def one_scene_schema(events, characters=None):
    characters = characters or [Character(name="Ava", description="the player"),
                                Character(name="Bern", description="a companion")]
    return make_schema(
        characters=characters,
        scenes=[Scene(id="One", character_names=tuple(c.name for c in characters),
                      setting="a small room", opening_line="it begins.",
                      events=tuple(events))],
    )


class TestStartPlaythrough:
    def test_superhero_opening_verbatim(self, superhero_schema):
        session = start_playthrough(superhero_schema)
        assert session.transcript[0].content == OPENING_SUPERHERO
        assert session.transcript[0].kind is LineKind.OPENING
        assert session.transcript[0].speaker == NARRATOR
        assert session.transcript[0].pause_after is True

    def test_minimal_schema(self):
        session = start_playthrough(one_scene_schema([line_count_event(n=5)]))
        assert len(session.transcript) == 1
        assert session.phase is Phase.AWAITING_INPUT
        assert session.generated_count_in_scene == 1
        assert all(s.state is EventState.PENDING for s in session.event_status.values())

    def test_invalid_schema_refused(self):
        bad = one_scene_schema([predicate_event("p", "Ava (player) waves")])  # never ends
        with pytest.raises(SchemaInvalidError):
            start_playthrough(bad)


class TestSubmitInput:
    def test_condition_triggered_and_outcome_activates(self):
        schema = one_scene_schema([
            predicate_event("ask_whats_going_on", "Ava (player) asks what's going on",
                            description="someone explains the competition"),
            line_count_event(n=30),
        ])
        session = start_playthrough(schema)
        rules = RulesInterpreter({"ask_whats_going_on": ["what's going on"]})
        step = submit_input(session, PlayerInput(actions="looks around",
                                                 dialogue="What's going on here?"), rules)
        assert step.triggered_event_ids == [("One", "ask_whats_going_on")]
        assert session.status_of("One", "ask_whats_going_on").state is EventState.TRIGGERED

        seen = {}

        class Spy:
            def next_line(self, ctx):
                seen["outcomes"] = ctx.active_outcomes
                return gen_result(pause=True)

        advance(session, Spy())
        assert seen["outcomes"] == (("ask_whats_going_on", "someone explains the competition"),)

    def test_actions_only_input(self):
        session = start_playthrough(one_scene_schema([line_count_event(n=9)]))
        step = submit_input(session, PlayerInput(actions="nods"), NullInterpreter())
        line = step.new_lines[0]
        assert line.kind is LineKind.PLAYER
        assert line.actions == "nods"
        assert line.dialogue is None
        assert line.pause_after is False
        assert session.phase is Phase.AWAITING_ADVANCE

    def test_wrong_phase_rejected(self):
        session = start_playthrough(one_scene_schema([line_count_event(n=9)]))
        submit_input(session, PlayerInput(dialogue="hi"), NullInterpreter())
        with pytest.raises(WrongPhaseError):
            submit_input(session, PlayerInput(dialogue="again"), NullInterpreter())

    def test_interpreter_failure_leaves_session_unchanged(self):
        schema = one_scene_schema([
            predicate_event("p", "Ava (player) waves"), line_count_event(n=9)])
        session = start_playthrough(schema)
        before = snapshot(session)

        class Exploding:
            def judge(self, ctx):
                raise ConnectionError("backend down")

        with pytest.raises(ConnectionError):
            submit_input(session, PlayerInput(dialogue="hi"), Exploding())
        assert snapshot(session) == before
        # and the retry works
        submit_input(session, PlayerInput(dialogue="hi"), NullInterpreter())
        assert session.phase is Phase.AWAITING_ADVANCE

    def test_player_line_never_counts_toward_line_count(self):
        schema = one_scene_schema([line_count_event("end", n=2)])
        session = start_playthrough(schema)  # generated count 1
        submit_input(session, PlayerInput(dialogue="one"), NullInterpreter())
        assert session.generated_count_in_scene == 1
        assert session.status_of("One", "end").state is EventState.PENDING


class TestAdvance:
    def test_pausing_line_requests_input(self):
        session = start_playthrough(one_scene_schema([line_count_event(n=9)]))
        submit_input(session, PlayerInput(dialogue="hi"), NullInterpreter())
        _, step = advance(session, ScriptedInstantiator([gen_result(pause=True)]))
        assert step.needs_input is True
        assert session.phase is Phase.AWAITING_INPUT
        assert step.new_lines[0].pause_after is True

    def test_line_count_end_scene_hand_traced(self):
        # Oracle: hand-stepping the loop. Opening counts 1. Non-pausing lines:
        # a1 -> count 2 (pending), a2 -> count 3 (trigger, budget=3),
        # a3 -> 4 (budget 2), a4 -> 5 (budget 1), a5 -> 6 (budget 0 -> scene ends).
        # Scene ends after 6 generated lines = 3 + max_closing_lines.
        schema = one_scene_schema([line_count_event("end3", n=3)])
        session = start_playthrough(schema)
        submit_input(session, PlayerInput(dialogue="go"), NullInterpreter())
        plan = ScriptedInstantiator([gen_result(pause=False) for _ in range(5)])

        counts_at_trigger = []
        for expected_count in (2, 3, 4, 5, 6):
            _, step = advance(session, plan)
            assert session.generated_count_in_scene == expected_count
            if step.triggered_event_ids:
                counts_at_trigger.append(expected_count)
            if step.finished:
                break
        assert counts_at_trigger == [3]
        assert session.generated_count_in_scene == 6
        assert session.finished  # ends_scene with no transition ends the playthrough
        assert session.status_of("One", "end3").state is EventState.EXPIRED

    def test_realization_ends_scene_before_budget(self):
        schema = one_scene_schema([line_count_event("end3", n=3)])
        session = start_playthrough(schema)
        submit_input(session, PlayerInput(dialogue="go"), NullInterpreter())
        plan = ScriptedInstantiator([
            gen_result(pause=False),                      # count 2
            gen_result(pause=False),                      # count 3: trigger
            gen_result(pause=False, realized=("end3",)),  # count 4: realized -> end
        ])
        advance(session, plan)
        advance(session, plan)
        _, step = advance(session, plan)
        assert step.scene_ended is True
        assert step.realized_event_ids == ["end3"]
        assert session.finished
        assert session.status_of("One", "end3").state is EventState.REALIZED

    def test_two_scene_transition_manual_trace(self):
        # Oracle: manual trace of the transition rule. Realizing the
        # transition event appends scene Two's opening verbatim and resets
        # the generated count to 1.
        schema = make_schema(scenes=[
            Scene(id="One", character_names=("Ava", "Bern"), setting="x",
                  opening_line="first scene opens.",
                  events=(predicate_event("go", "Ava (player) goes", ends_scene=True,
                                          transition_to="Two"),)),
            Scene(id="Two", character_names=("Ava", "Bern"), setting="y",
                  opening_line="second scene opens.",
                  events=(line_count_event("end2", n=4),)),
        ])
        session = start_playthrough(schema)
        rules = RulesInterpreter({"go": ["onward"]})
        submit_input(session, PlayerInput(dialogue="Onward!"), rules)
        _, step = advance(session, ScriptedInstantiator([
            gen_result(pause=False, realized=("go",))]))

        assert step.scene_ended is True
        assert step.ended_scene_id == "One"
        assert step.next_scene_id == "Two"
        opening = step.new_lines[-1]
        assert opening.kind is LineKind.OPENING
        assert opening.narration == "second scene opens."
        assert opening.content == "second scene opens."
        assert session.current_scene_id == "Two"
        assert session.generated_count_in_scene == 1
        assert session.closing_budget is None
        assert session.phase is Phase.AWAITING_INPUT

    def test_wrong_phase(self):
        session = start_playthrough(one_scene_schema([line_count_event(n=9)]))
        with pytest.raises(WrongPhaseError):
            advance(session, ScriptedInstantiator([gen_result()]))

    def test_player_speaker_guard(self):
        session = start_playthrough(one_scene_schema([line_count_event(n=9)]))
        submit_input(session, PlayerInput(dialogue="hi"), NullInterpreter())
        with pytest.raises(ResponseFormatError):
            advance(session, ScriptedInstantiator([gen_result(speaker="Ava")]))

    def test_forced_pause_after_run_of_silent_lines(self):
        config = EngineConfig(max_lines_without_pause=3, max_total_lines=50)
        schema = one_scene_schema([line_count_event(n=40)])
        session = start_playthrough(schema, config)
        submit_input(session, PlayerInput(dialogue="hi"), NullInterpreter())
        plan = ScriptedInstantiator([gen_result(pause=False) for _ in range(6)])
        steps = run_until_pause(session, plan)
        # Runs of non-pausing generated lines are capped at three; the
        # fourth line gets a forced pause.
        assert [s.new_lines[0].pause_after for s in steps] == [False, False, False, True]
        assert session.phase is Phase.AWAITING_INPUT

    def test_closing_mode_suppresses_pauses(self):
        schema = one_scene_schema([line_count_event("end2", n=2)])
        session = start_playthrough(schema)
        submit_input(session, PlayerInput(dialogue="hi"), NullInterpreter())
        plan = ScriptedInstantiator([gen_result(pause=True) for _ in range(5)])
        steps = []
        while not session.finished:
            _, step = advance(session, plan)
            steps.append(step)
        # Trigger fires on the first generated line (count 2); from there no
        # line may pause even though the provider asked to.
        assert all(line.pause_after is False
                   for s in steps for line in s.new_lines)

    def test_earliest_authored_event_wins_transition_tie(self):
        schema = make_schema(scenes=[
            Scene(id="One", character_names=("Ava", "Bern"), setting="x",
                  opening_line="open.",
                  events=(
                      line_count_event("to_b", n=2, transition_to="B"),
                      line_count_event("to_c", n=2, transition_to="C"),
                  )),
            Scene(id="B", character_names=("Ava",), setting="b", opening_line="b opens.",
                  events=(line_count_event("endb", n=3),)),
            Scene(id="C", character_names=("Ava",), setting="c", opening_line="c opens.",
                  events=(line_count_event("endc", n=3),)),
        ])
        session = start_playthrough(schema)
        submit_input(session, PlayerInput(dialogue="hi"), NullInterpreter())
        plan = ScriptedInstantiator([gen_result(pause=False) for _ in range(8)])
        while session.current_scene_id == "One" and not session.finished:
            advance(session, plan)
        assert session.current_scene_id == "B"
        assert session.status_of("One", "to_c").state is EventState.EXPIRED

    def test_global_cap_finishes_unconditionally(self):
        config = EngineConfig(max_total_lines=7)
        schema = one_scene_schema([
            predicate_event("never", "Ava (player) says the magic word", ends_scene=True),
        ])
        session = start_playthrough(schema, config)
        plan = ScriptedInstantiator([gen_result(pause=(i % 2 == 0)) for i in range(12)])
        inputs = [PlayerInput(dialogue=f"try {i}") for i in range(12)]
        session = run_scripted(schema, inputs, plan, NullInterpreter(), config)
        assert session.finished
        assert len(session.transcript) <= 7


class TestInvariants:
    def _play_superhero(self, superhero_schema, superhero_inputs, superhero_cassette,
                        superhero_rules):
        provider = ReplayProvider(superhero_cassette)
        return run_scripted(superhero_schema, superhero_inputs, Instantiator(provider),
                            RulesInterpreter(superhero_rules))

    def test_openings_verbatim_for_every_scene_entered(
            self, superhero_schema, superhero_inputs, superhero_cassette, superhero_rules):
        session = self._play_superhero(superhero_schema, superhero_inputs,
                                       superhero_cassette, superhero_rules)
        scenes_entered = []
        for line in session.transcript:
            if line.kind is LineKind.OPENING:
                scenes_entered.append(line.scene_id)
                assert line.content == superhero_schema.scene(line.scene_id).opening_line
        assert scenes_entered == ["Arena Floor", "Backstage", "Deadline"]

    def test_no_generated_line_has_player_speaker(
            self, superhero_schema, superhero_inputs, superhero_cassette, superhero_rules):
        session = self._play_superhero(superhero_schema, superhero_inputs,
                                       superhero_cassette, superhero_rules)
        for line in session.transcript:
            if line.kind is LineKind.GENERATED:
                assert line.speaker != "Sam"

    def test_every_input_consumes_exactly_one_pause(
            self, superhero_schema, superhero_inputs, superhero_cassette, superhero_rules):
        session = self._play_superhero(superhero_schema, superhero_inputs,
                                       superhero_cassette, superhero_rules)
        pauses_before_players = 0
        open_pause = False
        for line in session.transcript:
            if line.kind is LineKind.PLAYER:
                assert open_pause, "player line without a preceding unanswered pause"
                pauses_before_players += 1
                open_pause = False
            if line.pause_after:
                assert not open_pause, "two pauses without player input between"
                open_pause = True
        player_lines = sum(1 for l in session.transcript if l.kind is LineKind.PLAYER)
        assert player_lines == pauses_before_players

    def test_line_count_status_tracks_generated_count(self):
        schema = one_scene_schema([
            line_count_event("lc4", n=4, ends_scene=False),
            line_count_event("end", n=30),
        ])
        session = start_playthrough(schema)
        plan = ScriptedInstantiator([gen_result(pause=True) for _ in range(30)])
        for i in range(8):
            submit_input(session, PlayerInput(dialogue=f"t{i}"), NullInterpreter())
            advance(session, plan)
            pending = session.status_of("One", "lc4").state is EventState.PENDING
            assert pending == (session.generated_count_in_scene < 4)

    def test_lifecycle_is_monotone(self):
        session = start_playthrough(one_scene_schema([line_count_event("e", n=5)]))
        from dramaturge.engine import EngineError

        # Realization without a prior trigger is an illegal transition.
        with pytest.raises(EngineError):
            session._set_status("One", "e", EventState.REALIZED, at_line=0)

    def test_line_count_one_triggers_at_the_opening(self):
        session = start_playthrough(one_scene_schema([line_count_event("e", n=1)]))
        status = session.status_of("One", "e")
        assert status.state is EventState.TRIGGERED
        assert status.triggered_at == 0
        assert session.phase is Phase.AWAITING_INPUT  # the opening still pauses
        assert session.closing_budget == session.config.max_closing_lines

    def test_determinism_same_inputs_same_log(
            self, superhero_schema, superhero_inputs, superhero_cassette, superhero_rules):
        logs = set()
        for _ in range(3):
            session = self._play_superhero(superhero_schema, superhero_inputs,
                                           superhero_cassette, superhero_rules)
            logs.add(session.log_text())
        assert len(logs) == 1


class TestSnapshotResume:
    def test_fresh_roundtrip(self, superhero_schema):
        session = start_playthrough(superhero_schema)
        assert resume(snapshot(session)) == session

    def test_midscene_roundtrip_includes_event_status(self):
        schema = one_scene_schema([
            predicate_event("p", "Ava (player) waves"), line_count_event(n=9)])
        session = start_playthrough(schema)
        submit_input(session, PlayerInput(dialogue="hi"),
                     StaticInterpreter([["p"]]))
        assert session.status_of("One", "p").state is EventState.TRIGGERED
        restored = resume(snapshot(session))
        assert restored == session
        assert restored.status_of("One", "p").state is EventState.TRIGGERED
        # the restored session keeps playing
        advance(restored, ScriptedInstantiator([gen_result()]))

    def test_unknown_version_rejected(self, superhero_schema):
        doc = snapshot(start_playthrough(superhero_schema))
        doc["version"] = "99"
        with pytest.raises(SnapshotVersionError):
            resume(doc)


class TestReplay:
    def _record(self, schema, inputs, rules):
        cassette = Cassette()
        provider = RecordingProvider(SequenceProvider([
            json.dumps({"speaker": "Bern", "narration": None, "actions": None,
                        "dialogue": f"reply {i}", "pause": True, "realized": []})
            for i in range(10)
        ]), cassette, clock=lambda: 0.0)
        session = run_scripted(schema, inputs, Instantiator(provider),
                               RulesInterpreter(rules))
        return session, cassette

    def test_recorded_session_reproduces_exactly(self):
        schema = one_scene_schema([line_count_event(n=30)])
        inputs = [PlayerInput(dialogue=f"say {i}") for i in range(4)]
        session, cassette = self._record(schema, inputs, {})
        replayed = replay(schema, list(session.log), cassette)
        assert replayed.log_text() == session.log_text()
        assert {k: v.to_record() for k, v in replayed.event_status.items()} == \
            {k: v.to_record() for k, v in session.event_status.items()}

    def test_empty_cassette_is_a_miss(self):
        schema = one_scene_schema([line_count_event(n=30)])
        inputs = [PlayerInput(dialogue="hello")]
        session, _ = self._record(schema, inputs, {})
        with pytest.raises(CassetteMiss):
            replay(schema, list(session.log), Cassette())

    def test_tampered_generated_line_names_index(self):
        schema = one_scene_schema([line_count_event(n=30)])
        inputs = [PlayerInput(dialogue="hello")]
        session, cassette = self._record(schema, inputs, {})
        tampered = [dict(r) for r in session.log]
        target = next(i for i, r in enumerate(tampered)
                      if r["type"] == "line" and r["kind"] == "generated")
        tampered[target]["dialogue"] = "something that was never said"
        with pytest.raises(ReplayDivergence) as err:
            replay(schema, tampered, cassette)
        assert err.value.index == target

    def test_superhero_fixture_replays_from_golden(self, fixtures_dir):
        from dramaturge.engine import load_transcript_log

        golden = fixtures_dir / "goldens" / "superhero_reporter"
        schema = parse_schema((golden / "schema.json").read_text(encoding="utf-8"))
        records = load_transcript_log(golden / "transcript.jsonl")
        cassette = Cassette.load(golden / "provider.cassette.jsonl")
        session = replay(schema, records, cassette)
        assert session.finished


class TestScriptedTermination:
    def test_any_scripted_pair_terminates_within_cap(self):
        config = EngineConfig(max_total_lines=60)
        schema = one_scene_schema([
            predicate_event("secret", "Ava (player) says the secret", ends_scene=True)])
        inputs = [PlayerInput(dialogue=f"guess {i}") for i in range(100)]
        session = run_scripted(schema, inputs, AutoInstantiator(seed=7),
                               NullInterpreter(), config)
        assert session.finished
        assert len(session.transcript) <= 60
