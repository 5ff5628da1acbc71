"""Line rendering and player-input parsing."""

import pytest

from dramaturge.transcript import (
    NARRATOR,
    Line,
    LineKind,
    PlayerInput,
    parse_player_input,
    render_line_parts,
)


class TestRendering:
    def test_full_line(self):
        # Narration plus one character's actions and dialogue.
        text = render_line_parts("Maria", "The challenge has begun.",
                                 "whispering", "Which one catches your eye?")
        assert text == "The challenge has begun. Maria: (whispering) Which one catches your eye?"

    def test_dialogue_only(self):
        assert render_line_parts("Maria", None, None, "Hello.") == "Maria: Hello."

    def test_actions_only(self):
        assert render_line_parts("Volt", None, "shrugs", None) == "Volt: (shrugs)"

    def test_pure_narration(self):
        assert render_line_parts(NARRATOR, "Rain falls.", None, None) == "Rain falls."

    def test_line_content_property(self):
        line = Line(index=3, scene_id="s", kind=LineKind.PLAYER, speaker="Sam",
                    actions="looks around", dialogue="What's going on here?")
        assert line.content == "Sam: (looks around) What's going on here?"


class TestLineInvariants:
    def test_empty_line_rejected(self):
        with pytest.raises(ValueError):
            Line(index=0, scene_id="s", kind=LineKind.GENERATED, speaker="A")

    def test_record_roundtrip(self):
        line = Line(index=7, scene_id="s", kind=LineKind.GENERATED, speaker="Maria",
                    narration="n", actions=None, dialogue="d", pause_after=True)
        assert Line.from_record(line.to_record()) == line


class TestPlayerInputParsing:
    def test_actions_and_dialogue(self):
        parsed = parse_player_input("(looks around) What's going on here?")
        assert parsed == PlayerInput(actions="looks around",
                                     dialogue="What's going on here?")

    def test_actions_only(self):
        assert parse_player_input("(nods)") == PlayerInput(actions="nods", dialogue=None)

    def test_dialogue_only(self):
        assert parse_player_input("Just talking.") == PlayerInput(actions=None,
                                                                  dialogue="Just talking.")

    def test_blank_is_none(self):
        assert parse_player_input("   ") is None
        assert parse_player_input("()") is None

    def test_render_roundtrip(self):
        raw = "(leans in) Who rigged it, then?"
        assert parse_player_input(raw).render() == raw

    def test_empty_input_invalid(self):
        with pytest.raises(ValueError):
            PlayerInput(actions=None, dialogue=None)
        with pytest.raises(ValueError):
            PlayerInput(actions="  ", dialogue="")
