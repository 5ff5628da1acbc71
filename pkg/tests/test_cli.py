"""Operator commands: validate, play, replay, eval, serve."""

import json
import shutil

import httpx
import pytest

from dramaturge.cli import main


def render_inputs(path):
    out = []
    for raw in path.read_text(encoding="utf-8").splitlines():
        if raw.strip():
            data = json.loads(raw)
            actions = data.get("actions")
            dialogue = data.get("dialogue")
            text = f"({actions}) " if actions else ""
            out.append(text + (dialogue or ""))
    return out


@pytest.fixture()
def feed_stdin(monkeypatch):
    def feed(lines):
        queue = list(lines)

        def fake_input(prompt=""):
            if not queue:
                raise EOFError
            return queue.pop(0)

        monkeypatch.setattr("builtins.input", fake_input)

    return feed


class TestValidate:
    def test_valid_fixture_exits_zero(self, superhero_dir, capsys):
        assert main(["validate", str(superhero_dir / "schema.json")]) == 0
        assert capsys.readouterr().err == ""

    def test_invalid_fixture_exits_one_with_diagnostic(self, fixtures_dir, capsys):
        path = fixtures_dir / "invalid" / "10_transition_without_end.json"
        assert main(["validate", str(path)]) == 1
        err = capsys.readouterr().err
        assert "ERROR transition-without-end" in err

    def test_nonexistent_path_usage_error(self, capsys):
        assert main(["validate", "no/such/file.json"]) == 2

    def test_warnings_do_not_fail(self, tmp_path, capsys):
        doc = {
            "title": "w", "style": "s",
            "characters": [{"name": "Ava", "description": "d"},
                           {"name": "Bern", "description": "d"}],
            "scenes": [
                {"name": "One", "characters": ["Ava"], "setting": "x",
                 "opening_line": "go.",
                 "events": [{"id": "e", "when": "Bern hums",
                             "outcome": {"description": "d", "ends_scene": True}}]},
            ],
        }
        path = tmp_path / "warn.json"
        path.write_text(json.dumps(doc), encoding="utf-8")
        assert main(["validate", str(path)]) == 0
        assert "WARNING condition-no-scene-character" in capsys.readouterr().err


class TestPlay:
    def _copy_fixture(self, superhero_dir, tmp_path):
        for name in ("schema.json", "provider.cassette.jsonl", "rules.json",
                     "inputs.jsonl"):
            shutil.copy(superhero_dir / name, tmp_path / name)
        return tmp_path

    def test_scripted_end_to_end_matches_golden_transcript(
            self, superhero_dir, fixtures_dir, tmp_path, feed_stdin, capsys):
        workdir = self._copy_fixture(superhero_dir, tmp_path)
        feed_stdin(render_inputs(workdir / "inputs.jsonl"))
        code = main([
            "play", str(workdir / "schema.json"),
            "--provider", "scripted",
            "--cassette", str(workdir / "provider.cassette.jsonl"),
            "--interpreter", "rules", "--rules", str(workdir / "rules.json"),
        ])
        assert code == 0
        produced = (workdir / "schema.transcript.jsonl").read_text(encoding="utf-8")
        golden = (fixtures_dir / "goldens" / "superhero_reporter" /
                  "transcript.jsonl").read_text(encoding="utf-8")
        assert produced == golden
        out = capsys.readouterr().out
        assert "The challenge has begun. Maria: (whispering) Which one catches your eye?" in out

    def test_empty_input_reprompts(self, superhero_dir, tmp_path, feed_stdin):
        workdir = self._copy_fixture(superhero_dir, tmp_path)
        inputs = render_inputs(workdir / "inputs.jsonl")
        feed_stdin(["", "   "] + inputs)  # blank lines consumed without a turn
        code = main([
            "play", str(workdir / "schema.json"),
            "--provider", "scripted",
            "--cassette", str(workdir / "provider.cassette.jsonl"),
            "--interpreter", "rules", "--rules", str(workdir / "rules.json"),
        ])
        assert code == 0

    def test_eof_at_pause_writes_snapshot(self, superhero_dir, tmp_path, feed_stdin):
        workdir = self._copy_fixture(superhero_dir, tmp_path)
        feed_stdin([])  # immediate Ctrl-D
        code = main([
            "play", str(workdir / "schema.json"),
            "--provider", "scripted",
            "--cassette", str(workdir / "provider.cassette.jsonl"),
            "--interpreter", "rules", "--rules", str(workdir / "rules.json"),
        ])
        assert code == 0
        snapshot_doc = json.loads((workdir / "schema.snapshot.json").read_text())
        assert snapshot_doc["version"] == "1"
        assert snapshot_doc["phase"] == "awaiting_input"

    def test_scripted_without_cassette_usage_error(self, superhero_dir):
        assert main(["play", str(superhero_dir / "schema.json"),
                     "--provider", "scripted"]) == 2


class TestReplay:
    def test_recorded_triple_reproduces(self, fixtures_dir, capsys):
        golden = fixtures_dir / "goldens" / "superhero_reporter"
        code = main(["replay", str(golden / "schema.json"),
                     str(golden / "transcript.jsonl"),
                     str(golden / "provider.cassette.jsonl")])
        assert code == 0
        assert "replay ok" in capsys.readouterr().out

    def test_edited_transcript_names_index(self, fixtures_dir, tmp_path, capsys):
        golden = fixtures_dir / "goldens" / "superhero_reporter"
        records = [json.loads(l) for l in
                   (golden / "transcript.jsonl").read_text().splitlines()]
        target = next(i for i, r in enumerate(records)
                      if r["type"] == "line" and r["kind"] == "generated")
        records[target]["dialogue"] = "edited line"
        edited = tmp_path / "edited.jsonl"
        edited.write_text("\n".join(json.dumps(r, ensure_ascii=False) for r in records),
                          encoding="utf-8")
        code = main(["replay", str(golden / "schema.json"), str(edited),
                     str(golden / "provider.cassette.jsonl")])
        assert code == 1
        assert f"divergence at record {target}" in capsys.readouterr().err

    def test_missing_cassette_entry_exits_one(self, fixtures_dir, tmp_path, capsys):
        golden = fixtures_dir / "goldens" / "superhero_reporter"
        empty = tmp_path / "empty.cassette.jsonl"
        empty.write_text("", encoding="utf-8")
        code = main(["replay", str(golden / "schema.json"),
                     str(golden / "transcript.jsonl"), str(empty)])
        assert code == 1
        assert "replay failed" in capsys.readouterr().err


class TestEval:
    def test_rules_eval_writes_report_and_table(self, fixtures_dir, tmp_path, capsys,
                                                monkeypatch):
        out = tmp_path / "report.json"
        code = main(["eval", str(fixtures_dir / "detection"),
                     "--interpreter", "rules", "--out", str(out),
                     "--goldens", str(fixtures_dir / "goldens")])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["aggregate"]["precision"] == 1.0
        assert report["aggregate"]["recall"] == 1.0
        assert len(report["fixtures"]) == 5
        stdout = capsys.readouterr().out
        assert "aggregate" in stdout
        assert "golden superhero_reporter: pass" in stdout

    def test_missing_dir_usage_error(self):
        assert main(["eval", "no/such/dir"]) == 2


class TestServe:
    def test_serve_healthz_and_schema_dir(self, fixtures_dir, superhero_dir, tmp_path):
        # Drive the service exactly as cmd_serve builds it.
        from dramaturge.cli import build_parser, cmd_serve
        import threading
        import time as time_mod

        shutil.copy(superhero_dir / "schema.json", tmp_path / "superhero.json")
        args = build_parser().parse_args([
            "serve", "--addr", "127.0.0.1:18686",
            "--schema-dir", str(tmp_path),
            "--provider", "scripted",
            "--cassette", str(superhero_dir / "provider.cassette.jsonl"),
            "--interpreter", "rules",
        ])
        thread = threading.Thread(target=cmd_serve, args=(args,), daemon=True)
        thread.start()
        base = "http://127.0.0.1:18686"
        deadline = time_mod.time() + 10
        last_error = None
        while time_mod.time() < deadline:
            try:
                if httpx.get(f"{base}/v1/healthz", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError as exc:
                last_error = exc
                time_mod.sleep(0.05)
        else:
            raise AssertionError(f"server never came up: {last_error}")
        created = httpx.post(f"{base}/v1/sessions", json={"schema_id": "superhero"},
                             timeout=5.0)
        assert created.status_code == 201

    def test_bad_addr_usage_error(self):
        assert main(["serve", "--addr", "nonsense", "--provider", "live",
                     "--endpoint", "http://x", "--model", "m"]) == 2
