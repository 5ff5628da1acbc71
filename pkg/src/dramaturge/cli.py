"""Operator entry points: validate, play, replay, serve, eval.

Exit codes: 0 success, 1 domain failure (invalid schema, divergence,
provider failure), 2 usage error (bad flags, missing files).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .engine import (
    EngineConfig,
    Phase,
    ReplayDivergence,
    advance,
    load_transcript_log,
    replay,
    snapshot,
    start_playthrough,
    submit_input,
)
from .harness import run_corpus, run_golden_suite
from .instantiation import Instantiator, ResponseFormatError
from .interpretation import LlmInterpreter, RulesInterpreter
from .provider import (
    Cassette,
    HttpChatProvider,
    ProviderConfig,
    ProviderError,
    RecordingProvider,
    ReplayProvider,
)
from .schema import check_document, has_errors
from .transcript import parse_player_input

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "DRAMATURGE_ENDPOINT"
MODEL_ENV = "DRAMATURGE_MODEL"

USAGE_ERROR = 2


def _fail_usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return USAGE_ERROR


def _read_document(path: str) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return p.read_text(encoding="utf-8")


def _load_valid_schema(path: str):
    """Returns (schema, exit_code); schema is None when exiting."""
    document = _read_document(path)
    if document is None:
        return None, _fail_usage(f"no such file: {path}")
    schema, diagnostics = check_document(document)
    for diag in diagnostics:
        print(diag.render(), file=sys.stderr)
    if schema is None or has_errors(diagnostics):
        return None, 1
    return schema, 0


def _engine_config(args) -> EngineConfig:
    return EngineConfig(
        max_closing_lines=args.max_closing_lines,
        max_lines_without_pause=args.max_lines_without_pause,
        max_total_lines=args.max_total_lines,
        parse_retry_limit=args.parse_retry_limit,
    )


def _build_provider(args):
    """Returns (provider, exit_code); provider None when exiting."""
    if args.provider == "scripted":
        if not args.cassette:
            return None, _fail_usage("--provider scripted requires --cassette")
        if not Path(args.cassette).is_file():
            return None, _fail_usage(f"no such cassette: {args.cassette}")
        provider = ReplayProvider.from_file(args.cassette)
    else:
        endpoint = args.endpoint or os.environ.get(ENDPOINT_ENV)
        model = args.model or os.environ.get(MODEL_ENV)
        if not endpoint or not model:
            return None, _fail_usage(
                f"live provider needs --endpoint/--model (or {ENDPOINT_ENV}/{MODEL_ENV})")
        config = ProviderConfig(
            endpoint_url=endpoint,
            model_name=model,
            temperature=None if args.seedless else 0.0,
        )
        provider = HttpChatProvider(config)
    if getattr(args, "record", None):
        provider = RecordingProvider(provider, Cassette(), sink_path=args.record)
    return provider, 0


def _interpreter_for(args, schema, provider):
    if args.interpreter == "rules":
        if getattr(args, "rules", None):
            rules = json.loads(Path(args.rules).read_text(encoding="utf-8"))
            return RulesInterpreter(rules)
        return RulesInterpreter.from_schema(schema)
    return LlmInterpreter(provider)


def cmd_validate(args) -> int:
    document = _read_document(args.schema)
    if document is None:
        return _fail_usage(f"no such file: {args.schema}")
    schema, diagnostics = check_document(document)
    for diag in diagnostics:
        print(diag.render(), file=sys.stderr)
    return 1 if (schema is None or has_errors(diagnostics)) else 0


def cmd_play(args) -> int:
    schema, code = _load_valid_schema(args.schema)
    if schema is None:
        return code
    provider, code = _build_provider(args)
    if provider is None:
        return code
    config = _engine_config(args)
    instantiator = Instantiator(provider, retry_limit=config.parse_retry_limit)
    interpreter = _interpreter_for(args, schema, provider)

    stem = Path(args.schema)
    transcript_path = stem.with_name(stem.stem + ".transcript.jsonl")
    snapshot_path = stem.with_name(stem.stem + ".snapshot.json")

    session = start_playthrough(schema, config)
    print(session.transcript[0].content)
    interrupted = False
    try:
        while not session.finished:
            if session.phase is Phase.AWAITING_INPUT:
                try:
                    raw = input("> ")
                except EOFError:
                    interrupted = True
                    break
                player_input = parse_player_input(raw)
                if player_input is None:
                    continue  # empty input: re-prompt
                submit_input(session, player_input, interpreter)
            else:
                _, step = advance(session, instantiator)
                for line in step.new_lines:
                    print(line.content)
    except (ProviderError, ResponseFormatError) as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        transcript_path.write_text(session.log_text(), encoding="utf-8")
        return 1

    transcript_path.write_text(session.log_text(), encoding="utf-8")
    if interrupted:
        snapshot_path.write_text(json.dumps(snapshot(session), ensure_ascii=False),
                                 encoding="utf-8")
        print(f"snapshot written to {snapshot_path}", file=sys.stderr)
    return 0


def cmd_replay(args) -> int:
    schema, code = _load_valid_schema(args.schema)
    if schema is None:
        return code
    if not Path(args.transcript).is_file():
        return _fail_usage(f"no such file: {args.transcript}")
    if not Path(args.cassette).is_file():
        return _fail_usage(f"no such file: {args.cassette}")
    records = load_transcript_log(args.transcript)
    try:
        cassette = Cassette.load(args.cassette)
        session = replay(schema, records, cassette)
    except ReplayDivergence as exc:
        print(f"divergence at record {exc.index}: {exc}", file=sys.stderr)
        return 1
    except ProviderError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 1
    print(f"replay ok: {len(session.log)} records reproduced exactly")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    provider, code = _build_provider(args)
    if provider is None:
        return code
    if args.interpreter == "rules":
        fixed_rules = None
        if getattr(args, "rules", None):
            fixed_rules = json.loads(Path(args.rules).read_text(encoding="utf-8"))

        def interpreter_factory(schema):
            if fixed_rules is not None:
                return RulesInterpreter(fixed_rules)
            return RulesInterpreter.from_schema(schema)
    else:
        def interpreter_factory(schema):
            return LlmInterpreter(provider)

    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        return _fail_usage(f"--addr must be host:port, got {args.addr!r}")

    web_root = args.web_root or os.environ.get("DRAMATURGE_WEB_ROOT")
    app = create_app(
        provider,
        interpreter_factory=interpreter_factory,
        config=_engine_config(args),
        schema_dir=args.schema_dir,
        state_dir=args.state_dir,
        web_root=web_root,
    )
    try:
        uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    except (OSError, SystemExit) as exc:
        print(f"serve failed: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    fixtures_dir = Path(args.fixtures)
    if not fixtures_dir.is_dir():
        return _fail_usage(f"no such directory: {fixtures_dir}")
    try:
        report = run_corpus(fixtures_dir, interpreter_kind=args.interpreter)
    except ProviderError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                              encoding="utf-8")
    print(report.table())
    if args.goldens:
        failures = 0
        for result in run_golden_suite(args.goldens):
            status = "pass" if result.passed else f"FAIL ({result.detail})"
            print(f"golden {result.name}: {status}")
            failures += 0 if result.passed else 1
        if failures:
            return 1
    return 0


def _add_provider_flags(parser: argparse.ArgumentParser, with_record: bool) -> None:
    parser.add_argument("--provider", choices=("live", "scripted"), default="scripted",
                        help="completion backend (default: scripted)")
    parser.add_argument("--cassette", help="recorded exchanges for the scripted provider")
    parser.add_argument("--endpoint", help=f"live endpoint URL (or {ENDPOINT_ENV})")
    parser.add_argument("--model", help=f"live model name (or {MODEL_ENV})")
    parser.add_argument("--seedless", action="store_true",
                        help="do not pin temperature=0 on the live backend")
    parser.add_argument("--interpreter", choices=("llm", "rules"), default="llm",
                        help="condition judge (default: llm)")
    parser.add_argument("--rules", help="rules file for --interpreter rules")
    if with_record:
        parser.add_argument("--record", help="append live exchanges to this cassette file")


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    defaults = EngineConfig()
    parser.add_argument("--max-closing-lines", type=int,
                        default=defaults.max_closing_lines)
    parser.add_argument("--max-lines-without-pause", type=int,
                        default=defaults.max_lines_without_pause)
    parser.add_argument("--max-total-lines", type=int, default=defaults.max_total_lines)
    parser.add_argument("--parse-retry-limit", type=int, default=defaults.parse_retry_limit)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dramaturge",
                                     description="storylet-driven interactive narrative engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a schema file; diagnostics on stderr")
    p.add_argument("schema")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("play", help="play a schema in the terminal")
    p.add_argument("schema")
    _add_provider_flags(p, with_record=True)
    _add_engine_flags(p)
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("replay", help="verify a recorded transcript reproduces exactly")
    p.add_argument("schema")
    p.add_argument("transcript")
    p.add_argument("cassette")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the session service")
    p.add_argument("--addr", default="127.0.0.1:8686")
    p.add_argument("--schema-dir", help="directory of schema files creatable by id")
    p.add_argument("--state-dir", help="persist session snapshots here")
    p.add_argument("--web-root", help="static web UI bundle to serve at /")
    _add_provider_flags(p, with_record=False)
    _add_engine_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="run the detection-accuracy harness")
    p.add_argument("fixtures")
    p.add_argument("--interpreter", choices=("llm", "rules"), default="rules")
    p.add_argument("--out", default="report.json")
    p.add_argument("--goldens", help="also replay golden transcripts from this directory")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("DRAMATURGE_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
