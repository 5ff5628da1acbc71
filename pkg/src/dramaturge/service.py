"""Session service: HTTP API plus a server-sent-events stream per session.

Clients create a session from a schema, post "(actions) dialogue" inputs,
and watch the playthrough unfold on the event stream. Turns run in a
worker thread one at a time per session; every mutation is reflected in
the session's event log, so a reconnecting client resumes loss-free from
Last-Event-ID. Sessions are snapshotted to disk on every mutation when a
state directory is configured, which lets a restarted service resume them.
"""

from __future__ import annotations

import asyncio
import json
import logging
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse
from starlette.staticfiles import StaticFiles

from .engine import (
    EngineConfig,
    Phase,
    Session,
    StepResult,
    advance,
    resume,
    snapshot,
    start_playthrough,
    submit_input,
)
from .instantiation import Instantiator, ResponseFormatError
from .interpretation import LlmInterpreter
from .provider import CompletionProvider, ProviderError
from .schema import StorySchema, check_document, has_errors
from .transcript import PlayerInput

logger = logging.getLogger(__name__)

MAX_SCHEMA_BYTES = 1 << 20  # 1 MiB request-body limit for session creation
DEFAULT_SESSION_TTL = 24 * 3600.0

EVENT_LINE = "line"
EVENT_PAUSE = "pause"
EVENT_TRIGGERED = "event_triggered"
EVENT_SCENE_ENDED = "scene_ended"
EVENT_FINISHED = "finished"
EVENT_ERROR = "error"


@dataclass(frozen=True)
class PlayEvent:
    id: int
    name: str
    data: dict

    def to_sse(self) -> str:
        return f"id: {self.id}\nevent: {self.name}\ndata: {json.dumps(self.data, ensure_ascii=False)}\n\n"

    def to_json(self) -> dict:
        return {"id": self.id, "event": self.name, "data": self.data}


@dataclass
class SessionRecord:
    session_id: str
    session: Session
    interpreter: Any
    created_at: float
    last_activity: float
    events: list[PlayEvent] = field(default_factory=list)
    subscribers: set = field(default_factory=set)
    mutex: threading.Lock = field(default_factory=threading.Lock)
    turn_active: bool = False

    def next_event_id(self) -> int:
        return len(self.events) + 1


class SessionStore:
    """In-memory sessions with optional snapshot-to-disk persistence."""

    def __init__(self, state_dir: str | Path | None = None,
                 ttl: float = DEFAULT_SESSION_TTL,
                 clock: Callable[[], float] = time.time):
        self.records: dict[str, SessionRecord] = {}
        self.state_dir = Path(state_dir) if state_dir else None
        self.ttl = ttl
        self.clock = clock
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)

    def new_id(self) -> str:
        return secrets.token_urlsafe(32)  # 256 bits of entropy

    def add(self, record: SessionRecord) -> None:
        self.records[record.session_id] = record
        self.persist(record)

    def get(self, session_id: str) -> SessionRecord | None:
        return self.records.get(session_id)

    def touch(self, record: SessionRecord) -> None:
        record.last_activity = self.clock()

    def evict_idle(self) -> list[str]:
        now = self.clock()
        stale = [sid for sid, r in self.records.items()
                 if now - r.last_activity > self.ttl and not r.turn_active]
        for sid in stale:
            del self.records[sid]
            if self.state_dir:
                (self.state_dir / f"{sid}.json").unlink(missing_ok=True)
            logger.info("evicted idle session %s", sid)
        return stale

    def persist(self, record: SessionRecord) -> None:
        if not self.state_dir:
            return
        doc = {
            "session_id": record.session_id,
            "created_at": record.created_at,
            "last_activity": record.last_activity,
            "snapshot": snapshot(record.session),
            "events": [e.to_json() for e in record.events],
        }
        path = self.state_dir / f"{record.session_id}.json"
        # Atomic replace: a crash or concurrent reader never sees a torn file.
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)

    def load_all(self, interpreter_factory) -> int:
        if not self.state_dir:
            return 0
        count = 0
        for path in sorted(self.state_dir.glob("*.json")):
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
                session = resume(doc["snapshot"])
                record = SessionRecord(
                    session_id=doc["session_id"],
                    session=session,
                    interpreter=interpreter_factory(session.schema),
                    created_at=doc["created_at"],
                    last_activity=doc["last_activity"],
                    events=[PlayEvent(e["id"], e["event"], e["data"])
                            for e in doc["events"]],
                )
                self.records[record.session_id] = record
                count += 1
            except Exception:
                logger.exception("could not restore session from %s", path)
        return count


class PlayService:
    """Wires the engine to the HTTP surface; one instance per app."""

    def __init__(self, provider: CompletionProvider,
                 interpreter_factory: Callable[[StorySchema], Any] | None = None,
                 config: EngineConfig | None = None,
                 schema_dir: str | Path | None = None,
                 store: SessionStore | None = None):
        self.provider = provider
        self.instantiator = Instantiator(provider,
                                         retry_limit=(config or EngineConfig()).parse_retry_limit)
        self.interpreter_factory = interpreter_factory or (
            lambda schema: LlmInterpreter(provider))
        self.config = config or EngineConfig()
        self.schema_dir = Path(schema_dir) if schema_dir else None
        self.store = store or SessionStore()
        self._loop: asyncio.AbstractEventLoop | None = None

    # -- events ----------------------------------------------------------------

    def _emit(self, record: SessionRecord, name: str, data: dict) -> None:
        """Append one event and fan it out; callers hold record.mutex."""
        event = PlayEvent(id=record.next_event_id(), name=name, data=data)
        record.events.append(event)
        loop = self._loop
        for queue in list(record.subscribers):
            if loop is not None:
                loop.call_soon_threadsafe(queue.put_nowait, event)
            else:
                queue.put_nowait(event)

    def _emit_step(self, record: SessionRecord, step: StepResult) -> None:
        current_scene = step.new_lines[0].scene_id if step.new_lines else None
        for line in step.new_lines[:1]:
            self._emit(record, EVENT_LINE, line.to_record())
        for scene_id, event_id in step.triggered_event_ids:
            if scene_id == current_scene:
                self._emit(record, EVENT_TRIGGERED,
                           {"scene": scene_id, "event": event_id})
        if step.scene_ended:
            self._emit(record, EVENT_SCENE_ENDED,
                       {"scene": step.ended_scene_id, "next": step.next_scene_id})
        for line in step.new_lines[1:]:  # opening line of the next scene
            self._emit(record, EVENT_LINE, line.to_record())
        for scene_id, event_id in step.triggered_event_ids:
            if scene_id != current_scene:  # entry triggers of the new scene
                self._emit(record, EVENT_TRIGGERED,
                           {"scene": scene_id, "event": event_id})

    def _emit_phase(self, record: SessionRecord) -> None:
        if record.session.phase is Phase.AWAITING_INPUT:
            self._emit(record, EVENT_PAUSE, {})
        elif record.session.phase is Phase.FINISHED:
            self._emit(record, EVENT_FINISHED, {})

    # -- turns -------------------------------------------------------------------

    def _turn_steps(self, record: SessionRecord, player_input: PlayerInput | None) -> None:
        """Runs in a worker thread; one engine op per lock hold."""
        session = record.session
        try:
            if player_input is not None:
                with record.mutex:
                    step = submit_input(session, player_input, record.interpreter)
                    self._emit_step(record, step)
                    self.store.touch(record)
                    self.store.persist(record)
            while True:
                with record.mutex:
                    if session.phase is not Phase.AWAITING_ADVANCE:
                        self._emit_phase(record)
                        self.store.persist(record)
                        break
                    _, step = advance(session, self.instantiator)
                    self._emit_step(record, step)
                    self.store.touch(record)
                    self.store.persist(record)
        except (ProviderError, ResponseFormatError) as exc:
            logger.warning("turn aborted for session %s: %s", record.session_id, exc)
            with record.mutex:
                self._emit(record, EVENT_ERROR,
                           {"code": "provider-failure", "message": str(exc)})

    async def run_turn(self, record: SessionRecord, player_input: PlayerInput | None) -> None:
        self._loop = asyncio.get_running_loop()
        try:
            await asyncio.to_thread(self._turn_steps, record, player_input)
        finally:
            record.turn_active = False

    # -- session lifecycle ---------------------------------------------------------

    def create_session(self, schema: StorySchema, config: EngineConfig) -> SessionRecord:
        session = start_playthrough(schema, config)
        now = self.store.clock()
        record = SessionRecord(
            session_id=self.store.new_id(),
            session=session,
            interpreter=self.interpreter_factory(schema),
            created_at=now,
            last_activity=now,
        )
        opening = session.transcript[0]
        self._emit(record, EVENT_LINE, opening.to_record())
        for log_record in session.log:  # entry-time line-count triggers
            if log_record.get("type") == "event" and log_record["status"] == "triggered":
                self._emit(record, EVENT_TRIGGERED,
                           {"scene": log_record["scene"], "event": log_record["event"]})
        self._emit(record, EVENT_PAUSE, {})
        self.store.add(record)
        return record

    def state_view(self, record: SessionRecord) -> dict:
        with record.mutex:
            session = record.session
            return {
                "session_id": record.session_id,
                "title": session.schema.title,
                "phase": session.phase.value,
                "current_scene": session.current_scene_id,
                "finished": session.finished,
                "player_character": session.player_name(),
                "transcript": [line.to_record() for line in session.transcript],
                "event_status": [
                    {"scene": scene_id, "event": event_id, **status.to_record()}
                    for (scene_id, event_id), status in session.event_status.items()
                ],
                "subscribers": len(record.subscribers),
                "last_event_id": len(record.events),
            }


def _error(status: int, code: str, message: str, **extra) -> JSONResponse:
    return JSONResponse({"code": code, "message": message, **extra}, status_code=status)


def create_app(provider: CompletionProvider,
               interpreter_factory: Callable[[StorySchema], Any] | None = None,
               config: EngineConfig | None = None,
               schema_dir: str | Path | None = None,
               state_dir: str | Path | None = None,
               session_ttl: float = DEFAULT_SESSION_TTL,
               clock: Callable[[], float] = time.time,
               web_root: str | Path | None = None) -> FastAPI:
    store = SessionStore(state_dir=state_dir, ttl=session_ttl, clock=clock)
    service = PlayService(provider, interpreter_factory, config, schema_dir, store)
    restored = store.load_all(service.interpreter_factory)
    if restored:
        logger.info("restored %d persisted sessions", restored)

    app = FastAPI(title="dramaturge", docs_url=None, redoc_url=None)
    app.state.service = service

    @app.get("/v1/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    async def create_session(request: Request):
        store.evict_idle()
        body = await request.body()
        if len(body) > MAX_SCHEMA_BYTES:
            return _error(413, "schema-too-large",
                          f"request body exceeds {MAX_SCHEMA_BYTES} bytes")
        try:
            payload = json.loads(body or b"{}")
        except json.JSONDecodeError as exc:
            return _error(400, "bad-json", f"request body is not valid JSON: {exc}")
        if not isinstance(payload, dict):
            return _error(400, "bad-json", "request body must be a JSON object")

        if "schema" in payload:
            document = json.dumps(payload["schema"])
        elif "schema_id" in payload:
            if service.schema_dir is None:
                return _error(400, "no-schema-dir", "service has no schema directory")
            path = service.schema_dir / f"{payload['schema_id']}.json"
            if not path.is_file():
                return _error(404, "unknown-schema", f"no schema named {payload['schema_id']!r}")
            document = path.read_text(encoding="utf-8")
        else:
            return _error(400, "missing-schema", "provide 'schema' or 'schema_id'")

        schema, diagnostics = check_document(document)
        if schema is None or has_errors(diagnostics):
            return _error(400, "schema-invalid", "schema has errors",
                          diagnostics=[{"severity": d.severity.value, "code": d.code,
                                        "path": d.path, "message": d.message}
                                       for d in diagnostics])
        try:
            engine_config = EngineConfig.from_dict(
                {**service.config.to_dict(), **payload.get("config", {})})
        except (TypeError, ValueError) as exc:
            return _error(400, "bad-config", str(exc))

        record = service.create_session(schema, engine_config)
        return JSONResponse(
            {"session_id": record.session_id,
             "events": [e.to_json() for e in record.events]},
            status_code=201)

    @app.get("/v1/sessions/{session_id}")
    async def get_state(session_id: str):
        store.evict_idle()
        record = store.get(session_id)
        if record is None:
            return _error(404, "unknown-session", "no such session")
        return service.state_view(record)

    @app.post("/v1/sessions/{session_id}/input", status_code=202)
    async def post_input(session_id: str, request: Request):
        store.evict_idle()
        record = store.get(session_id)
        if record is None:
            return _error(404, "unknown-session", "no such session")
        try:
            payload = json.loads(await request.body() or b"{}")
        except json.JSONDecodeError as exc:
            return _error(422, "bad-json", f"body is not valid JSON: {exc}")
        actions = (payload.get("actions") or "").strip() or None
        dialogue = (payload.get("dialogue") or "").strip() or None
        if not actions and not dialogue:
            return _error(422, "empty-input", "input needs actions or dialogue")

        if record.turn_active:
            return _error(409, "turn-in-progress", "a turn is already running")
        phase = record.session.phase
        if phase is Phase.AWAITING_ADVANCE:
            # A previous turn stopped mid-advance (provider failure); resume
            # it in the background, but this input is still out of phase.
            record.turn_active = True
            asyncio.get_running_loop().create_task(service.run_turn(record, None))
            return _error(409, "wrong-phase", "session is advancing; retry at the next pause")
        if phase is not Phase.AWAITING_INPUT:
            return _error(409, "wrong-phase", f"session is {phase.value}")

        record.turn_active = True
        asyncio.get_running_loop().create_task(
            service.run_turn(record, PlayerInput(actions=actions, dialogue=dialogue)))
        return JSONResponse({"accepted": True, "session_id": session_id}, status_code=202)

    @app.get("/v1/sessions/{session_id}/events")
    async def stream_events(session_id: str, request: Request):
        record = store.get(session_id)
        if record is None:
            return _error(404, "unknown-session", "no such session")
        raw_last = request.headers.get("last-event-id") \
            or request.query_params.get("last_event_id") or "0"
        try:
            last_seen = int(raw_last)
        except ValueError:
            last_seen = 0

        queue: asyncio.Queue = asyncio.Queue()
        with record.mutex:
            backlog = [e for e in record.events if e.id > last_seen]
            record.subscribers.add(queue)

        async def generate():
            sent = last_seen
            try:
                for event in backlog:
                    sent = event.id
                    yield event.to_sse()
                while True:
                    event = await queue.get()
                    if event.id <= sent:
                        continue
                    sent = event.id
                    yield event.to_sse()
            finally:
                record.subscribers.discard(queue)

        return StreamingResponse(generate(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache",
                                          "X-Accel-Buffering": "no"})

    if web_root and Path(web_root).is_dir():
        app.mount("/", StaticFiles(directory=str(web_root), html=True), name="webui")

    return app
