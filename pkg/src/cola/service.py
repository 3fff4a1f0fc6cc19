"""HTTP + WebSocket front door for sessions.

One driver thread per session advances it whenever the orchestrator says it
is ready; commands arrive over HTTP or WebSocket, take the same per-session
lock, and wake the driver. Event fan-out is per-connection: subscribing
snapshots the log as backfill frames under the lock, so a client sees every
record exactly once and in order no matter when it attaches.

Wire frames are versioned: {"v": 1, "kind": ..., "body": ...}. Outbound
kinds are record, rollback, status, ack, rejected; the only inbound kind is
command. Unknown kinds come back as rejected frames, never silence.
"""

from __future__ import annotations

import asyncio
import json
import queue
import threading
import uuid
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect

from .config import ServiceConfig
from .errors import (
    BudgetExhausted,
    ColaError,
    CommandNotAllowed,
    ConfigError,
    NoSuchStep,
    ScenarioParseError,
    UnknownRole,
    ValidationExhausted,
)
from .orchestrator import (
    DONE,
    Command,
    InteractionMode,
    Session,
    create_session,
    load_session,
)

WIRE_VERSION = 1

_CLOSE = object()  # sentinel pushed to listener queues on teardown

_COMMAND_KEYS = {"kind", "text", "role", "step"}


def frame(kind: str, body: dict) -> dict:
    return {"v": WIRE_VERSION, "kind": kind, "body": body}


def command_from_json(data) -> Command:
    """Wire command object to a Command; ValueError on shape problems."""
    if not isinstance(data, dict):
        raise ValueError("command must be a JSON object")
    unknown = set(data) - _COMMAND_KEYS
    if unknown:
        raise ValueError(f"unknown command fields: {sorted(unknown)}")
    kind = data.get("kind")
    if not isinstance(kind, str) or not kind:
        raise ValueError("command needs a non-empty 'kind'")
    text = data.get("text", "")
    role = data.get("role", "")
    step = data.get("step", -1)
    if not isinstance(text, str) or not isinstance(role, str):
        raise ValueError("'text' and 'role' must be strings")
    if isinstance(step, bool) or not isinstance(step, int):
        raise ValueError("'step' must be an integer")
    return Command(kind=kind, text=text, role=role, step=step)


class ManagedSession:
    """A session plus its driver thread, lock, and event listeners."""

    def __init__(self, session: Session):
        self.session = session
        self._lock = threading.RLock()
        self._listeners: list[queue.Queue] = []
        self._wake = threading.Event()
        self._closed = False
        self._fault: str | None = None
        self._thread = threading.Thread(
            target=self._drive, name=f"session-{session.id}", daemon=True
        )

    def start(self) -> None:
        self._thread.start()
        self._wake.set()

    def close(self) -> None:
        with self._lock:
            self._closed = True
            for listener in self._listeners:
                listener.put(_CLOSE)
            self._listeners.clear()
        self._wake.set()
        self._thread.join(timeout=5)

    # -- views ---------------------------------------------------------------

    def summary(self) -> dict:
        with self._lock:
            return self._summary_locked()

    def events_from(self, start: int) -> list[dict]:
        with self._lock:
            return [record.to_json_dict() for record in self.session.event_log[start:]]

    def _summary_locked(self) -> dict:
        session = self.session
        return {
            "id": session.id,
            "request": session.request,
            "mode": session.mode.value,
            "budget": session.budget,
            "phase": session.phase.to_json_dict(),
            "steps_used": session.steps_used,
            "awaiting_human": session.awaiting_human,
            "started": session.started,
            "records": len(session.event_log),
            "archived": len(session.archived),
            "fault": self._fault,
        }

    # -- commands and subscriptions -------------------------------------------

    def apply(self, command: Command) -> dict:
        """Apply one operator command; raises the orchestrator's rejections."""
        with self._lock:
            self.session.apply_command(command)
            self._fault = None
            frames = []
            if command.kind == "rollback":
                frames.append(frame("rollback", {"to_step": command.step}))
            summary = self._summary_locked()
            frames.append(frame("status", summary))
            self._broadcast_locked(frames)
        self._wake.set()
        return summary

    def handle_frame(self, data) -> dict:
        """One inbound WebSocket frame to its ack or rejection frame."""
        if not isinstance(data, dict) or data.get("v") != WIRE_VERSION:
            return frame("rejected", {"reason": "unsupported wire version"})
        kind = data.get("kind")
        if kind != "command":
            return frame("rejected", {"reason": f"unknown frame kind {kind!r}"})
        try:
            command = command_from_json(data.get("body"))
        except ValueError as err:
            return frame("rejected", {"reason": str(err)})
        try:
            self.apply(command)
        except (CommandNotAllowed, UnknownRole, NoSuchStep) as err:
            return frame("rejected", {"command": command.kind, "reason": str(err)})
        return frame("ack", {"command": command.kind})

    def subscribe(self) -> queue.Queue:
        listener: queue.Queue = queue.Queue()
        with self._lock:
            if self._closed:
                listener.put(_CLOSE)
                return listener
            for record in self.session.event_log:
                listener.put(frame("record", record.to_json_dict()))
            listener.put(frame("status", self._summary_locked()))
            self._listeners.append(listener)
        return listener

    def unsubscribe(self, listener: queue.Queue) -> None:
        with self._lock:
            if listener in self._listeners:
                self._listeners.remove(listener)
        listener.put(_CLOSE)

    def _broadcast_locked(self, frames: list[dict]) -> None:
        for listener in self._listeners:
            for item in frames:
                listener.put(item)

    # -- the driver ------------------------------------------------------------

    def _drive(self) -> None:
        while True:
            self._wake.wait()
            if self._closed:
                return
            self._wake.clear()
            while self._step():
                pass

    def _step(self) -> bool:
        """Advance once if the session is ready; True to keep going."""
        with self._lock:
            if self._closed or self._fault is not None:
                return False
            if not self.session.ready_to_advance():
                return False
            record = None
            try:
                record = self.session.advance()
            except (BudgetExhausted, ValidationExhausted):
                pass  # phase/awaiting already reflect the outcome
            except ColaError as err:
                self._fault = str(err)
            frames = []
            if record is not None:
                frames.append(frame("record", record.to_json_dict()))
            if self.session.phase.kind == DONE and not self.session.memories_committed:
                self.session.commit_memories()
            frames.append(frame("status", self._summary_locked()))
            self._broadcast_locked(frames)
            return True


class SessionManager:
    """Owns every live session and reloads persisted ones on demand."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        config.ensure_directories()
        self._lock = threading.Lock()
        self._managed: dict[str, ManagedSession] = {}

    def create(
        self,
        *,
        task: str,
        scenario: str | Path,
        mode: InteractionMode | None = None,
        playbook: str | Path | None = None,
        budget: int | None = None,
        session_id: str | None = None,
    ) -> ManagedSession:
        mode = mode or self.config.default_mode
        budget = budget or self.config.default_budget
        sid = session_id or uuid.uuid4().hex[:12]
        session_dir = self.config.sessions_dir / sid
        if session_dir.exists():
            raise CommandNotAllowed(f"session {sid!r} already exists")
        backend = self.config.build_backend(playbook)
        session = create_session(
            task,
            scenario=scenario,
            backend=backend,
            mode=mode,
            budget=budget,
            prompt_dir=self.config.prompt_dir,
            session_id=sid,
            session_dir=session_dir,
            memory_dir=self.config.memory_dir,
            embedder=self.config.build_embedder(),
            paused=mode is not InteractionMode.AUTOMATIC,
        )
        # Enough to rebuild the backend and adapter after a restart.
        source = {
            "scenario": str(scenario),
            "playbook": str(playbook) if playbook else None,
        }
        (session_dir / "source.json").write_text(
            json.dumps(source, sort_keys=True), encoding="utf-8"
        )
        managed = ManagedSession(session)
        with self._lock:
            self._managed[sid] = managed
        managed.start()
        return managed

    def get(self, session_id: str) -> ManagedSession:
        with self._lock:
            if session_id in self._managed:
                return self._managed[session_id]
        session_dir = self.config.sessions_dir / session_id
        if not (session_dir / "meta.json").exists():
            raise KeyError(session_id)
        source = json.loads((session_dir / "source.json").read_text(encoding="utf-8"))
        backend = self.config.build_backend(source["playbook"])
        session = load_session(
            session_dir,
            scenario=source["scenario"],
            backend=backend,
            prompt_dir=self.config.prompt_dir,
            memory_dir=self.config.memory_dir,
            embedder=self.config.build_embedder(),
        )
        managed = ManagedSession(session)
        with self._lock:
            existing = self._managed.get(session_id)
            if existing is not None:
                return existing
            self._managed[session_id] = managed
        managed.start()
        return managed

    def list(self) -> list[dict]:
        summaries: dict[str, dict] = {}
        with self._lock:
            loaded = dict(self._managed)
        for sid, managed in loaded.items():
            summaries[sid] = managed.summary()
        for meta_path in sorted(self.config.sessions_dir.glob("*/meta.json")):
            sid = meta_path.parent.name
            if sid in summaries:
                continue
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            archived_path = meta_path.parent / "archived.jsonl"
            archived = (
                len(archived_path.read_text(encoding="utf-8").splitlines())
                if archived_path.exists()
                else 0
            )
            summaries[sid] = {
                "id": meta["id"],
                "request": meta["request"],
                "mode": meta["mode"],
                "budget": meta["budget"],
                "phase": meta["phase"],
                "steps_used": meta["steps_used"],
                "awaiting_human": meta["awaiting_human"],
                "started": meta["started"],
                "records": meta["records"],
                "archived": archived,
                "fault": None,
            }
        return sorted(summaries.values(), key=lambda summary: summary["id"])

    def shutdown(self) -> None:
        with self._lock:
            managed = list(self._managed.values())
            self._managed.clear()
        for item in managed:
            item.close()


def create_app(manager: SessionManager) -> FastAPI:
    app = FastAPI(title="cola", version="1")
    app.state.manager = manager

    def lookup(session_id: str) -> ManagedSession:
        try:
            return manager.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")

    @app.post("/sessions", status_code=201)
    def create_session_endpoint(body: dict = Body(...)):
        if not isinstance(body, dict):
            raise HTTPException(status_code=400, detail="body must be a JSON object")
        task = body.get("task")
        if not isinstance(task, str) or not task.strip():
            raise HTTPException(status_code=400, detail="'task' must be a non-empty string")
        scenario = body.get("scenario")
        if not isinstance(scenario, str) or not scenario:
            raise HTTPException(status_code=400, detail="'scenario' must be a path string")
        mode = None
        if "mode" in body:
            try:
                mode = InteractionMode(body["mode"])
            except ValueError:
                raise HTTPException(status_code=400, detail=f"unknown mode {body['mode']!r}")
        budget = body.get("budget")
        if budget is not None and (isinstance(budget, bool) or not isinstance(budget, int)):
            raise HTTPException(status_code=400, detail="'budget' must be an integer")
        playbook = body.get("playbook")
        if playbook is not None and not isinstance(playbook, str):
            raise HTTPException(status_code=400, detail="'playbook' must be a path string")
        try:
            managed = manager.create(
                task=task, scenario=scenario, mode=mode, playbook=playbook, budget=budget
            )
        except (ScenarioParseError, ConfigError) as err:
            raise HTTPException(status_code=422, detail=str(err))
        except (ValueError, CommandNotAllowed) as err:
            raise HTTPException(status_code=400, detail=str(err))
        return {"session_id": managed.session.id}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": manager.list()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return lookup(session_id).summary()

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str, start: int = Query(0, alias="from", ge=0)):
        return {"events": lookup(session_id).events_from(start)}

    @app.post("/sessions/{session_id}/commands", status_code=202)
    def post_command(session_id: str, body: dict = Body(...)):
        managed = lookup(session_id)
        try:
            command = command_from_json(body)
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        try:
            status = managed.apply(command)
        except (CommandNotAllowed, UnknownRole, NoSuchStep) as err:
            raise HTTPException(status_code=409, detail=str(err))
        return {"accepted": True, "status": status}

    @app.websocket("/sessions/{session_id}/ws")
    async def session_socket(websocket: WebSocket, session_id: str):
        loop = asyncio.get_running_loop()
        try:
            managed = await loop.run_in_executor(None, manager.get, session_id)
        except KeyError:
            await websocket.close(code=1008, reason=f"no session {session_id!r}")
            return
        await websocket.accept()
        listener = managed.subscribe()

        async def pump():
            # Single writer: every outbound frame flows through the listener
            # queue, so sends never interleave.
            try:
                while True:
                    item = await loop.run_in_executor(None, listener.get)
                    if item is _CLOSE:
                        return
                    await websocket.send_json(item)
            except Exception:
                return

        sender = asyncio.create_task(pump())
        try:
            while True:
                try:
                    data = await websocket.receive_json()
                except json.JSONDecodeError:
                    listener.put(frame("rejected", {"reason": "frame is not valid JSON"}))
                    continue
                reply = await loop.run_in_executor(None, managed.handle_frame, data)
                listener.put(reply)
        except WebSocketDisconnect:
            pass
        finally:
            managed.unsubscribe(listener)
            await sender

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted (process entry point)."""
    import uvicorn

    manager = SessionManager(config)
    app = create_app(manager)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    finally:
        manager.shutdown()
