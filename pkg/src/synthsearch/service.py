"""HTTP control plane: HITL sessions and live run inspection for the web
console. Engine mutations happen on one background thread per run; read
endpoints serve persisted snapshots and never block the loop.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .engine import Evaluator, RunConfig, SearchEngine
from .errors import (
    NotFoundError,
    RunAbortedError,
    StateError,
    SynthSearchError,
    ValidationError,
)
from .gateway import LlmGateway
from .hitl import FeedbackSubmission, SessionManager
from .prompts import PromptPack
from .store import RunStore
from .workflow import SearchTree


class SessionCreate(BaseModel):
    task: str


class FeedbackBody(BaseModel):
    text: str


class RunCreate(BaseModel):
    session_id: Optional[str] = None


class RunHandle:
    def __init__(self, run_id: str, store: RunStore, tree: SearchTree, engine: SearchEngine):
        self.run_id = run_id
        self.store = store
        self.tree = tree
        self.engine = engine
        self.status = "pending"
        self.report: Optional[dict] = None
        self.error: Optional[str] = None
        self.thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self.status = "running"
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def _run(self) -> None:
        try:
            report = self.engine.run()
            self.report = report.to_dict()
            self.status = "finished"
        except RunAbortedError as exc:
            self.error = str(exc)
            self.report = {"diagnostic": exc.diagnostic}
            self.status = "aborted"
        except Exception as exc:  # surfaced via GET /runs/{id}
            self.error = str(exc)
            self.status = "error"

    def join(self, timeout: Optional[float] = None) -> None:
        if self.thread is not None:
            self.thread.join(timeout)


class AppState:
    """Wires sessions and runs to one configured gateway/evaluator pair."""

    def __init__(
        self,
        config: RunConfig,
        gateway: LlmGateway,
        evaluator: Evaluator,
        runs_dir: str | Path,
        pack: Optional[PromptPack] = None,
    ):
        self.config = config
        self.gateway = gateway
        self.evaluator = evaluator
        self.runs_dir = Path(runs_dir)
        self.pack = pack or PromptPack.load_default()
        self.runs: dict[str, RunHandle] = {}
        self._run_counter = 0
        self._lock = threading.Lock()
        self.manager = self._new_manager()

    def _new_manager(self) -> SessionManager:
        store = RunStore(self.runs_dir / "sessions")
        self.gateway.event_sink = lambda kind, payload: store.append_event(kind, payload)
        return SessionManager(self.config, self.gateway, self.evaluator, store, self.pack)

    def new_run(self, tree: SearchTree) -> RunHandle:
        with self._lock:
            self._run_counter += 1
            run_id = f"run-{self._run_counter}"
        store = RunStore(self.runs_dir / run_id)
        # carry over the init events recorded during the session phase
        for event in self.manager.store.read_events():
            store.append_event(event["kind"], event["payload"])
        store.save_tree(tree)
        self.gateway.event_sink = lambda kind, payload: store.append_event(kind, payload)
        engine = SearchEngine(self.config, tree, self.gateway, self.evaluator, store, self.pack)
        handle = RunHandle(run_id, store, tree, engine)
        self.runs[run_id] = handle
        return handle


def create_app(state: AppState, ui_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="synthsearch control plane")

    @app.exception_handler(SynthSearchError)
    async def _engine_error(request: Request, exc: SynthSearchError):
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, StateError):
            status = 409
        else:
            status = 400
        return JSONResponse(status_code=status, content={"error": type(exc).__name__, "detail": str(exc)})

    def _session(session_id: str):
        session = state.manager.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"session {session_id} not found")
        return session

    def _run(run_id: str) -> RunHandle:
        handle = state.runs.get(run_id)
        if handle is None:
            raise NotFoundError(f"run {run_id} not found")
        return handle

    @app.post("/sessions")
    def create_session(body: SessionCreate):
        session = state.manager.start_session(body.task)
        return session.to_dict()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _session(session_id).to_dict()

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, body: FeedbackBody):
        session = _session(session_id)
        if session.status == "approved":
            raise StateError(f"session {session_id} is already approved")
        submission = FeedbackSubmission(session_id=session_id, text=body.text)
        return state.manager.submit_feedback(session, submission).to_dict()

    @app.post("/sessions/{session_id}/approve")
    def approve_session(session_id: str):
        session = _session(session_id)
        root_id, _tree = state.manager.approve(session)
        return {"root_node_id": root_id, "session": session.to_dict()}

    @app.post("/runs")
    def create_run(body: RunCreate):
        if body.session_id is not None:
            session = _session(body.session_id)
            if session.root_node_id is None:
                raise StateError(f"session {body.session_id} has no approved root")
            tree = state.manager._tree
        elif state.config.hitl_mode == "auto":
            session = state.manager.start_session(state.config.task)
            _root, tree = state.manager.approve(session)
        else:
            raise ValidationError("session_id required unless hitl_mode is 'auto'")
        handle = state.new_run(tree)
        handle.start()
        return {"run_id": handle.run_id, "status": handle.status}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        handle = _run(run_id)
        return {"run_id": run_id, "status": handle.status, "report": handle.report, "error": handle.error}

    @app.get("/runs/{run_id}/tree")
    def get_tree(run_id: str):
        handle = _run(run_id)
        return handle.store.load_tree().to_dict()

    @app.get("/runs/{run_id}/events")
    def get_events(run_id: str, after_seq: int = 0):
        handle = _run(run_id)
        return {"events": handle.store.read_events(after_seq=after_seq)}

    @app.get("/runs/{run_id}/nodes/{node_id}")
    def get_node(run_id: str, node_id: int):
        handle = _run(run_id)
        node = handle.store.load_tree().get(node_id)
        detail = node.eval_detail or {}
        return {
            "id": node.id,
            "parent": node.parent,
            "reward": node.reward,
            "workflow": node.workflow.to_dict(),
            "samples": detail.get("samples", []),
            "score_matrix": detail.get("score_matrix"),
            "suggestions": detail.get("suggestions", ""),
            "workflow_quality": detail.get("workflow_quality"),
        }

    @app.get("/runs/{run_id}/export")
    def get_export(run_id: str, count: int, node_id: Optional[int] = None):
        handle = _run(run_id)
        tree = handle.store.load_tree()
        target = node_id if node_id is not None else tree.best_node()
        path = handle.store.export_dataset(
            tree, target, count, state.evaluator.run_batch, state.config.batch_size
        )
        import json

        manifest = json.loads((handle.store.directory / "export" / "manifest.json").read_text())
        return {"path": str(path), "manifest": manifest}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
