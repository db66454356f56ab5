"""HTTP/WebSocket service wrapping the pipeline.

REST endpoints cover synthesis, training, and session management; a live
session broadcasts frame messages over WebSocket at the loop rate and
accepts operator command messages back (eye/thought/gains/halt/mode), the
same wire protocol the browser console speaks. Malformed or unknown
messages get an ``{"type": "error", ...}`` reply; unknown fields in valid
messages are ignored.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__, hmm, pipeline, signal_io
from .errors import NumericalError, ValidationError

log = logging.getLogger(__name__)


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str = __version__


class SynthRequest(BaseModel):
    spec: pipeline.SynthSpecModel
    out_path: str
    seed: int = 0


class SynthResponse(BaseModel):
    path: str
    eog_frames: int
    metric_samples: int


class ScheduleEntry(BaseModel):
    start_s: float
    end_s: float
    thought: str


class TrainRequest(BaseModel):
    config: pipeline.SessionConfig
    schedule: list[ScheduleEntry]


class TrainResponse(BaseModel):
    model_path: str | None
    iterations: int
    agreement: float
    final_log_likelihood: float
    warnings: list[str] = Field(default_factory=list)


class SessionCreateRequest(BaseModel):
    config: pipeline.SessionConfig


class SessionCreateResponse(BaseModel):
    session_id: str
    ws_path: str


class SessionStatus(BaseModel):
    session_id: str
    state: str
    ticks: int
    total_ticks: int
    clients: int
    mode: str


class LiveSession:
    """One control loop paced on the wall clock, broadcasting to any number
    of websocket clients."""

    def __init__(self, session_id: str, config: pipeline.SessionConfig):
        self.session_id = session_id
        self.config = config
        trace = pipeline.load_session_trace(config)
        model = hmm.load_model(config.model_path)
        self.loop = pipeline.ControlLoop(config, trace, model)
        self.clients: set[WebSocket] = set()
        self.state = "running"
        self.task: asyncio.Task | None = None
        self._record = None
        if config.record_path:
            self._record = open(config.record_path, "w", encoding="utf-8")
            self._record.write(pipeline.FRAMES_HEADER
                               + pipeline.config_hash(config) + "\n")

    def start(self) -> None:
        self.task = asyncio.create_task(self._run())

    async def _run(self) -> None:
        tick_s = 1.0 / self.config.loop_rate_hz
        next_t = time.monotonic()
        try:
            while self.state == "running" and not self.loop.done:
                frame = self.loop.tick()
                payload = pipeline.frame_json(frame)
                if self._record:
                    self._record.write(payload + "\n")
                await self._broadcast(payload)
                next_t += tick_s
                await asyncio.sleep(max(0.0, next_t - time.monotonic()))
            if self.state == "running":
                self.state = "done"
        except Exception:
            log.exception("session %s crashed", self.session_id)
            self.state = "error"
        finally:
            if self._record:
                self._record.close()
                self._record = None

    async def _broadcast(self, payload: str) -> None:
        dead = []
        for ws in self.clients:
            try:
                await ws.send_text(payload)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.clients.discard(ws)

    def stop(self) -> None:
        if self.state == "running":
            self.state = "stopped"

    def handle_message(self, raw: str) -> dict | None:
        """Decode and inject one client message; error reply dict on failure."""
        try:
            message = json.loads(raw)
        except json.JSONDecodeError as exc:
            return {"type": "error", "error": f"bad JSON: {exc.msg}"}
        return self.loop.inject(message)


def create_app(console_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="neuroswarm", version=__version__)
    sessions: dict[str, LiveSession] = {}
    counter = itertools.count(1)
    app.state.sessions = sessions

    @app.exception_handler(ValidationError)
    async def _validation(request, exc):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(NumericalError)
    async def _numerical(request, exc):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse()

    @app.post("/synth", response_model=SynthResponse)
    def synth(req: SynthRequest):
        trace = signal_io.synthesize(req.spec.to_spec(), req.seed)
        signal_io.write_trace(trace, req.out_path)
        return SynthResponse(path=req.out_path,
                             eog_frames=len(trace.eog_frames),
                             metric_samples=len(trace.metric_samples))

    @app.post("/train", response_model=TrainResponse)
    def train(req: TrainRequest):
        schedule = [(e.start_s, e.end_s, e.thought) for e in req.schedule]
        model, report = pipeline.run_training_session(req.config, schedule)
        return TrainResponse(
            model_path=req.config.model_path,
            iterations=report.iterations,
            agreement=report.agreement,
            final_log_likelihood=report.log_likelihoods[-1],
            warnings=report.warnings,
        )

    @app.post("/sessions", response_model=SessionCreateResponse)
    async def create_session(req: SessionCreateRequest):
        if req.config.mode not in ("replay", "live-sim"):
            raise ValidationError("live sessions need mode replay or live-sim")
        session_id = f"s{next(counter)}"
        session = LiveSession(session_id, req.config)
        sessions[session_id] = session
        session.start()
        return SessionCreateResponse(session_id=session_id,
                                     ws_path=f"/ws/{session_id}")

    def _get(session_id: str) -> LiveSession:
        if session_id not in sessions:
            raise HTTPException(status_code=404,
                                detail=f"no session {session_id!r}")
        return sessions[session_id]

    @app.get("/sessions/{session_id}", response_model=SessionStatus)
    def session_status(session_id: str):
        s = _get(session_id)
        return SessionStatus(session_id=s.session_id, state=s.state,
                             ticks=s.loop.ticks, total_ticks=s.loop.total_ticks,
                             clients=len(s.clients), mode=s.loop.mode)

    @app.delete("/sessions/{session_id}", response_model=SessionStatus)
    def stop_session(session_id: str):
        s = _get(session_id)
        s.stop()
        return SessionStatus(session_id=s.session_id, state=s.state,
                             ticks=s.loop.ticks, total_ticks=s.loop.total_ticks,
                             clients=len(s.clients), mode=s.loop.mode)

    async def _serve_ws(websocket: WebSocket, session: LiveSession) -> None:
        await websocket.accept()
        session.clients.add(websocket)
        try:
            while True:
                raw = await websocket.receive_text()
                reply = session.handle_message(raw)
                if reply is not None:
                    await websocket.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            pass
        finally:
            session.clients.discard(websocket)

    @app.websocket("/ws/{session_id}")
    async def ws_session(websocket: WebSocket, session_id: str):
        if session_id not in sessions:
            await websocket.close(code=4004)
            return
        await _serve_ws(websocket, sessions[session_id])

    @app.websocket("/ws")
    async def ws_latest(websocket: WebSocket):
        if not sessions:
            await websocket.close(code=4004)
            return
        latest = list(sessions)[-1]
        await _serve_ws(websocket, sessions[latest])

    if console_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend"
        if (candidate / "index.html").is_file():
            console_dir = str(candidate)
    if console_dir and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")

    return app


app = create_app()
