"""Long-running HTTP service exposing optimization sessions.

Clients create sessions, watch frames stream in (server-sent events), stop a
run between steps, accept a frame, and download adapter checkpoints. Frames
persist to the session directory as they are produced, so a restarted
service lists old sessions and replays their frame logs unchanged.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .adapters import AdapterParams, save_checkpoint
from .artifacts import (
    CHECKPOINT,
    SessionWriter,
    decision_to_dict,
    frame_filename,
    list_sessions,
    read_loss_records,
    read_metadata,
    thumb_filename,
)
from .backbones import load_backbone
from .config import InversionConfig, config_hash, optimization_config_from_dict
from .errors import ConfigurationError, SubjectTuneError
from .extractors import flatten_stub, get_extractor
from .imaging import load_mask_png, load_png
from .subject import ReferenceSubject
from .workflows import EditJob, GenerationJob, run_edit, run_generation

RUNNING_STATUSES = ("pending", "running")
TERMINAL_STATUSES = ("stopped_by_user", "converged", "failed", "accepted")

_REASON_TO_STATUS = {
    "early_stop": "converged",
    "max_iterations": "converged",
    "user_stop": "stopped_by_user",
    "error": "failed",
}


@dataclass
class ServiceSettings:
    session_root: Path = Path("sessions")
    host: str = "127.0.0.1"
    port: int = 8000
    workers: int = 2
    stream_poll_seconds: float = 0.05
    ui_dir: Path | None = None

    @classmethod
    def from_env(cls) -> "ServiceSettings":
        ui_env = os.environ.get("SUBJECTTUNE_UI_DIR")
        ui_dir = Path(ui_env) if ui_env else None
        if ui_dir is None and (Path("frontend") / "index.html").exists():
            ui_dir = Path("frontend")
        return cls(
            session_root=Path(os.environ.get("SUBJECTTUNE_SESSION_ROOT", "sessions")),
            host=os.environ.get("SUBJECTTUNE_HOST", "127.0.0.1"),
            port=int(os.environ.get("SUBJECTTUNE_PORT", "8000")),
            workers=int(os.environ.get("SUBJECTTUNE_WORKERS", "2")),
            ui_dir=ui_dir,
        )


class SessionRequest(BaseModel):
    """Job spec accepted by POST /sessions."""

    task: str = "generate"
    backbone: str = "toy"
    subject_path: str
    class_label: str = "subject"
    target_prompts: list[str] = Field(default_factory=list)
    simple_prompt: str | None = None
    simplify_prompt: bool = True
    input_path: str | None = None
    mask_source: str = "auto"
    mask_path: str | None = None
    inversion: dict = Field(default_factory=dict)
    config: dict = Field(default_factory=dict)
    extractors: list[str] | str | None = None


@dataclass
class Session:
    session_id: str
    request: dict
    directory: Path
    status: str = "pending"
    frames: list[dict] = field(default_factory=list)
    snapshots: list[AdapterParams] = field(default_factory=list)
    decision: dict | None = None
    best_index: int = -1
    error: str | None = None
    backbone_id: str = "toy"
    config_hash: str = ""
    accepted_index: int | None = None
    created_at: float = field(default_factory=time.time)
    restored: bool = False
    stop_event: threading.Event = field(default_factory=threading.Event)
    condition: threading.Condition = field(default_factory=threading.Condition)

    def summary(self) -> dict:
        return {
            "session_id": self.session_id,
            "status": self.status,
            "backbone_id": self.backbone_id,
            "config_hash": self.config_hash,
            "n_frames": len(self.frames),
            "best_index": self.best_index,
            "decision": self.decision,
            "accepted_index": self.accepted_index,
            "error": self.error,
        }


def _frame_payload(session_id: str, record: dict) -> dict:
    index = record["step"]
    return {
        "index": index,
        "loss_total": record["loss_total"],
        "components": record["components"],
        "image_url": f"/sessions/{session_id}/frames/{index}/image",
        "thumbnail_url": f"/sessions/{session_id}/frames/{index}/thumb",
    }


def _sse(event: str, payload: dict) -> str:
    return f"event: {event}\ndata: {json.dumps(payload, sort_keys=True)}\n\n"


def _build_job(request: SessionRequest):
    subject_path = Path(request.subject_path)
    if not subject_path.exists():
        raise ConfigurationError(f"subject_path {subject_path} does not exist")
    subject = ReferenceSubject(image=load_png(subject_path), class_label=request.class_label)
    config = optimization_config_from_dict(request.config)
    if request.task == "generate":
        return GenerationJob(
            subject=subject,
            target_prompts=request.target_prompts or [subject.simple_prompt],
            simple_prompt=request.simple_prompt,
            config=config,
            backbone_id=request.backbone,
            simplify_prompt=request.simplify_prompt,
        )
    if request.task == "edit":
        if not request.input_path or not Path(request.input_path).exists():
            raise ConfigurationError("edit task requires an existing input_path")
        user_mask = None
        if request.mask_path:
            user_mask = load_mask_png(request.mask_path)
        return EditJob(
            input_image=load_png(request.input_path),
            subject=subject,
            config=config,
            backbone_id=request.backbone,
            inversion=InversionConfig(**request.inversion),
            mask_source=request.mask_source,
            user_mask=user_mask,
        )
    raise ConfigurationError(f"unknown task {request.task!r}; expected 'generate' or 'edit'")


def _resolve_extractors(request: SessionRequest, backbone):
    spec = request.extractors
    if spec is None:
        spec = "stub" if request.backbone == "toy" else ["dino-v2", "ir-features"]
    if spec == "stub":
        resolution = backbone.handle.resolution
        return (
            flatten_stub("service-stub-a", resolution),
            flatten_stub("service-stub-b", resolution),
        )
    if isinstance(spec, (list, tuple)) and len(spec) == 2:
        return tuple(get_extractor(name) for name in spec)
    raise ConfigurationError("extractors must be 'stub' or a pair of registry names")


def _restore_session(directory: Path) -> Session | None:
    metadata = read_metadata(directory)
    if metadata is None or "session_id" not in metadata:
        return None
    session = Session(
        session_id=metadata["session_id"],
        request=metadata.get("request", {}),
        directory=directory,
        status=metadata.get("status", "failed"),
        decision=metadata.get("decision"),
        best_index=metadata.get("best_index", -1),
        error=metadata.get("error"),
        backbone_id=metadata.get("backbone_id", "?"),
        config_hash=metadata.get("config_hash", ""),
        accepted_index=metadata.get("accepted_index"),
        restored=True,
    )
    session.frames = read_loss_records(directory)
    return session


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings.from_env()
    settings.session_root.mkdir(parents=True, exist_ok=True)

    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=settings.workers)

    for directory in list_sessions(settings.session_root):
        restored = _restore_session(directory)
        if restored is not None:
            sessions[restored.session_id] = restored

    @asynccontextmanager
    async def lifespan(_app):
        yield
        executor.shutdown(wait=False, cancel_futures=True)

    app = FastAPI(title="subjecttune session service", lifespan=lifespan)
    app.state.settings = settings
    app.state.sessions = sessions

    def get_session(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session '{session_id}'")
        return session

    def finalize_metadata(session: Session) -> None:
        writer = SessionWriter(session.directory)
        metadata = read_metadata(session.directory) or {}
        metadata.update(
            {
                "session_id": session.session_id,
                "status": session.status,
                "decision": session.decision,
                "best_index": session.best_index,
                "error": session.error,
                "backbone_id": session.backbone_id,
                "config_hash": session.config_hash,
                "accepted_index": session.accepted_index,
                "request": session.request,
            }
        )
        writer.write_metadata(metadata)

    def run_session(session: Session, request: SessionRequest) -> None:
        with session.condition:
            session.status = "running"
            session.condition.notify_all()
        try:
            job = _build_job(request)
            backbone = load_backbone(request.backbone)
            extractors = _resolve_extractors(request, backbone)
            session.backbone_id = backbone.handle.backbone_id
            session.config_hash = config_hash(job.config)

            def on_frame(frame, snapshot):
                record = {
                    "step": frame.step_index,
                    "loss_total": frame.loss_total,
                    "components": frame.loss_components,
                }
                with session.condition:
                    session.frames.append(record)
                    session.snapshots.append(snapshot)
                    session.condition.notify_all()

            kwargs = dict(
                backbone=backbone,
                extractors=extractors,
                stop_channel=session.stop_event,
                on_frame=on_frame,
                session_dir=session.directory,
            )
            result = run_generation(job, **kwargs) if isinstance(job, GenerationJob) else run_edit(job, **kwargs)
            run = result.run
            with session.condition:
                session.decision = decision_to_dict(run.decision)
                session.best_index = run.best_index
                session.error = run.error_message
                session.status = _REASON_TO_STATUS[run.decision.reason.value]
                session.condition.notify_all()
        except Exception as exc:  # noqa: BLE001 - session failures become status
            with session.condition:
                session.error = str(exc)
                session.status = "failed"
                session.decision = {"reason": "error", "stop_index": len(session.frames) - 1}
                session.condition.notify_all()
        finalize_metadata(session)

    @app.post("/sessions", status_code=201)
    def create_session(request: SessionRequest) -> dict:
        session_id = uuid.uuid4().hex[:12]
        directory = settings.session_root / session_id
        session = Session(session_id=session_id, request=request.model_dump(), directory=directory)
        try:
            # Fail fast on invalid specs before queueing.
            _build_job(request)
        except (ConfigurationError, SubjectTuneError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with registry_lock:
            sessions[session_id] = session
        executor.submit(run_session, session, request)
        return {"session_id": session_id, "status": session.status}

    @app.get("/sessions")
    def index() -> list[dict]:
        with registry_lock:
            items = sorted(sessions.values(), key=lambda s: s.created_at)
        return [session.summary() for session in items]

    @app.get("/sessions/{session_id}")
    def show(session_id: str) -> dict:
        session = get_session(session_id)
        with session.condition:
            payload = session.summary()
            payload["frames"] = [_frame_payload(session_id, record) for record in session.frames]
        return payload

    @app.get("/sessions/{session_id}/frames")
    def stream_frames(session_id: str) -> StreamingResponse:
        session = get_session(session_id)

        def event_stream() -> Iterator[str]:
            cursor = 0
            while True:
                with session.condition:
                    while cursor >= len(session.frames) and session.status in RUNNING_STATUSES:
                        session.condition.wait(timeout=settings.stream_poll_seconds)
                    pending = [
                        _frame_payload(session_id, record)
                        for record in session.frames[cursor:]
                    ]
                    cursor += len(pending)
                    terminal = session.status not in RUNNING_STATUSES
                    decision = session.decision
                    status = session.status
                    best_index = session.best_index
                for payload in pending:
                    yield _sse("frame", payload)
                if terminal and not pending:
                    yield _sse(
                        "end",
                        {"status": status, "decision": decision, "best_index": best_index},
                    )
                    return

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    def _frame_file(session: Session, index: int, thumb: bool) -> FileResponse:
        name = thumb_filename(index) if thumb else frame_filename(index)
        path = session.directory / ("thumbs" if thumb else "") / name
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"no image for frame {index}")
        return FileResponse(path, media_type="image/png")

    @app.get("/sessions/{session_id}/frames/{index}/image")
    def frame_image(session_id: str, index: int) -> FileResponse:
        return _frame_file(get_session(session_id), index, thumb=False)

    @app.get("/sessions/{session_id}/frames/{index}/thumb")
    def frame_thumb(session_id: str, index: int) -> FileResponse:
        return _frame_file(get_session(session_id), index, thumb=True)

    @app.post("/sessions/{session_id}/stop")
    def stop(session_id: str) -> dict:
        session = get_session(session_id)
        with session.condition:
            if session.status in TERMINAL_STATUSES:
                return {
                    "acknowledged": True,
                    "already_terminal": True,
                    "status": session.status,
                    "decision": session.decision,
                }
        session.stop_event.set()
        return {"acknowledged": True, "already_terminal": False, "status": "stopping"}

    def _export(session: Session, frame_index: int | None) -> tuple[Path, int]:
        with session.condition:
            n_frames = len(session.frames)
            if n_frames == 0:
                raise HTTPException(status_code=409, detail="session has no frames")
            index = session.best_index if frame_index is None else frame_index
            if not 0 <= index < n_frames:
                raise HTTPException(
                    status_code=400, detail=f"frame_index {index} out of range [0, {n_frames})"
                )
            snapshot = session.snapshots[index] if index < len(session.snapshots) else None
        default_path = session.directory / CHECKPOINT
        if frame_index is None and default_path.exists():
            return default_path, index
        if snapshot is None:
            raise HTTPException(
                status_code=409,
                detail="adapter snapshots for this session are no longer in memory; "
                "only the best-frame checkpoint is available",
            )
        path = session.directory / f"adapter_frame_{index:04d}.npz"
        save_checkpoint(
            path,
            snapshot,
            backbone_id=session.backbone_id,
            config_hash=session.config_hash,
            step_index=index,
        )
        return path, index

    @app.post("/sessions/{session_id}/accept")
    def accept(session_id: str, body: dict | None = None) -> dict:
        session = get_session(session_id)
        with session.condition:
            if session.status in RUNNING_STATUSES:
                raise HTTPException(status_code=409, detail="session is still running")
        frame_index = (body or {}).get("frame_index")
        path, index = _export(session, frame_index)
        with session.condition:
            session.accepted_index = index
            session.status = "accepted"
            session.condition.notify_all()
        finalize_metadata(session)
        return {"status": "accepted", "frame_index": index, "checkpoint": str(path)}

    @app.get("/sessions/{session_id}/adapter")
    def adapter(session_id: str, frame_index: int | None = None):
        session = get_session(session_id)
        path, index = _export(session, frame_index)
        return FileResponse(
            path,
            media_type="application/octet-stream",
            filename=path.name,
            headers={"X-Frame-Index": str(index)},
        )

    @app.exception_handler(SubjectTuneError)
    def handle_domain_error(_request, exc: SubjectTuneError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    if settings.ui_dir is not None and (settings.ui_dir / "index.html").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=settings.ui_dir, html=True), name="ui")

    return app


def main() -> None:  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    settings = ServiceSettings.from_env()
    uvicorn.run(create_app(settings), host=settings.host, port=settings.port)
