"""
FastAPI REST + WebSocket Server

HTTP surface of the head-pose tracker, for simulator engines and tools
that speak HTTP or WebSocket rather than raw TCP.

Endpoints:
- GET /api/v1/health - Health check
- GET /api/v1/profiles - Built-in and configured noise profiles
- POST /api/v1/noise - Observation variance R for a pose
- POST /api/v1/filter - Filter a batch of frames, posteriors + metrics
- WebSocket /ws/track - Line protocol of the TCP frame server, one session per socket

OpenAPI docs at /docs.
"""

import logging
import time
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from core import __version__
from core.adaptive_noise import BUILTIN_PROFILES, EstimatorProfile, build_R, profile_to_dict, resolve_profile
from core.errors import TrackerError
from core.pose import AXES, EulerPose
from pipeline.config import RunConfig, load_config
from pipeline.protocol import FrameMessage, PosteriorMessage, posterior_to_dict
from pipeline.runner import SessionFactory, filter_frames, metrics_for

from .frame_server import FrameConnection


logger = logging.getLogger(__name__)


class NoiseRequest(BaseModel):
    """Pose to evaluate R at, optionally against another profile."""

    pitch: float
    yaw: float
    roll: float
    profile: Optional[str] = Field(None, description="Built-in profile name; configured profile if omitted")

    model_config = {
        "json_schema_extra": {"example": {"pitch": -5.0, "yaw": 45.0, "roll": 2.0, "profile": "hopenet"}}
    }


class FilterRequest(BaseModel):
    """Batch of frames in stream order."""

    frames: List[FrameMessage] = Field(..., min_length=1)

    model_config = {
        "json_schema_extra": {
            "example": {
                "frames": [
                    {"t": 0.0, "pitch": 1.0, "yaw": 2.0, "roll": 3.0},
                    {"t": 0.033, "pitch": 1.1, "yaw": 2.4, "roll": 2.9},
                ]
            }
        }
    }


class HealthResponse(BaseModel):
    status: str
    timestamp: str
    system: str
    version: str
    profile: Optional[str]
    websocket_sessions: int


class APIState:
    """Global API state container."""

    def __init__(self):
        self.config: Optional[RunConfig] = None
        self.factory: Optional[SessionFactory] = None
        self.websocket_sessions: int = 0
        self.start_time: float = time.time()

    def configure(self, config: RunConfig):
        self.config = config
        self.factory = SessionFactory.from_config(config)

    def reset(self):
        self.config = None
        self.factory = None
        self.websocket_sessions = 0


api_state = APIState()


def configure(config: RunConfig):
    """Install the run configuration the endpoints serve."""
    api_state.configure(config)
    logger.info("API configured with profile %s", api_state.factory.profile.name)


def _require_factory() -> SessionFactory:
    if api_state.factory is None:
        raise HTTPException(status_code=503, detail="Tracker not configured")
    return api_state.factory


@asynccontextmanager
async def lifespan(app: FastAPI):
    if api_state.factory is None:
        configure(load_config())
    logger.info("Tracker API ready")
    yield
    logger.info("Tracker API shut down")


app = FastAPI(
    title="Head Pose Tracker API",
    description="Adaptive Kalman filtering of head-pose streams",
    version=__version__,
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.get("/", tags=["Root"])
async def root():
    return {
        "name": "Head Pose Tracker API",
        "version": __version__,
        "docs": "/docs",
        "websocket": "/ws/track",
    }


@app.get("/api/v1/health", response_model=HealthResponse, tags=["Health"])
async def health_check():
    factory = api_state.factory
    return HealthResponse(
        status="healthy" if factory is not None else "unconfigured",
        timestamp=datetime.now(timezone.utc).isoformat(),
        system="Head Pose Tracker",
        version=__version__,
        profile=factory.profile.name if factory is not None else None,
        websocket_sessions=api_state.websocket_sessions,
    )


@app.get("/api/v1/profiles", tags=["Noise"])
async def list_profiles():
    """Built-in profiles plus the one currently configured."""
    factory = _require_factory()
    return {
        "configured": profile_to_dict(factory.profile),
        "builtin": {name: profile_to_dict(profile) for name, profile in BUILTIN_PROFILES.items()},
    }


@app.post("/api/v1/noise", tags=["Noise"])
async def evaluate_noise(request: NoiseRequest):
    """Clamped per-axis observation variance at the given pose."""
    factory = _require_factory()
    try:
        if request.profile is not None and request.profile not in BUILTIN_PROFILES:
            raise ValueError(f"unknown built-in profile {request.profile!r}")
        profile: EstimatorProfile = (
            resolve_profile(request.profile) if request.profile is not None else factory.profile
        )
        R = build_R(profile, EulerPose(request.pitch, request.yaw, request.roll))
    except (ValueError, OSError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    return {"profile": profile.name, "R": {axis: float(R[i, i]) for i, axis in enumerate(AXES)}}


@app.post("/api/v1/filter", tags=["Filter"])
async def filter_batch(request: FilterRequest):
    """Run one fresh session over the frames and return every posterior."""
    factory = _require_factory()
    frames = [message.to_frame() for message in request.frames]
    try:
        run = filter_frames(factory, frames)
    except TrackerError as e:
        raise HTTPException(status_code=422, detail=str(e))
    posteriors: List[Dict[str, Any]] = [
        PosteriorMessage(**posterior_to_dict(frame.timestamp, state)).model_dump()
        for frame, state in zip(run.frames, run.states)
    ]
    return {
        "posteriors": posteriors,
        "metrics": metrics_for(api_state.config, run, factory.profile.name),
    }


@app.websocket("/ws/track")
async def websocket_track(websocket: WebSocket):
    """
    One text message per frame, one reply per frame; same messages as the
    TCP frame server. The session lives as long as the socket.
    """
    await websocket.accept()
    if api_state.factory is None:
        await websocket.close(code=1011)
        return
    api_state.websocket_sessions += 1
    connection = FrameConnection(api_state.factory, peer="websocket")
    try:
        while True:
            message = await websocket.receive_text()
            for line in message.splitlines() or [message]:
                reply = connection.handle_line(line)
                if reply is not None:
                    await websocket.send_text(reply.rstrip("\n"))
    except WebSocketDisconnect:
        pass
    finally:
        api_state.websocket_sessions -= 1
        logger.info("WebSocket session closed after %d frame(s)", connection.lines)
