"""
Frame and posterior messages.

One JSON object per line, shared by JSONL stream files, the TCP frame
server and the WebSocket bridge:

    frame:     {"t": 0.0, "pitch": 1.0, "yaw": 2.0, "roll": 3.0}
               optionally with "gt_pitch", "gt_yaw", "gt_roll"
    posterior: {"t": ..., "pitch": ..., "yaw": ..., "roll": ..., "vp": ..., "vy": ..., "vr": ...}
    error:     {"error": "<message>"}

Floats are written with Python's shortest round-trip representation so
values survive a write/read cycle unchanged.
"""

import json
from typing import Any, Dict, Mapping, Optional

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from core.pose import AXES, VELOCITY_KEYS, EulerPose, FrameRecord, StateVector


GT_KEYS = tuple(f"gt_{axis}" for axis in AXES)


class FrameMessage(BaseModel):
    """Incoming pose sample. Numbers only; strings and booleans are rejected."""

    model_config = ConfigDict(strict=True, allow_inf_nan=False, extra="ignore")

    t: float
    pitch: float
    yaw: float
    roll: float
    gt_pitch: Optional[float] = None
    gt_yaw: Optional[float] = None
    gt_roll: Optional[float] = None

    @model_validator(mode="after")
    def _complete_ground_truth(self):
        present = [getattr(self, key) is not None for key in GT_KEYS]
        if any(present) and not all(present):
            raise ValueError("ground truth needs all of gt_pitch, gt_yaw and gt_roll")
        return self

    def to_frame(self) -> FrameRecord:
        pose = EulerPose(self.pitch, self.yaw, self.roll).normalized()
        truth = None
        if self.gt_pitch is not None:
            truth = EulerPose(self.gt_pitch, self.gt_yaw, self.gt_roll).normalized()
        return FrameRecord(self.t, pose, truth)


class PosteriorMessage(BaseModel):
    """Filter output for one frame."""

    t: float
    pitch: float
    yaw: float
    roll: float
    vp: float
    vy: float
    vr: float


def describe_validation_error(error: ValidationError) -> str:
    item = error.errors()[0]
    location = ".".join(str(p) for p in item.get("loc", ()))
    return f"{location}: {item['msg']}" if location else item["msg"]


def parse_frame(document: Any) -> FrameRecord:
    """Validate one decoded frame object; raises ValueError with a short reason."""
    if not isinstance(document, Mapping):
        raise ValueError("frame must be a JSON object")
    try:
        return FrameMessage.model_validate(document).to_frame()
    except ValidationError as e:
        raise ValueError(describe_validation_error(e)) from None


def decode_frame_line(line: str) -> FrameRecord:
    try:
        document = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValueError(f"invalid JSON: {e.msg} at column {e.colno}") from None
    return parse_frame(document)


def frame_to_dict(frame: FrameRecord, state: Optional[StateVector] = None) -> Dict[str, float]:
    """Frame as a message dict; with `state`, pose and velocities come from it."""
    pose = state.pose if state is not None else frame.pose
    document: Dict[str, float] = {"t": frame.timestamp}
    document.update(zip(AXES, pose.as_tuple()))
    if state is not None:
        document.update(zip(VELOCITY_KEYS, state.velocity))
    if frame.ground_truth is not None:
        document.update(zip(GT_KEYS, frame.ground_truth.as_tuple()))
    return document


def posterior_to_dict(timestamp: float, state: StateVector) -> Dict[str, float]:
    document: Dict[str, float] = {"t": timestamp}
    document.update(zip(AXES, state.pose.as_tuple()))
    document.update(zip(VELOCITY_KEYS, state.velocity))
    return document


def error_to_dict(message: str, line: Optional[int] = None) -> Dict[str, Any]:
    document: Dict[str, Any] = {"error": message}
    if line is not None:
        document["line"] = line
    return document


def encode_line(document: Mapping[str, Any]) -> str:
    return json.dumps(document, separators=(",", ":")) + "\n"
