"""
Stream files.

- JSONL: one frame object per line (see protocol)
- CSV:   header t,pitch,yaw,roll[,gt_pitch,gt_yaw,gt_roll]; filtered output
         adds vp,vy,vr
- Error pairs: CSV with true_pitch,true_yaw,true_roll,pred_pitch,pred_yaw,pred_roll

Reading normalizes angles and enforces strictly increasing timestamps.
Repeated timestamps are dropped with a warning; regressions are collected
with their line numbers and reported together.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.errors import StreamFormatError, StreamOrderError
from core.pose import AXES, VELOCITY_KEYS, EulerPose, FrameRecord, StateVector

from .protocol import GT_KEYS, decode_frame_line, frame_to_dict, parse_frame


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FORMAT_BY_SUFFIX = {".jsonl": "jsonl", ".ndjson": "jsonl", ".json": "jsonl", ".csv": "csv"}
FRAME_COLUMNS = ("t",) + AXES
TRUE_COLUMNS = tuple(f"true_{axis}" for axis in AXES)
PRED_COLUMNS = tuple(f"pred_{axis}" for axis in AXES)


def detect_format(path: PathLike, format: Optional[str] = None) -> str:
    if format is not None:
        if format not in ("jsonl", "csv"):
            raise StreamFormatError(f"unknown stream format {format!r}", path=str(path))
        return format
    suffix = Path(path).suffix.lower()
    if suffix not in FORMAT_BY_SUFFIX:
        raise StreamFormatError(
            f"cannot infer stream format from suffix {suffix!r}; use .jsonl or .csv",
            path=str(path),
        )
    return FORMAT_BY_SUFFIX[suffix]


def _jsonl_records(path: Path) -> Iterator[Tuple[int, FrameRecord]]:
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_no, decode_frame_line(line)
            except ValueError as e:
                raise StreamFormatError(str(e), line=line_no, path=str(path)) from None


def _csv_number(row: dict, key: str, line_no: int, path: Path) -> Optional[float]:
    raw = row.get(key)
    if raw is None or raw.strip() == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise StreamFormatError(f"{key}: not a number: {raw!r}", line=line_no, path=str(path)) from None


def _csv_records(path: Path) -> Iterator[Tuple[int, FrameRecord]]:
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in FRAME_COLUMNS if c not in header]
        if header and missing:
            raise StreamFormatError(f"missing column(s): {', '.join(missing)}", line=1, path=str(path))
        for row in reader:
            line_no = reader.line_num
            document = {}
            for key in FRAME_COLUMNS + GT_KEYS:
                value = _csv_number(row, key, line_no, path)
                if value is None and key in FRAME_COLUMNS:
                    raise StreamFormatError(f"{key}: missing value", line=line_no, path=str(path))
                if value is not None:
                    document[key] = value
            try:
                yield line_no, parse_frame(document)
            except ValueError as e:
                raise StreamFormatError(str(e), line=line_no, path=str(path)) from None


def read_stream(path: PathLike, format: Optional[str] = None, strict: bool = True) -> List[FrameRecord]:
    """
    Read a stream file into frames with normalized angles.

    With strict=False regressing records are dropped with a warning
    instead of failing the read.
    """
    path = Path(path)
    fmt = detect_format(path, format)
    if not path.exists():
        raise FileNotFoundError(f"stream file not found: {path}")
    records = _jsonl_records(path) if fmt == "jsonl" else _csv_records(path)

    frames: List[FrameRecord] = []
    rejected: List[Tuple[int, float]] = []
    duplicates = 0
    for line_no, frame in records:
        if frames:
            last = frames[-1].timestamp
            if frame.timestamp == last:
                duplicates += 1
                continue
            if frame.timestamp < last:
                rejected.append((line_no, frame.timestamp))
                continue
        frames.append(frame)

    if duplicates:
        logger.warning("%s: dropped %d frame(s) with a repeated timestamp", path, duplicates)
    if rejected:
        if strict:
            raise StreamOrderError(rejected, path=str(path))
        logger.warning("%s: dropped %d frame(s) with regressing timestamps", path, len(rejected))
    if not frames:
        logger.warning("%s: stream is empty", path)
    return frames


def write_stream(
    path: PathLike,
    frames: Sequence[FrameRecord],
    format: Optional[str] = None,
    states: Optional[Sequence[StateVector]] = None,
) -> Path:
    """
    Write frames; with `states` each line carries the posterior pose and
    velocities instead of the frame's pose.
    """
    path = Path(path)
    fmt = detect_format(path, format)
    if states is not None and len(states) != len(frames):
        raise ValueError(f"{len(states)} states for {len(frames)} frames")
    path.parent.mkdir(parents=True, exist_ok=True)

    rows = [
        frame_to_dict(frame, states[i] if states is not None else None)
        for i, frame in enumerate(frames)
    ]
    if fmt == "jsonl":
        with open(path, "w") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")
        return path

    columns = list(FRAME_COLUMNS)
    if states is not None:
        columns += list(VELOCITY_KEYS)
    if any(frame.ground_truth is not None for frame in frames):
        columns += list(GT_KEYS)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: repr(row[key]) if key in row else "" for key in columns})
    return path


def read_error_pairs(path: PathLike) -> List[Tuple[EulerPose, EulerPose]]:
    """(true, predicted) pose pairs from an error CSV."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"error file not found: {path}")
    try:
        table = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise StreamFormatError(f"unreadable CSV: {e}", path=str(path)) from None

    missing = [c for c in TRUE_COLUMNS + PRED_COLUMNS if c not in table.columns]
    if missing:
        raise StreamFormatError(f"missing column(s): {', '.join(missing)}", line=1, path=str(path))

    values = table[list(TRUE_COLUMNS + PRED_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    array = values.to_numpy(dtype=float)
    bad = ~np.isfinite(array).all(axis=1)
    if bad.any():
        # header is line 1
        line = int(np.argmax(bad)) + 2
        raise StreamFormatError("non-numeric or non-finite value", line=line, path=str(path))

    return [(EulerPose(*row[:3]), EulerPose(*row[3:])) for row in array]


def write_error_pairs(path: PathLike, pairs: Sequence[Tuple[EulerPose, EulerPose]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = pd.DataFrame(
        [(*truth.as_tuple(), *predicted.as_tuple()) for truth, predicted in pairs],
        columns=list(TRUE_COLUMNS + PRED_COLUMNS),
    )
    table.to_csv(path, index=False)
    return path
