"""The perception boundary: detection records, stream files, synthetic data.

Live object-detector and pose-estimator inference stays outside this
package; the engine consumes per-frame detection bundles from replay
files (``.detstream``) or from the deterministic synthetic generator
below. One JSON record per line keeps the format appendable and
inspectable; the first line is a header carrying the schema version and
the frame geometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from . import pose_features

STREAM_VERSION = 1
DEFAULT_WIDTH = 1280
DEFAULT_HEIGHT = 720
DEFAULT_FPS = 30.0


class StreamParseError(ValueError):
    """Malformed stream record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class ObjectDetection:
    label: str
    score: float
    bbox: tuple[float, float, float, float]  # x, y, w, h in pixels

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError(f"bbox sides must be positive, got {self.bbox}")


@dataclass(frozen=True)
class FrameDetections:
    """Per-frame bundle: labeled boxes plus an optional raw skeleton.

    The skeleton is 18 (x, y, confidence) triples in the raw joint order
    of :mod:`workguide.pose_features`; confidence 0 means missing, x is in
    width-fraction units and y in height-fraction units.
    """

    frame_id: int
    timestamp_ms: int
    objects: tuple = ()
    skeleton: Optional[tuple] = None


@dataclass(frozen=True)
class StreamHeader:
    version: int = STREAM_VERSION
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    fps: float = DEFAULT_FPS

    @property
    def aspect(self) -> float:
        return self.width / self.height


def _frame_to_record(frame: FrameDetections) -> dict:
    record = {
        "frame_id": frame.frame_id,
        "timestamp_ms": frame.timestamp_ms,
        "objects": [
            {"label": o.label, "score": o.score, "bbox": list(o.bbox)}
            for o in frame.objects
        ],
        "skeleton": [list(t) for t in frame.skeleton] if frame.skeleton is not None else None,
    }
    return record


def _frame_from_record(record: dict, line_no: int) -> FrameDetections:
    try:
        objects = tuple(
            ObjectDetection(o["label"], float(o["score"]), tuple(float(v) for v in o["bbox"]))
            for o in record["objects"]
        )
        skeleton = record.get("skeleton")
        if skeleton is not None:
            if len(skeleton) != pose_features.RAW_JOINT_COUNT:
                raise ValueError(f"skeleton must have {pose_features.RAW_JOINT_COUNT} joints")
            skeleton = tuple(tuple(float(v) for v in triple) for triple in skeleton)
        return FrameDetections(
            frame_id=int(record["frame_id"]),
            timestamp_ms=int(record["timestamp_ms"]),
            objects=objects,
            skeleton=skeleton,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamParseError(line_no, f"bad frame record: {exc}") from exc


def write_stream(
    sink: Union[str, Path, IO[str]],
    frames: Iterable[FrameDetections],
    header: StreamHeader = StreamHeader(),
) -> None:
    """Serialize a header line plus one frame record per line."""

    def _write(fh: IO[str]) -> None:
        fh.write(json.dumps({
            "format": "detstream",
            "version": header.version,
            "width": header.width,
            "height": header.height,
            "fps": header.fps,
        }, separators=(",", ":")) + "\n")
        for frame in frames:
            fh.write(json.dumps(_frame_to_record(frame), separators=(",", ":")) + "\n")

    if hasattr(sink, "write"):
        _write(sink)  # type: ignore[arg-type]
    else:
        with open(sink, "w", encoding="ascii") as fh:
            _write(fh)


class ReplayProvider:
    """Iterates a ``.detstream`` source, enforcing monotone frame ids.

    End-of-stream is the normal iterator exhaustion; malformed records
    raise :class:`StreamParseError` naming the offending line.
    """

    def __init__(self, source: Union[str, Path, IO[str]]) -> None:
        if hasattr(source, "read"):
            self._fh: IO[str] = source  # type: ignore[assignment]
            self._owns = False
        else:
            self._fh = open(source, "r", encoding="ascii")
            self._owns = True
        self._line_no = 0
        self._last_frame_id: Optional[int] = None
        self.header = self._read_header()

    def _read_header(self) -> StreamHeader:
        line = self._fh.readline()
        self._line_no += 1
        if not line.strip():
            # An empty file is an empty stream with default geometry.
            return StreamHeader()
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamParseError(self._line_no, f"invalid JSON: {exc}") from exc
        if record.get("format") != "detstream":
            raise StreamParseError(self._line_no, "missing detstream header")
        version = record.get("version")
        if version != STREAM_VERSION:
            raise StreamParseError(self._line_no, f"unsupported stream version {version}")
        return StreamHeader(
            version=version,
            width=int(record["width"]),
            height=int(record["height"]),
            fps=float(record["fps"]),
        )

    def __iter__(self) -> Iterator[FrameDetections]:
        return self

    def __next__(self) -> FrameDetections:
        while True:
            line = self._fh.readline()
            if not line:
                self.close()
                raise StopIteration
            self._line_no += 1
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StreamParseError(self._line_no, f"invalid JSON: {exc}") from exc
            frame = _frame_from_record(record, self._line_no)
            if self._last_frame_id is not None and frame.frame_id <= self._last_frame_id:
                raise StreamParseError(
                    self._line_no,
                    f"frame id {frame.frame_id} not after {self._last_frame_id}",
                )
            self._last_frame_id = frame.frame_id
            return frame

    def close(self) -> None:
        if self._owns and not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "ReplayProvider":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def parse_stream(source: Union[str, Path, IO[str]]) -> tuple[StreamHeader, list[FrameDetections]]:
    """Read a whole stream into memory (round-trip partner of write_stream)."""
    provider = ReplayProvider(source)
    frames = list(provider)
    return provider.header, frames


# --- synthetic generation -------------------------------------------------

ACTION_VOCABULARY = (
    "idle", "drilling", "sawing", "picking", "marking", "measuring", "placing",
)

# Canonical standing pose, raw joint order, (x width-fraction, y height-fraction).
STANDING_TEMPLATE = (
    (0.50, 0.18), (0.50, 0.28),
    (0.44, 0.30), (0.41, 0.42), (0.40, 0.52),
    (0.56, 0.30), (0.59, 0.42), (0.60, 0.52),
    (0.46, 0.55), (0.46, 0.72), (0.46, 0.90),
    (0.54, 0.55), (0.54, 0.72), (0.54, 0.90),
    (0.48, 0.16), (0.52, 0.16), (0.46, 0.17), (0.54, 0.17),
)
TEMPLATE_CONFIDENCE = 0.9

_R_ELBOW, _R_WRIST = 3, 4
_L_ELBOW, _L_WRIST = 6, 7

# Per-action animation: (raw joint, axis, relative amplitude, phase quarter-turns).
# The driven coordinate is template + sign * rel_amp * amplitude * cos(2*pi*f*t + phase),
# so extremes land exactly on samples whenever fps/(2f) is an integer.
_ACTION_MOTIONS: dict[str, tuple[tuple[int, int, float, float], ...]] = {
    "idle": (),
    "sawing": ((_R_WRIST, 0, 1.0, 0.0), (_R_ELBOW, 0, 0.55, 0.0)),
    "drilling": ((_R_WRIST, 1, 1.0, 0.0), (_R_ELBOW, 1, 0.4, 0.0)),
    "picking": ((_R_WRIST, 1, 1.0, 0.0), (_R_ELBOW, 1, 0.7, 0.0), (_R_WRIST, 0, 0.3, 0.0)),
    "marking": ((_R_WRIST, 0, 1.0, 0.0), (_R_WRIST, 1, 1.0, 0.25)),
    "measuring": ((_R_WRIST, 0, 1.0, 0.0), (_L_WRIST, 0, -1.0, 0.0)),
    "placing": ((_R_WRIST, 1, 1.0, 0.0), (_L_WRIST, 1, 1.0, 0.0),
                (_R_ELBOW, 1, 0.6, 0.0), (_L_ELBOW, 1, 0.6, 0.0)),
}

# Canonical amplitude / frequency pairs used when building datasets.
_ACTION_DEFAULTS: dict[str, tuple[float, float]] = {
    "idle": (0.0, 0.0),
    "sawing": (0.2, 1.0),
    "drilling": (0.035, 6.0),
    "picking": (0.16, 0.6),
    "marking": (0.05, 1.4),
    "measuring": (0.12, 0.75),
    "placing": (0.14, 0.5),
}


@dataclass(frozen=True)
class SyntheticMotionSpec:
    action: str
    amplitude: float
    frequency_hz: float
    noise_sigma: float
    duration_frames: int
    seed: int
    fps: float = DEFAULT_FPS

    def __post_init__(self) -> None:
        if self.action not in _ACTION_MOTIONS:
            raise ValueError(
                f"unknown synthetic action {self.action!r}; "
                f"known: {', '.join(sorted(_ACTION_MOTIONS))}"
            )
        if self.duration_frames < pose_features.WINDOW_SIZE:
            raise ValueError(f"duration must be >= {pose_features.WINDOW_SIZE} frames")
        if self.amplitude < 0 or self.noise_sigma < 0 or self.fps <= 0:
            raise ValueError("amplitude and noise must be >= 0, fps > 0")


def default_spec(
    action: str, seed: int, duration_frames: int = 120, noise_sigma: float = 0.003
) -> SyntheticMotionSpec:
    amplitude, frequency = _ACTION_DEFAULTS[action]
    return SyntheticMotionSpec(
        action=action,
        amplitude=amplitude,
        frequency_hz=frequency,
        noise_sigma=noise_sigma,
        duration_frames=duration_frames,
        seed=seed,
    )


def synthetic_skeleton(
    spec: SyntheticMotionSpec, t: int, rng: np.random.Generator
) -> tuple:
    """Skeleton triples for frame ``t`` of the spec's motion pattern."""
    coords = [[x, y] for x, y in STANDING_TEMPLATE]
    for joint, axis, rel_amp, phase in _ACTION_MOTIONS[spec.action]:
        angle = 2.0 * math.pi * (spec.frequency_hz * t / spec.fps + phase)
        coords[joint][axis] += rel_amp * spec.amplitude * math.cos(angle)
    if spec.noise_sigma > 0:
        noise = rng.normal(0.0, spec.noise_sigma, size=(len(coords), 2))
        for i in range(len(coords)):
            coords[i][0] += noise[i, 0]
            coords[i][1] += noise[i, 1]
    return tuple((c[0], c[1], TEMPLATE_CONFIDENCE) for c in coords)


def generate_synthetic(
    spec: SyntheticMotionSpec,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    objects: Sequence[ObjectDetection] = (),
    start_frame: int = 0,
) -> tuple[StreamHeader, list[FrameDetections]]:
    """Deterministic skeleton-only detection stream for one action."""
    rng = np.random.default_rng(spec.seed)
    header = StreamHeader(width=width, height=height, fps=spec.fps)
    frames = []
    for t in range(spec.duration_frames):
        frame_id = start_frame + t
        frames.append(FrameDetections(
            frame_id=frame_id,
            timestamp_ms=round(frame_id * 1000.0 / spec.fps),
            objects=tuple(objects),
            skeleton=synthetic_skeleton(spec, t, rng),
        ))
    return header, frames


class SyntheticProvider:
    """Iterator facade over generate_synthetic, mirroring ReplayProvider."""

    def __init__(self, spec: SyntheticMotionSpec, width: int = DEFAULT_WIDTH,
                 height: int = DEFAULT_HEIGHT) -> None:
        self.header, self._frames = generate_synthetic(spec, width, height)
        self._it = iter(self._frames)

    def __iter__(self) -> Iterator[FrameDetections]:
        return self._it

    def __next__(self) -> FrameDetections:
        return next(self._it)

    def close(self) -> None:
        pass
