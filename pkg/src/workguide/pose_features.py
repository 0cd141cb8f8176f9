"""Skeleton preprocessing and joint-velocity features.

Raw 18-joint skeletons arrive with x in width-fraction units and y in
height-fraction units. The pipeline scales x by the frame aspect ratio so
both axes share one unit, drops the five head joints, pads joints missing
in the current frame from the most recent sighting, normalizes every
coordinate by the neck-to-hip-midpoint body height, and finally
differences a 5-frame window into joint velocities. Positions of all five
frames plus the four velocity steps are concatenated into the fixed
234-dimensional classifier input.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

# 18-joint raw convention used by the detection stream (x width-fraction,
# y height-fraction, confidence 0 meaning missing).
RAW_JOINT_NAMES = (
    "nose", "neck",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle",
    "l_hip", "l_knee", "l_ankle",
    "r_eye", "l_eye", "r_ear", "l_ear",
)
RAW_JOINT_COUNT = 18

# Head joints carry no signal for manual work; arms and torso do.
HEAD_JOINT_INDICES = (0, 14, 15, 16, 17)
BODY_JOINT_NAMES = tuple(
    name for i, name in enumerate(RAW_JOINT_NAMES) if i not in HEAD_JOINT_INDICES
)
JOINT_COUNT = len(BODY_JOINT_NAMES)  # 13

NECK = BODY_JOINT_NAMES.index("neck")
R_HIP = BODY_JOINT_NAMES.index("r_hip")
L_HIP = BODY_JOINT_NAMES.index("l_hip")

WINDOW_SIZE = 5
VELOCITY_STEPS = WINDOW_SIZE - 1
FEATURE_DIM = JOINT_COUNT * 2 * WINDOW_SIZE + JOINT_COUNT * 2 * VELOCITY_STEPS  # 234

# Body heights below this (in normalized units) are treated as degenerate.
H_EPSILON = 1e-6


class DegenerateSkeletonError(ValueError):
    """Body height collapsed below the usable threshold."""


class MissingJointError(ValueError):
    """A joint required by the requested computation is absent."""


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float
    padded: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"keypoint coordinates must be finite, got ({self.x}, {self.y})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"keypoint confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class Skeleton:
    """Fixed-index list of optional keypoints for one person in one frame."""

    joints: tuple
    frame_id: int
    person_id: int = 0

    def joint(self, index: int) -> Optional[Keypoint]:
        return self.joints[index]

    @property
    def present_count(self) -> int:
        return sum(1 for j in self.joints if j is not None)

    def is_measurable(self) -> bool:
        """True when the neck and both hips are available (body height exists)."""
        if len(self.joints) != JOINT_COUNT:
            return False
        return all(self.joints[i] is not None for i in (NECK, R_HIP, L_HIP))

    def mean_confidence(self) -> float:
        present = [j.confidence for j in self.joints if j is not None]
        return sum(present) / len(present) if present else 0.0


def skeleton_from_triples(
    triples: Sequence[Sequence[float]], frame_id: int, person_id: int = 0
) -> Skeleton:
    """Build a raw 18-joint Skeleton from (x, y, confidence) triples.

    Confidence 0 marks a missing joint (the stream-format convention).
    """
    if len(triples) != RAW_JOINT_COUNT:
        raise ValueError(f"expected {RAW_JOINT_COUNT} joint triples, got {len(triples)}")
    joints = tuple(
        Keypoint(float(x), float(y), float(c)) if c > 0 else None for x, y, c in triples
    )
    return Skeleton(joints=joints, frame_id=frame_id, person_id=person_id)


def select_skeleton(candidates: Sequence[Skeleton]) -> Optional[Skeleton]:
    """Pick the skeleton with the highest mean keypoint confidence.

    Single-worker stations see one person; when a provider reports several,
    the most confidently detected one is kept.
    """
    best = None
    for candidate in candidates:
        if best is None or candidate.mean_confidence() > best.mean_confidence():
            best = candidate
    return best


def scale_coordinates(skeleton: Skeleton, frame_aspect: float) -> Skeleton:
    """Rescale x from width-fraction to image-height units (x * w/h)."""
    if frame_aspect <= 0:
        raise ValueError(f"frame aspect ratio must be positive, got {frame_aspect}")
    joints = tuple(
        replace(j, x=j.x * frame_aspect) if j is not None else None for j in skeleton.joints
    )
    return replace(skeleton, joints=joints)


def remove_head_joints(skeleton: Skeleton) -> Skeleton:
    """Drop nose, eyes and ears, keeping the 13 body joints in raw order."""
    if len(skeleton.joints) != RAW_JOINT_COUNT:
        raise ValueError(
            f"expected an {RAW_JOINT_COUNT}-joint skeleton, got {len(skeleton.joints)} joints"
        )
    joints = tuple(
        j for i, j in enumerate(skeleton.joints) if i not in HEAD_JOINT_INDICES
    )
    return replace(skeleton, joints=joints)


def _fill_missing(skeleton: Skeleton, last_seen: dict) -> Optional[Skeleton]:
    """Shared padding core: fill absent joints from ``last_seen``.

    Returns None (frame invalid) when the neck or either hip is unavailable
    even after padding, since body height cannot be evaluated without them.
    """
    joints = list(skeleton.joints)
    for i, joint in enumerate(joints):
        if joint is None and i in last_seen:
            source = last_seen[i]
            joints[i] = Keypoint(source.x, source.y, source.confidence, padded=True)
    for required in (NECK, R_HIP, L_HIP):
        if joints[required] is None:
            return None
    return replace(skeleton, joints=tuple(joints))


def pad_missing_joints(
    current: Skeleton, history: Sequence[Skeleton]
) -> Optional[Skeleton]:
    """Fill missing joints from the most recent frame where each was seen.

    ``history`` is ordered most-recent-first. Padded keypoints copy the
    source coordinates and confidence and carry the padded flag. Returns
    None when the neck or a hip has no value anywhere.
    """
    last_seen: dict = {}
    for past in history:
        for i, joint in enumerate(past.joints):
            if joint is not None and i not in last_seen:
                last_seen[i] = joint
    return _fill_missing(current, last_seen)


def body_height(skeleton: Skeleton) -> float:
    """Distance from the neck to the midpoint of the two hips."""
    neck = skeleton.joints[NECK]
    r_hip = skeleton.joints[R_HIP]
    l_hip = skeleton.joints[L_HIP]
    if neck is None or r_hip is None or l_hip is None:
        raise MissingJointError("body height needs the neck and both hips")
    mid_x = (l_hip.x + r_hip.x) / 2.0
    mid_y = (l_hip.y + r_hip.y) / 2.0
    height = math.hypot(neck.x - mid_x, neck.y - mid_y)
    if height <= H_EPSILON:
        raise DegenerateSkeletonError(f"body height {height} below {H_EPSILON}")
    return height


def normalize(skeleton: Skeleton, height: float) -> Skeleton:
    """Divide every present coordinate by the body height."""
    if height <= H_EPSILON:
        raise DegenerateSkeletonError(f"cannot normalize by height {height}")
    joints = tuple(
        replace(j, x=j.x / height, y=j.y / height) if j is not None else None
        for j in skeleton.joints
    )
    return replace(skeleton, joints=joints)


@dataclass(frozen=True)
class FeatureWindow:
    """Exactly five consecutive preprocessed skeletons of one person."""

    frames: tuple

    def __post_init__(self) -> None:
        if len(self.frames) != WINDOW_SIZE:
            raise ValueError(f"feature window needs {WINDOW_SIZE} frames, got {len(self.frames)}")
        first = self.frames[0]
        for prev, cur in zip(self.frames, self.frames[1:]):
            if cur.frame_id != prev.frame_id + 1:
                raise ValueError(
                    f"window frame ids must increase by 1: {prev.frame_id} -> {cur.frame_id}"
                )
            if cur.person_id != first.person_id:
                raise ValueError("window mixes person ids")


def _positions(skeleton: Skeleton) -> tuple[np.ndarray, np.ndarray]:
    """(13, 2) coordinate array plus presence mask; absent joints read 0."""
    coords = np.zeros((JOINT_COUNT, 2), dtype=np.float64)
    mask = np.zeros(JOINT_COUNT, dtype=bool)
    for i, joint in enumerate(skeleton.joints):
        if joint is not None:
            coords[i, 0] = joint.x
            coords[i, 1] = joint.y
            mask[i] = True
    return coords, mask


def joint_velocities(window: FeatureWindow) -> np.ndarray:
    """Frame-to-frame coordinate differences, shape (4, 13, 2).

    A velocity entry is nonzero only when the joint is present in both
    frames of the step; padded joints repeat their source value, so their
    velocity is naturally 0 from the padding point on.
    """
    coords = []
    masks = []
    for frame in window.frames:
        c, m = _positions(frame)
        coords.append(c)
        masks.append(m)
    velocities = np.zeros((VELOCITY_STEPS, JOINT_COUNT, 2), dtype=np.float64)
    for k in range(1, WINDOW_SIZE):
        both = masks[k] & masks[k - 1]
        velocities[k - 1][both] = coords[k][both] - coords[k - 1][both]
    return velocities


def build_feature_vector(window: FeatureWindow) -> np.ndarray:
    """Concatenate positions and velocities into the fixed 234-vector.

    Layout: five frames of normalized positions (frame outer, joint inner,
    x before y), then four velocity steps in the same joint/coordinate
    order. Absent joints contribute zeros.
    """
    parts = [_positions(frame)[0].ravel() for frame in window.frames]
    parts.append(joint_velocities(window).ravel())
    vector = np.concatenate(parts)
    assert vector.shape == (FEATURE_DIM,)
    return vector


class PoseTracker:
    """Per-person padding state: remembers the last sighting of each joint.

    Owned by exactly one pipeline stage; equivalent to scanning an
    unbounded most-recent-first history, in O(1) memory.
    """

    def __init__(self) -> None:
        self._last_seen: dict = {}

    def reset(self) -> None:
        self._last_seen.clear()

    def process(self, skeleton: Skeleton) -> Optional[Skeleton]:
        padded = _fill_missing(skeleton, self._last_seen)
        for i, joint in enumerate(skeleton.joints):
            if joint is not None:
                self._last_seen[i] = joint
        return padded


class WindowBuilder:
    """Accumulates consecutive preprocessed frames into sliding windows."""

    def __init__(self) -> None:
        self._frames: deque = deque(maxlen=WINDOW_SIZE)

    def reset(self) -> None:
        self._frames.clear()

    def push(self, skeleton: Skeleton) -> Optional[FeatureWindow]:
        if self._frames and skeleton.frame_id != self._frames[-1].frame_id + 1:
            # A gap (skipped/invalid frame) breaks consecutiveness; start over.
            self._frames.clear()
        self._frames.append(skeleton)
        if len(self._frames) == WINDOW_SIZE:
            return FeatureWindow(frames=tuple(self._frames))
        return None


def preprocess_raw_skeleton(
    raw: Skeleton, frame_aspect: float, tracker: PoseTracker
) -> Optional[Skeleton]:
    """Scale, trim, pad and normalize one raw 18-joint skeleton.

    Returns the normalized 13-joint skeleton, or None when the frame is
    unusable (missing torso anchors or a degenerate body height).
    """
    scaled = scale_coordinates(raw, frame_aspect)
    trimmed = remove_head_joints(scaled)
    padded = tracker.process(trimmed)
    if padded is None:
        return None
    try:
        height = body_height(padded)
    except (MissingJointError, DegenerateSkeletonError):
        return None
    return normalize(padded, height)


def iter_feature_windows(
    skeleton_stream: Iterable[tuple[int, Optional[Sequence[Sequence[float]]]]],
    frame_aspect: float,
) -> Iterator[FeatureWindow]:
    """Run the full preprocessing chain over (frame_id, raw triples) pairs.

    Frames without a skeleton or failing preprocessing are skipped; windows
    only span runs of consecutive valid frames.
    """
    tracker = PoseTracker()
    builder = WindowBuilder()
    for frame_id, triples in skeleton_stream:
        if triples is None:
            continue
        raw = skeleton_from_triples(triples, frame_id)
        normalized = preprocess_raw_skeleton(raw, frame_aspect, tracker)
        if normalized is None:
            continue
        window = builder.push(normalized)
        if window is not None:
            yield window
