from __future__ import annotations

import math

import numpy as np
import pytest

from workguide import pose_features as pf

from oracles import naive_feature_vector


def make_skeleton(coords, frame_id=0, person_id=0, confidence=0.9):
    """13-joint skeleton from (x, y) pairs; None marks a missing joint."""
    joints = tuple(
        None if pair is None else pf.Keypoint(pair[0], pair[1], confidence)
        for pair in coords
    )
    return pf.Skeleton(joints=joints, frame_id=frame_id, person_id=person_id)


def full_body_coords(offset=0.0):
    """A plausible standing pose, all 13 joints present."""
    base = [
        (0.5, 0.2),
        (0.44, 0.22), (0.41, 0.34), (0.40, 0.44),
        (0.56, 0.22), (0.59, 0.34), (0.60, 0.44),
        (0.46, 0.55), (0.46, 0.72), (0.46, 0.90),
        (0.54, 0.55), (0.54, 0.72), (0.54, 0.90),
    ]
    return [(x + offset, y + offset) for x, y in base]


def raw18(present=None, x=0.5, y=0.5, confidence=0.9):
    """18 raw joint triples, optionally masking out some indices."""
    triples = []
    for i in range(18):
        c = confidence if (present is None or i in present) else 0.0
        triples.append((x + i * 0.01, y + i * 0.005, c))
    return triples


# --- scale_coordinates ------------------------------------------------------

def test_scale_example_640_480():
    skel = make_skeleton([(0.5, 0.5)] + full_body_coords()[1:])
    scaled = pf.scale_coordinates(skel, 640 / 480)
    assert scaled.joints[0].x == pytest.approx(0.6667, abs=1e-4)
    assert scaled.joints[0].y == 0.5


def test_scale_identity_aspect():
    skel = make_skeleton(full_body_coords())
    scaled = pf.scale_coordinates(skel, 1.0)
    assert all(
        a.x == b.x and a.y == b.y for a, b in zip(scaled.joints, skel.joints)
    )


def test_scale_quarter_to_half():
    skel = make_skeleton([(0.25, 0.1)] + full_body_coords()[1:])
    scaled = pf.scale_coordinates(skel, 2.0)
    assert scaled.joints[0].x == pytest.approx(0.5)
    assert scaled.joints[0].y == pytest.approx(0.1)


def test_scale_rejects_bad_aspect():
    skel = make_skeleton(full_body_coords())
    with pytest.raises(ValueError):
        pf.scale_coordinates(skel, 0.0)
    with pytest.raises(ValueError):
        pf.scale_coordinates(skel, -1.5)


# --- remove_head_joints -----------------------------------------------------

def test_remove_head_counts():
    raw = pf.skeleton_from_triples(raw18(), frame_id=3)
    trimmed = pf.remove_head_joints(raw)
    assert len(trimmed.joints) == 13
    assert trimmed.present_count == 13
    assert trimmed.frame_id == 3


def test_remove_head_nose_irrelevant():
    with_nose = pf.remove_head_joints(pf.skeleton_from_triples(raw18(), 0))
    without_nose = pf.remove_head_joints(
        pf.skeleton_from_triples(raw18(present=set(range(1, 18))), 0)
    )
    assert with_nose.joints == without_nose.joints


def test_remove_head_index_mapping():
    # Raw neck=1, r_hip=8, l_hip=11 land at body indices 0, 7, 10.
    raw = pf.skeleton_from_triples(raw18(present={1, 8, 11}), 0)
    trimmed = pf.remove_head_joints(raw)
    assert trimmed.present_count == 3
    present_indices = [i for i, j in enumerate(trimmed.joints) if j is not None]
    assert present_indices == [pf.NECK, pf.R_HIP, pf.L_HIP]
    # Coordinates carried over from the matching raw joints.
    assert trimmed.joints[pf.NECK].x == raw.joints[1].x
    assert trimmed.joints[pf.R_HIP].x == raw.joints[8].x
    assert trimmed.joints[pf.L_HIP].x == raw.joints[11].x


def test_remove_head_rejects_wrong_length():
    skel = make_skeleton(full_body_coords())
    with pytest.raises(ValueError):
        pf.remove_head_joints(skel)


# --- pad_missing_joints -----------------------------------------------------

def test_pad_noop_when_complete():
    skel = make_skeleton(full_body_coords())
    padded = pf.pad_missing_joints(skel, history=[])
    assert padded is not None
    assert padded.joints == skel.joints


def test_pad_fills_from_two_frames_back():
    wrist = 6  # l_wrist
    # Two frames ago the wrist was seen at (0.4, 0.7); one frame ago and now
    # it is missing, so the padder must scan past the fresher frame.
    seen = list(full_body_coords())
    seen[wrist] = (0.4, 0.7)
    two_back = make_skeleton(seen, frame_id=1, confidence=0.7)
    gap = list(full_body_coords())
    gap[wrist] = None
    one_back = make_skeleton(gap, frame_id=2)
    current = make_skeleton(gap, frame_id=3)

    padded = pf.pad_missing_joints(current, history=[one_back, two_back])
    joint = padded.joints[wrist]
    assert (joint.x, joint.y) == (0.4, 0.7)
    assert joint.padded
    assert joint.confidence == 0.7


def test_pad_missing_hip_no_history_invalid():
    coords = full_body_coords()
    coords[pf.R_HIP] = None
    current = make_skeleton(coords, frame_id=0)
    assert pf.pad_missing_joints(current, history=[]) is None


def test_tracker_matches_pure_function():
    tracker = pf.PoseTracker()
    coords = full_body_coords()
    first = make_skeleton(coords, frame_id=0)
    tracker.process(first)

    missing = list(coords)
    missing[3] = None  # r_wrist
    second = make_skeleton(missing, frame_id=1)
    from_tracker = tracker.process(second)
    from_function = pf.pad_missing_joints(second, history=[first])
    assert from_tracker.joints == from_function.joints


# --- body_height / normalize ------------------------------------------------

def test_body_height_worked_example():
    coords = full_body_coords()
    coords[pf.NECK] = (0.5, 0.2)
    coords[pf.R_HIP] = (0.45, 0.6)
    coords[pf.L_HIP] = (0.55, 0.6)
    assert pf.body_height(make_skeleton(coords)) == pytest.approx(0.4, abs=1e-12)


def test_body_height_sqrt_128():
    coords = full_body_coords()
    coords[pf.NECK] = (0.0, 0.0)
    coords[pf.R_HIP] = (0.6, 0.8)
    coords[pf.L_HIP] = (1.0, 0.8)
    assert pf.body_height(make_skeleton(coords)) == pytest.approx(
        math.sqrt(1.28), abs=1e-9
    )


def test_body_height_degenerate():
    coords = full_body_coords()
    coords[pf.NECK] = (0.5, 0.6)
    coords[pf.R_HIP] = (0.45, 0.6)
    coords[pf.L_HIP] = (0.55, 0.6)
    with pytest.raises(pf.DegenerateSkeletonError):
        pf.body_height(make_skeleton(coords))


def test_body_height_missing_joint():
    coords = full_body_coords()
    coords[pf.NECK] = None
    with pytest.raises(pf.MissingJointError):
        pf.body_height(make_skeleton(coords))


def test_normalize_identity_and_division():
    skel = make_skeleton(full_body_coords())
    same = pf.normalize(skel, 1.0)
    assert all(a.x == b.x for a, b in zip(same.joints, skel.joints))

    coords = full_body_coords()
    coords[3] = (0.8, 0.8)
    halved = pf.normalize(make_skeleton(coords), 0.4)
    assert halved.joints[3].x == pytest.approx(2.0)
    assert halved.joints[3].y == pytest.approx(2.0)

    coords[3] = (1.0, 0.5)
    scaled = pf.normalize(make_skeleton(coords), 2.0)
    assert scaled.joints[3].x == pytest.approx(0.5)
    assert scaled.joints[3].y == pytest.approx(0.25)


def test_normalize_degenerate_height():
    skel = make_skeleton(full_body_coords())
    with pytest.raises(pf.DegenerateSkeletonError):
        pf.normalize(skel, 1e-9)


# --- windows, velocities, features -------------------------------------------

def window_from_coord_frames(frames):
    return pf.FeatureWindow(frames=tuple(
        make_skeleton(coords, frame_id=i) for i, coords in enumerate(frames)
    ))


def test_window_validation():
    skels = [make_skeleton(full_body_coords(), frame_id=i) for i in range(5)]
    pf.FeatureWindow(frames=tuple(skels))
    with pytest.raises(ValueError):
        pf.FeatureWindow(frames=tuple(skels[:4]))
    skels[2] = make_skeleton(full_body_coords(), frame_id=7)
    with pytest.raises(ValueError):
        pf.FeatureWindow(frames=tuple(skels))


def test_velocities_static_zero():
    window = window_from_coord_frames([full_body_coords()] * 5)
    assert np.all(pf.joint_velocities(window) == 0.0)


def test_velocities_constant_advance():
    frames = []
    for t in range(5):
        coords = full_body_coords()
        coords[3] = (coords[3][0] + 0.1 * t, coords[3][1])
        frames.append(coords)
    velocities = pf.joint_velocities(window_from_coord_frames(frames))
    assert velocities[:, 3, 0] == pytest.approx([0.1] * 4)
    assert np.all(velocities[:, 3, 1] == 0.0)


def test_velocities_zero_after_padding_point():
    # A joint padded from frame 2 on repeats its last value -> zero velocity.
    wrist = 6
    tracker = pf.PoseTracker()
    padded_frames = []
    for t in range(5):
        coords = list(full_body_coords())
        coords[wrist] = (0.6 + 0.05 * t, 0.44) if t < 2 else None
        padded_frames.append(tracker.process(make_skeleton(coords, frame_id=t)))
    velocities = pf.joint_velocities(pf.FeatureWindow(frames=tuple(padded_frames)))
    assert velocities[0, wrist, 0] == pytest.approx(0.05)
    assert np.all(velocities[1:, wrist, :] == 0.0)


def test_feature_vector_dimension_and_zero_tail():
    window = window_from_coord_frames([full_body_coords()] * 5)
    vector = pf.build_feature_vector(window)
    assert vector.shape == (234,)
    assert np.all(vector[130:] == 0.0)


def test_feature_vector_straight_line_oracle():
    frames = []
    for t in range(5):
        coords = [(x + 0.01 * t, y - 0.02 * t) for x, y in full_body_coords()]
        frames.append(coords)
    normalized = []
    for i, coords in enumerate(frames):
        skel = make_skeleton(coords, frame_id=i)
        normalized.append(pf.normalize(skel, pf.body_height(skel)))
    vector = pf.build_feature_vector(pf.FeatureWindow(frames=tuple(normalized)))
    expected = naive_feature_vector(frames)
    assert np.max(np.abs(vector - np.array(expected))) < 1e-12


def test_feature_vector_deterministic():
    window = window_from_coord_frames(
        [[(x + 0.003 * t, y) for x, y in full_body_coords()] for t in range(5)]
    )
    a = pf.build_feature_vector(window)
    b = pf.build_feature_vector(window)
    assert np.array_equal(a, b)


def random_window_coords(rng):
    """5 frames of 13 joints with a sane torso and consistent motion."""
    frames = []
    base = [(rng.uniform(0.1, 1.6), rng.uniform(0.1, 0.9)) for _ in range(13)]
    # Guarantee a non-degenerate torso.
    base[pf.NECK] = (rng.uniform(0.6, 1.0), rng.uniform(0.1, 0.3))
    base[pf.R_HIP] = (rng.uniform(0.5, 0.9), rng.uniform(0.55, 0.7))
    base[pf.L_HIP] = (rng.uniform(0.9, 1.3), rng.uniform(0.55, 0.7))
    drift = [(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)) for _ in range(13)]
    for t in range(5):
        frames.append([
            (x + dx * t, y + dy * t) for (x, y), (dx, dy) in zip(base, drift)
        ])
    return frames


def pipeline_features(frames):
    normalized = []
    for i, coords in enumerate(frames):
        skel = make_skeleton(coords, frame_id=i)
        normalized.append(pf.normalize(skel, pf.body_height(skel)))
    return pf.build_feature_vector(pf.FeatureWindow(frames=tuple(normalized)))


def test_hundred_random_windows_match_oracle():
    rng = np.random.default_rng(20260810)
    worst = 0.0
    for _ in range(100):
        frames = random_window_coords(rng)
        vector = pipeline_features(frames)
        expected = np.array(naive_feature_vector(frames))
        worst = max(worst, float(np.max(np.abs(vector - expected))))
    assert worst < 1e-9


def test_translation_leaves_velocities_unchanged():
    # Rigid motion keeps the body height constant, so differencing the
    # per-frame-normalized positions cancels a whole-window translation
    # exactly, while each position feature shifts by (dx/H, dy/H).
    base = full_body_coords()
    step = (0.015, -0.01)
    frames = [
        [(x + step[0] * t, y + step[1] * t) for x, y in base] for t in range(5)
    ]
    dx, dy = 0.31, -0.12
    shifted = [[(x + dx, y + dy) for x, y in frame] for frame in frames]
    original = pipeline_features(frames)
    moved = pipeline_features(shifted)
    assert np.max(np.abs(original[130:] - moved[130:])) < 1e-12

    height = pf.body_height(make_skeleton(base))
    expected_shift = np.tile([dx / height, dy / height], 13 * 5)
    assert np.max(np.abs((moved[:130] - original[:130]) - expected_shift)) < 1e-9


def test_uniform_scaling_invariance():
    rng = np.random.default_rng(8)
    for scale in (0.5, 2.0, 7.3):
        frames = random_window_coords(rng)
        scaled = [[(x * scale, y * scale) for x, y in frame] for frame in frames]
        original = pipeline_features(frames)
        rescaled = pipeline_features(scaled)
        denom = np.maximum(np.abs(original), 1e-12)
        assert np.max(np.abs(original - rescaled) / denom) < 1e-9


# --- tracker / window builder / stream integration ---------------------------

def test_window_builder_resets_on_gap():
    builder = pf.WindowBuilder()
    for i in range(4):
        assert builder.push(make_skeleton(full_body_coords(), frame_id=i)) is None
    # Gap: frame 5 missing, window must restart.
    assert builder.push(make_skeleton(full_body_coords(), frame_id=6)) is None
    for i in range(7, 10):
        assert builder.push(make_skeleton(full_body_coords(), frame_id=i)) is None
    window = builder.push(make_skeleton(full_body_coords(), frame_id=10))
    assert window is not None
    assert window.frames[0].frame_id == 6


def test_select_skeleton_highest_confidence():
    weak = make_skeleton(full_body_coords(), confidence=0.4)
    strong = make_skeleton(full_body_coords(), confidence=0.8)
    assert pf.select_skeleton([weak, strong]) is strong
    assert pf.select_skeleton([]) is None


def test_iter_feature_windows_skips_invalid_frames():
    good = raw18()
    bad = raw18(present={0, 2, 3})  # no neck, no hips anywhere yet
    stream = [(0, bad), (1, good), (2, good), (3, good), (4, good), (5, good), (6, None)]
    windows = list(pf.iter_feature_windows(stream, frame_aspect=16 / 9))
    assert len(windows) == 1
    assert windows[0].frames[0].frame_id == 1
