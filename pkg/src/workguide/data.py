"""Dataset assembly: detection streams to labeled feature matrices.

Training data lives in a directory with one subdirectory per action
label, each holding ``.detstream`` files. Every valid 5-frame window in
a stream becomes one labeled feature vector; held-out evaluation splits
whole streams, not windows, so test windows never overlap training ones.
"""

from __future__ import annotations

import zlib
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from . import detection, pose_features


def stream_features(
    header: detection.StreamHeader, frames: Sequence[detection.FrameDetections]
) -> np.ndarray:
    """(n, 234) feature matrix of all valid windows in one stream."""
    stream = ((f.frame_id, f.skeleton) for f in frames)
    vectors = [
        pose_features.build_feature_vector(w)
        for w in pose_features.iter_feature_windows(stream, header.aspect)
    ]
    if not vectors:
        return np.zeros((0, pose_features.FEATURE_DIM))
    return np.stack(vectors)


def load_stream_file(path: Union[str, Path]) -> np.ndarray:
    header, frames = detection.parse_stream(path)
    return stream_features(header, frames)


def load_dataset_dir(root: Union[str, Path]) -> list[tuple[str, Path, np.ndarray]]:
    """All (label, path, features) entries under a label-per-subdir tree."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    entries = []
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for stream_path in sorted(label_dir.glob("*.detstream")):
            entries.append((label_dir.name, stream_path, load_stream_file(stream_path)))
    if not entries:
        raise ValueError(f"no .detstream files under {root}")
    return entries


def assemble(entries: Sequence[tuple[str, Path, np.ndarray]]) -> tuple[np.ndarray, list[str]]:
    features = np.vstack([e[2] for e in entries])
    labels: list[str] = []
    for label, _, x in entries:
        labels.extend([label] * x.shape[0])
    return features, labels


def split_streams(
    entries: Sequence[tuple[str, Path, np.ndarray]], holdout_fraction: float, seed: int
) -> tuple[list, list]:
    """Per-label stream-level split; every label keeps >= 1 training stream."""
    if not 0.0 <= holdout_fraction < 1.0:
        raise ValueError("holdout fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    by_label: dict[str, list] = {}
    for entry in entries:
        by_label.setdefault(entry[0], []).append(entry)
    train, held = [], []
    for label in sorted(by_label):
        group = by_label[label]
        order = rng.permutation(len(group))
        n_held = min(int(round(len(group) * holdout_fraction)), len(group) - 1)
        held_idx = set(order[:n_held].tolist())
        for i, entry in enumerate(group):
            (held if i in held_idx else train).append(entry)
    return train, held


def write_training_streams(
    root: Union[str, Path],
    actions: Sequence[str],
    streams_per_action: int,
    duration_frames: int = 90,
    noise_sigma: float = 0.003,
    base_seed: int = 0,
) -> None:
    """Generate a jittered synthetic dataset tree under ``root``."""
    root = Path(root)
    for action in actions:
        action_dir = root / action
        action_dir.mkdir(parents=True, exist_ok=True)
        for i in range(streams_per_action):
            seed = base_seed + i
            canonical = detection.default_spec(
                action, seed=seed, duration_frames=duration_frames,
                noise_sigma=noise_sigma,
            )
            jitter = np.random.default_rng(seed * 7919 + zlib.crc32(action.encode()))
            spec = detection.SyntheticMotionSpec(
                action=action,
                amplitude=canonical.amplitude * float(jitter.uniform(0.8, 1.2)),
                frequency_hz=canonical.frequency_hz * float(jitter.uniform(0.85, 1.15)),
                noise_sigma=noise_sigma,
                duration_frames=duration_frames,
                seed=seed,
            )
            header, frames = detection.generate_synthetic(spec)
            detection.write_stream(action_dir / f"{action}_{i:02d}.detstream", frames, header)
