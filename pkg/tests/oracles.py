"""Independent brute-force oracles the implementation is checked against.

Everything here is deliberately written with plain Python loops and no
shared helpers from the package, so a bug in the production path cannot
hide in its own verifier.
"""

from __future__ import annotations

import math

# 13-joint body order: neck, r_shoulder, r_elbow, r_wrist, l_shoulder,
# l_elbow, l_wrist, r_hip, r_knee, r_ankle, l_hip, l_knee, l_ankle.
NECK_I = 0
R_HIP_I = 7
L_HIP_I = 10


def naive_feature_vector(window):
    """Features for 5 frames of 13 (x, y) pairs (None = missing joint).

    Recomputes body height, normalization, velocities and the layout
    (frame-major positions, then step-major velocities) from scratch.
    """
    assert len(window) == 5
    normalized = []
    for frame in window:
        neck = frame[NECK_I]
        r_hip = frame[R_HIP_I]
        l_hip = frame[L_HIP_I]
        assert neck is not None and r_hip is not None and l_hip is not None
        mid_x = (l_hip[0] + r_hip[0]) / 2.0
        mid_y = (l_hip[1] + r_hip[1]) / 2.0
        height = math.sqrt((neck[0] - mid_x) ** 2 + (neck[1] - mid_y) ** 2)
        assert height > 1e-6
        normalized.append([
            (p[0] / height, p[1] / height) if p is not None else None for p in frame
        ])

    values = []
    for frame in normalized:
        for joint in frame:
            if joint is None:
                values.extend((0.0, 0.0))
            else:
                values.extend(joint)
    for k in range(1, 5):
        for j in range(13):
            before = normalized[k - 1][j]
            after = normalized[k][j]
            if before is None or after is None:
                values.extend((0.0, 0.0))
            else:
                values.append(after[0] - before[0])
                values.append(after[1] - before[1])
    return values


def brute_force_mode(labels):
    """Mode of a label sequence with most-recent-wins tie-breaking."""
    best_count = 0
    best_label = None
    best_recency = -1
    for candidate in set(labels):
        count = sum(1 for l in labels if l == candidate)
        recency = max(i for i, l in enumerate(labels) if l == candidate)
        if count > best_count or (count == best_count and recency > best_recency):
            best_count = count
            best_label = candidate
            best_recency = recency
    return best_label


def naive_anova_f(groups):
    """F statistic from the definition, no shared code with the package."""
    all_values = [v for g in groups for v in g]
    n = len(all_values)
    k = len(groups)
    grand = sum(all_values) / n
    ss_between = 0.0
    for g in groups:
        mean = sum(g) / len(g)
        ss_between += len(g) * (mean - grand) ** 2
    ss_within = 0.0
    for g in groups:
        mean = sum(g) / len(g)
        for v in g:
            ss_within += (v - mean) ** 2
    return (ss_between / (k - 1)) / (ss_within / (n - k))
