"""Majority-vote label smoothing over a sliding frame window.

Per-frame classifier output and per-object presence both flicker; taking
the most frequent label of the last N frames (default 10) as the truth
stabilizes them. Ties go to the most recently pushed of the tied labels,
which favors responsiveness after a genuine change.
"""

from __future__ import annotations

from collections import deque
from typing import Hashable, Optional

DEFAULT_WINDOW = 10


class FrameOrderError(ValueError):
    """Pushed frame ids must be strictly increasing."""


class MajorityWindow:
    """Ring of the most recent labels; reports the modal one."""

    def __init__(self, capacity: int = DEFAULT_WINDOW) -> None:
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, label: Hashable, frame_id: int) -> Hashable:
        """Add a label and return the smoothed (modal) label.

        A partially filled window votes over whatever it holds, so the
        first push already produces an answer.
        """
        if self._entries and frame_id <= self._entries[-1][0]:
            raise FrameOrderError(
                f"frame id {frame_id} not after {self._entries[-1][0]}"
            )
        self._entries.append((frame_id, label))
        return self.current()

    def current(self) -> Optional[Hashable]:
        """Modal label of the window, most-recent-wins on ties."""
        if not self._entries:
            return None
        counts: dict = {}
        for _, label in self._entries:
            counts[label] = counts.get(label, 0) + 1
        best = max(counts.values())
        for _, label in reversed(self._entries):
            if counts[label] == best:
                return label
        raise AssertionError("unreachable")

    def reset(self) -> None:
        self._entries.clear()
