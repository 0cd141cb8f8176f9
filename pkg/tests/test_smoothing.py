from __future__ import annotations

import pytest

from workguide.smoothing import FrameOrderError, MajorityWindow

from oracles import brute_force_mode


def push_all(labels, capacity=10):
    window = MajorityWindow(capacity)
    result = None
    for i, label in enumerate(labels):
        result = window.push(label, i)
    return result


def test_unanimous_window():
    assert push_all(["drilling"] * 10) == "drilling"


def test_majority_six_four():
    assert push_all(["sawing"] * 6 + ["idle"] * 4) == "sawing"
    assert push_all(["idle"] * 4 + ["sawing"] * 6) == "sawing"


def test_tie_goes_to_most_recent():
    assert push_all(["idle"] * 5 + ["sawing"] * 5) == "sawing"
    assert push_all(["sawing"] * 5 + ["idle"] * 5) == "idle"


def test_partial_window_votes_immediately():
    window = MajorityWindow(10)
    assert window.push("idle", 0) == "idle"
    assert window.push("idle", 1) == "idle"
    assert window.push("sawing", 2) == "idle"


def test_reset_clears_history():
    window = MajorityWindow(10)
    for i in range(10):
        window.push("sawing", i)
    window.reset()
    assert len(window) == 0
    assert window.current() is None
    assert window.push("idle", 100) == "idle"
    window.reset()
    window.reset()  # idempotent
    assert len(window) == 0


def test_rejects_non_monotonic_frames():
    window = MajorityWindow(5)
    window.push("a", 4)
    with pytest.raises(FrameOrderError):
        window.push("a", 4)
    with pytest.raises(FrameOrderError):
        window.push("a", 3)


def test_exhaustive_against_brute_force():
    """Every label sequence of length <= 12 over 3 labels matches the oracle.

    All such sequences are prefixes of the length-12 ones, so a DFS over
    the ternary tree visits each exactly once; the window's ring buffer is
    snapshotted and restored around every branch.
    """
    from collections import deque

    capacity = 10
    labels = ("a", "b", "c")
    max_len = 12
    checked = 0
    window = MajorityWindow(capacity)
    prefix: list[str] = []

    def dfs():
        nonlocal checked
        if len(prefix) == max_len:
            return
        for label in labels:
            saved = tuple(window._entries)
            prefix.append(label)
            got = window.push(label, len(prefix) - 1)
            expected = brute_force_mode(prefix[-capacity:])
            assert got == expected, f"sequence {prefix}: {got} != {expected}"
            checked += 1
            dfs()
            prefix.pop()
            window._entries = deque(saved, maxlen=capacity)

    dfs()
    assert checked == sum(3 ** n for n in range(1, max_len + 1))


def test_single_blip_never_flips_stable_window():
    for stable_size in range(3, 11):
        for blip in ("b", "c"):
            window = MajorityWindow(10)
            for i in range(stable_size):
                assert window.push("a", i) == "a"
            assert window.push(blip, stable_size) == "a"


def test_switch_latency_bounded_by_half_capacity_plus_one():
    # With the most-recent tie-break a unanimous 10-window flips on the
    # 5th new label (the documented worst case is the bound ceil(c/2)+1 = 6).
    window = MajorityWindow(10)
    for i in range(10):
        window.push("old", i)
    flips_at = None
    for k in range(1, 11):
        if window.push("new", 10 + k) == "new":
            flips_at = k
            break
    assert flips_at == 5
    assert flips_at <= 10 // 2 + 1


def test_capacity_validation():
    with pytest.raises(ValueError):
        MajorityWindow(0)
