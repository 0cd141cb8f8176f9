from __future__ import annotations

import io
import json

import pytest

from workguide import overlay as ov
from workguide.detection import ObjectDetection


FRAME = (1280.0, 720.0)


def rule(**overrides):
    base = dict(
        id="r1", anchor_label="drill", kind=ov.OverlayKind.HIGHLIGHT_BOX,
        offset=(0.5, -0.25), size=(0.5, 0.5), staleness_timeout_frames=15,
    )
    base.update(overrides)
    return ov.AnchorRule(**base)


def detection(label="drill", bbox=(100.0, 100.0, 80.0, 40.0), score=0.9):
    return ObjectDetection(label, score, bbox)


def test_worked_example_rect():
    placed = ov.OverlayPlacer(FRAME).place([detection()], [rule()])
    assert len(placed) == 1
    assert placed[0].rect == (140.0, 90.0, 40.0, 20.0)
    assert not placed[0].stale


def test_identity_rule_congruent_with_anchor():
    identity = rule(offset=(0.0, 0.0), size=(1.0, 1.0))
    placed = ov.OverlayPlacer(FRAME).place([detection()], [identity])
    assert placed[0].rect == (100.0, 100.0, 80.0, 40.0)


def test_absent_anchor_timeout_zero_omitted():
    placer = ov.OverlayPlacer(FRAME)
    impatient = rule(staleness_timeout_frames=0)
    assert placer.place([detection()], [impatient])  # seeds the cache
    assert placer.place([], [impatient]) == []


def test_staleness_window_then_expiry():
    placer = ov.OverlayPlacer(FRAME)
    patient = rule(staleness_timeout_frames=2)
    fresh = placer.place([detection()], [patient])[0]
    for _ in range(2):
        stale = placer.place([], [patient])
        assert len(stale) == 1
        assert stale[0].stale
        assert stale[0].rect == fresh.rect
    assert placer.place([], [patient]) == []


def test_translation_equivariance_exact():
    base_rect = ov.OverlayPlacer(FRAME).place([detection()], [rule()])[0].rect
    for tx, ty in ((17.0, 4.0), (-30.0, 55.0), (200.25, 101.5)):
        moved_box = (100.0 + tx, 100.0 + ty, 80.0, 40.0)
        moved_rect = ov.OverlayPlacer(FRAME).place(
            [detection(bbox=moved_box)], [rule()]
        )[0].rect
        assert moved_rect[0] - base_rect[0] == tx
        assert moved_rect[1] - base_rect[1] == ty
        assert moved_rect[2:] == base_rect[2:]


def test_scaling_linearity_exact():
    doubled_box = (100.0, 100.0, 160.0, 80.0)
    base = ov.OverlayPlacer(FRAME).place([detection()], [rule()])[0].rect
    doubled = ov.OverlayPlacer(FRAME).place(
        [detection(bbox=doubled_box)], [rule()]
    )[0].rect
    assert doubled[0] - 100.0 == 2 * (base[0] - 100.0)
    assert doubled[1] - 100.0 == 2 * (base[1] - 100.0)
    assert doubled[2] == 2 * base[2]
    assert doubled[3] == 2 * base[3]


def test_absolute_size_rule():
    fixed = rule(size=(24.0, 12.0), size_absolute=True)
    placed = ov.OverlayPlacer(FRAME).place([detection()], [fixed])
    assert placed[0].rect[2:] == (24.0, 12.0)


def test_highest_score_detection_anchors():
    weak = detection(bbox=(0.0, 0.0, 10.0, 10.0), score=0.4)
    strong = detection(bbox=(500.0, 300.0, 80.0, 40.0), score=0.95)
    placed = ov.OverlayPlacer(FRAME).place([weak, strong], [rule()])
    assert placed[0].rect == (540.0, 290.0, 40.0, 20.0)


def test_clamped_to_frame():
    edge = detection(bbox=(1250.0, 10.0, 80.0, 40.0))
    placed = ov.OverlayPlacer(FRAME).place([edge], [rule(offset=(0.0, 0.0), size=(1.0, 1.0))])
    x, y, w, h = placed[0].rect
    assert x + w <= FRAME[0]
    assert y >= 0.0


def test_pure_given_state():
    placer_a = ov.OverlayPlacer(FRAME)
    placer_b = ov.OverlayPlacer(FRAME)
    sequence = [
        [detection()],
        [],
        [detection(bbox=(300.0, 200.0, 50.0, 25.0))],
    ]
    outputs_a = [placer_a.place(objs, [rule()]) for objs in sequence]
    outputs_b = [placer_b.place(objs, [rule()]) for objs in sequence]
    assert outputs_a == outputs_b


# --- rule files ----------------------------------------------------------------

def rules_doc(rules):
    return json.dumps({"format": "workguide-rules", "version": 1, "rules": rules})


def test_load_rules_empty_file():
    assert ov.load_anchor_rules(io.StringIO("")) == {}


def test_load_rules_roundtrip_fields():
    doc = rules_doc([{
        "id": "step2_drill", "anchor": "drill", "kind": "HighlightBox",
        "offset": [-0.1, -0.1], "size": [1.2, 1.2], "payload": "Use this drill",
        "staleness_timeout_frames": 10,
    }])
    rules = ov.load_anchor_rules(io.StringIO(doc), object_vocabulary=["drill"])
    assert rules["step2_drill"].anchor_label == "drill"
    assert rules["step2_drill"].payload == "Use this drill"


def test_load_rules_unknown_anchor():
    doc = rules_doc([{
        "id": "bad", "anchor": "laser", "kind": "Arrow",
        "offset": [0, 0], "size": [1, 1],
    }])
    with pytest.raises(ov.RuleFormatError, match="laser"):
        ov.load_anchor_rules(io.StringIO(doc), object_vocabulary=["drill"])


def test_load_rules_nonpositive_size():
    doc = rules_doc([{
        "id": "bad", "anchor": "drill", "kind": "Arrow",
        "offset": [0, 0], "size": [0, 1],
    }])
    with pytest.raises(ov.RuleFormatError):
        ov.load_anchor_rules(io.StringIO(doc), object_vocabulary=["drill"])


def test_load_rules_duplicate_id():
    record = {"id": "dup", "anchor": "drill", "kind": "Arrow",
              "offset": [0, 0], "size": [1, 1]}
    with pytest.raises(ov.RuleFormatError, match="duplicate"):
        ov.load_anchor_rules(io.StringIO(rules_doc([record, record])))
