"""Regenerate the bundled golden assets (model, replays) deterministically.

Run from the repo root:  python3 scripts/build_assets.py
Writes into src/workguide/assets/ and verifies every produced stream by
replaying it through the full pipeline before declaring success.
"""

from __future__ import annotations

import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from workguide import classifier, data, detection  # noqa: E402
from workguide.config import PipelineConfig  # noqa: E402
from workguide.runtime import load_session_components, run_session  # noqa: E402

ASSETS = REPO / "src" / "workguide" / "assets"
SCENARIO = ASSETS / "tableI.scenario"
RULES = ASSETS / "tableI.rules"
MODEL = ASSETS / "tableI_mlp.model"

WIDTH, HEIGHT, FPS = 1280, 720, 30.0
SEGMENT_FRAMES = 60
NOISE = 0.002
SCORE = 0.92

# Canonical table layout (pixels); drill and pencil sit inside their
# scenario regions.
OBJECT_BOXES = {
    "drill": (150.0, 420.0, 120.0, 90.0),
    "screw bit": (320.0, 450.0, 40.0, 30.0),
    "grey box": (300.0, 430.0, 140.0, 80.0),
    "green box": (480.0, 430.0, 140.0, 80.0),
    "screw": (500.0, 455.0, 30.0, 20.0),
    "board": (660.0, 420.0, 260.0, 120.0),
    "pencil": (950.0, 450.0, 70.0, 18.0),
    "ruler": (1050.0, 440.0, 160.0, 25.0),
    "hacksaw": (120.0, 560.0, 220.0, 60.0),
}

# Worker actions per segment; segment k drives step k+1.
SEGMENT_ACTIONS = (
    "idle", "drilling", "picking", "picking", "drilling",
    "placing", "marking", "measuring", "sawing",
)

MISPLACED_PENCIL = (700.0, 450.0, 70.0, 18.0)


def action_plan(override=None):
    """(frame range, action) plan for the whole session."""
    plan = []
    for seg, action in enumerate(SEGMENT_ACTIONS):
        start = seg * SEGMENT_FRAMES
        plan.append((start, start + SEGMENT_FRAMES, action))
    if override:
        plan = override(plan)
    return plan


def compose_stream(
    path: Path,
    *,
    action_spans=None,
    absent=lambda frame_id, label: False,
    boxes=lambda frame_id, label: OBJECT_BOXES[label],
    seed: int = 2026,
):
    """Author one replay: fixed table objects plus a scripted skeleton."""
    spans = action_spans or action_plan()
    total = max(end for _, end, _ in spans)
    rng = np.random.default_rng(seed)
    frames = []
    for frame_id in range(total):
        action = next(a for s, e, a in spans if s <= frame_id < e)
        spec = detection.default_spec(action, seed=seed, noise_sigma=NOISE,
                                      duration_frames=total)
        skeleton = detection.synthetic_skeleton(spec, frame_id, rng)
        objects = tuple(
            detection.ObjectDetection(label, SCORE, boxes(frame_id, label))
            for label in OBJECT_BOXES
            if not absent(frame_id, label)
        )
        frames.append(detection.FrameDetections(
            frame_id=frame_id,
            timestamp_ms=round(frame_id * 1000.0 / FPS),
            objects=objects,
            skeleton=skeleton,
        ))
    header = detection.StreamHeader(width=WIDTH, height=HEIGHT, fps=FPS)
    detection.write_stream(path, frames, header)
    return path


def build_model():
    print("== training bundled classifier ==")
    with tempfile.TemporaryDirectory() as tmp:
        data.write_training_streams(
            tmp, detection.ACTION_VOCABULARY, streams_per_action=8,
            duration_frames=90, noise_sigma=0.003, base_seed=0,
        )
        entries = data.load_dataset_dir(tmp)
        train_entries, held_entries = data.split_streams(entries, 0.25, seed=1)
        x_train, y_train = data.assemble(train_entries)
        x_held, y_held = data.assemble(held_entries)
        classes = tuple(sorted({label for label, _, _ in entries}))
        params = classifier.train(
            x_train, y_train, classes,
            classifier.TrainingConfig(learning_rate=0.05, batch_size=32,
                                      epochs=40, seed=7, hidden=(64, 32)),
        )
        train_acc = classifier.accuracy(params, x_train, y_train)
        held_acc = classifier.accuracy(params, x_held, y_held)
        print(f"   train acc {train_acc:.4f}  held-out acc {held_acc:.4f}")
        assert held_acc >= 0.95, "bundled model must be near-perfect on synthetic data"
        classifier.save_model(params, MODEL)
    return params


def verify(path: Path, expect_errors: dict, expect_completed=True, advance_at=()):
    cfg = PipelineConfig(
        scenario_path=str(SCENARIO), model_path=str(MODEL), rules_path=str(RULES),
        advance_at=list(advance_at),
    )
    components = load_session_components(cfg)
    provider = detection.ReplayProvider(path)
    report = run_session(cfg, provider, provider.header, components=components)
    status = {
        "completed": report.completed,
        "steps": report.steps_validated,
        "errors": report.error_counts,
    }
    print(f"   {path.name}: {json.dumps(status, sort_keys=True)}")
    assert report.completed == expect_completed, path.name
    assert report.error_counts == expect_errors, (path.name, report.error_counts)
    if expect_completed:
        assert report.steps_validated == 9, path.name
    return report


def main() -> int:
    ASSETS.mkdir(parents=True, exist_ok=True)
    build_model()

    print("== composing golden replays ==")
    clean = compose_stream(ASSETS / "tableI_clean.detstream")

    def wrong_tool_spans(plan):
        # Early in step 2's segment the worker grabs (picks) while the
        # hacksaw sits on the table, then corrects to drilling.
        out = []
        for start, end, action in plan:
            if start == SEGMENT_FRAMES:
                out.append((start, start + 18, "picking"))
                out.append((start + 18, end, action))
            else:
                out.append((start, end, action))
        return out

    wrong_tool = compose_stream(ASSETS / "inject_wrong_tool.detstream",
                                action_spans=action_plan(wrong_tool_spans))

    def wrong_action_spans(plan):
        out = []
        for start, end, action in plan:
            if start == SEGMENT_FRAMES:
                out.append((start, start + 18, "sawing"))
                out.append((start + 18, end, action))
            else:
                out.append((start, end, action))
        return out

    wrong_action = compose_stream(ASSETS / "inject_wrong_action.detstream",
                                  action_spans=action_plan(wrong_action_spans))

    missing_tool = compose_stream(
        ASSETS / "inject_missing_tool.detstream",
        absent=lambda frame_id, label: label == "green box" and frame_id < 30,
    )

    def pencil_boxes(frame_id, label):
        seg6 = 6 * SEGMENT_FRAMES
        if label == "pencil" and seg6 <= frame_id < seg6 + 25:
            return MISPLACED_PENCIL
        return OBJECT_BOXES[label]

    wrong_position = compose_stream(ASSETS / "inject_wrong_position.detstream",
                                    boxes=pencil_boxes)

    print("== verifying replays against the pipeline ==")
    verify(clean, expect_errors={})
    verify(wrong_tool, expect_errors={"WrongTool": 1})
    verify(wrong_action, expect_errors={"WrongAction": 1})
    verify(missing_tool, expect_errors={"MissingTool": 1})
    verify(wrong_position, expect_errors={"WrongPosition": 1})
    verify(clean, expect_errors={"PrematureAdvance": 1}, advance_at=[(100, False)])
    print("all golden assets built and verified")
    return 0


if __name__ == "__main__":
    sys.exit(main())
