"""Per-frame orchestration: fan out, join, evaluate, publish.

Each frame splits into two independent computations — the object path
(score filtering plus per-label presence smoothing) and the action path
(pose preprocessing, classification, label smoothing). They may run on
worker threads, but their results are joined by frame id before the
strictly sequential scenario evaluation, so replays are deterministic
regardless of the worker count. Consumers subscribe to an ordered feed
of joined results and guidance events; in live mode a slow consumer
loses old frames, never events.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from . import pose_features
from .analysis import SessionReport
from .classifier import MlpParams, predict
from .config import PipelineConfig
from .detection import FrameDetections, StreamHeader, StreamParseError
from .overlay import AnchorRule, OverlayPlacer
from .scenario import (
    EventKind,
    GuidanceEvent,
    Scenario,
    ScenarioEngine,
    SmoothedFrame,
)
from .smoothing import MajorityWindow


@dataclass(frozen=True)
class JoinedResult:
    """Everything one processed frame tells the consumers."""

    frame_id: int
    timestamp_ms: int
    objects: tuple
    skeleton_px: Optional[tuple]
    smoothed_action: Optional[str]
    overlays: tuple
    events: tuple
    step_index: int
    step_count: int
    instruction: str
    progress: float
    elapsed_s: float
    completed: bool
    active_error: Optional[GuidanceEvent]
    hint: Optional[str]
    validated_steps: tuple

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "timestamp_ms": self.timestamp_ms,
            "objects": [
                {"label": o.label, "score": o.score, "bbox": list(o.bbox)}
                for o in self.objects
            ],
            "skeleton": [list(p) if p is not None else None for p in self.skeleton_px]
            if self.skeleton_px is not None else None,
            "smoothed_action": self.smoothed_action,
            "overlays": [o.to_dict() for o in self.overlays],
            "step_index": self.step_index,
            "step_count": self.step_count,
            "instruction": self.instruction,
            "progress": self.progress,
            "elapsed_s": self.elapsed_s,
            "completed": self.completed,
            "error": {
                "category": self.active_error.error_category.value,
                "text": self.active_error.detail,
            } if self.active_error is not None else None,
            "hint": self.hint,
            "validated_steps": list(self.validated_steps),
        }


class _ObjectPath:
    """Score filter plus per-label presence smoothing and last-seen boxes."""

    def __init__(self, labels: Sequence[str], threshold: float, window: int) -> None:
        self._threshold = threshold
        self._smoothers = {label: MajorityWindow(window) for label in labels}
        self._boxes: dict = {}

    def reset_smoothing(self) -> None:
        for smoother in self._smoothers.values():
            smoother.reset()

    def step(self, frame: FrameDetections) -> tuple:
        kept = tuple(o for o in frame.objects if o.score >= self._threshold)
        detected: dict = {}
        for det in kept:
            best = detected.get(det.label)
            if best is None or det.score > best.score:
                detected[det.label] = det
        present: dict = {}
        for label, smoother in self._smoothers.items():
            hit = label in detected
            if hit:
                self._boxes[label] = detected[label].bbox
            present[label] = bool(smoother.push(hit, frame.frame_id))
        boxes = {label: self._boxes[label] for label in self._boxes}
        return kept, present, boxes


class _ActionPath:
    """Skeleton preprocessing, classification and action smoothing."""

    def __init__(self, model: Optional[MlpParams], aspect: float, window: int) -> None:
        self._model = model
        self._aspect = aspect
        self._tracker = pose_features.PoseTracker()
        self._builder = pose_features.WindowBuilder()
        self._smoother = MajorityWindow(window)

    def reset_smoothing(self) -> None:
        self._smoother.reset()

    def step(self, frame: FrameDetections) -> Optional[str]:
        if self._model is None or frame.skeleton is None:
            return self._smoother.current()
        raw = pose_features.skeleton_from_triples(frame.skeleton, frame.frame_id)
        normalized = pose_features.preprocess_raw_skeleton(raw, self._aspect, self._tracker)
        if normalized is None:
            return self._smoother.current()
        window = self._builder.push(normalized)
        if window is None:
            return self._smoother.current()
        features = pose_features.build_feature_vector(window)
        label = predict(features, self._model)
        return self._smoother.push(label, frame.frame_id)


class FramePipeline:
    """Joins both paths and runs scenario evaluation plus overlay placement."""

    def __init__(
        self,
        scenario: Scenario,
        model: Optional[MlpParams],
        rules: dict,
        config: PipelineConfig,
        header: StreamHeader,
    ) -> None:
        self.scenario = scenario
        self.engine = ScenarioEngine(scenario)
        self.rules = rules
        self.config = config
        self.header = header
        self.object_path = _ObjectPath(
            scenario.objects, config.score_threshold, config.effective_object_window
        )
        self.action_path = _ActionPath(model, header.aspect, config.smoothing_window)
        self.placer = OverlayPlacer((float(header.width), float(header.height)))
        self._advance_script = {int(f): bool(forced) for f, forced in config.advance_at}
        self._start_ms: Optional[int] = None

    def _active_rules(self) -> list[AnchorRule]:
        step = self.engine.current_step
        if step is None:
            return []
        return [self.rules[rid] for rid in step.ar_components if rid in self.rules]

    def _skeleton_px(self, frame: FrameDetections) -> Optional[tuple]:
        if frame.skeleton is None:
            return None
        return tuple(
            (x * self.header.width, y * self.header.height) if c > 0 else None
            for x, y, c in frame.skeleton
        )

    def step(
        self,
        frame: FrameDetections,
        object_result: Optional[tuple] = None,
        action_result: Optional[str] = None,
        paths_ran: bool = False,
    ) -> JoinedResult:
        """Process one frame; the two path results may be precomputed."""
        if not paths_ran:
            object_result = self.object_path.step(frame)
            action_result = self.action_path.step(frame)
        kept, present, boxes = object_result
        if self._start_ms is None:
            self._start_ms = frame.timestamp_ms

        events: list[GuidanceEvent] = []
        if not self.engine.state.terminal:
            smoothed = SmoothedFrame(
                frame_id=frame.frame_id,
                timestamp_ms=frame.timestamp_ms,
                present=present,
                boxes=boxes,
                action=action_result,
            )
            events.extend(self.engine.evaluate_frame(smoothed))
        if frame.frame_id in self._advance_script and not self.engine.state.terminal:
            events.extend(
                self.engine.advance(frame.timestamp_ms, forced=self._advance_script[frame.frame_id])
            )
        if any(e.kind == EventKind.STEP_ADVANCED for e in events):
            self.object_path.reset_smoothing()
            self.action_path.reset_smoothing()

        overlays = tuple(self.placer.place(kept, self._active_rules()))
        state = self.engine.state
        step = self.engine.current_step
        return JoinedResult(
            frame_id=frame.frame_id,
            timestamp_ms=frame.timestamp_ms,
            objects=kept,
            skeleton_px=self._skeleton_px(frame),
            smoothed_action=action_result,
            overlays=overlays,
            events=tuple(events),
            step_index=min(state.step_index, len(self.scenario.steps) - 1),
            step_count=len(self.scenario.steps),
            instruction=step.instruction if step is not None else "Scenario finished.",
            progress=self.engine.progress(),
            elapsed_s=(frame.timestamp_ms - self._start_ms) / 1000.0,
            completed=state.completed,
            active_error=self.engine.active_error(),
            hint=step.hint_video if step is not None else None,
            validated_steps=tuple(self.engine.validated_flags()),
        )

    def build_report(self, frames_processed: int, aborted: bool = False) -> SessionReport:
        state = self.engine.state
        error_counts: dict = {}
        for event in state.events:
            if event.kind == EventKind.ERROR_RAISED:
                name = event.error_category.value
                error_counts[name] = error_counts.get(name, 0) + 1
        durations = []
        for started, validated in zip(state.started_ms, state.validated_ms):
            if started is not None and validated is not None:
                durations.append((validated - started) / 1000.0)
            else:
                durations.append(None)
        if state.completed:
            last_validated = max(v for v in state.validated_ms if v is not None)
            total = (last_validated - (self._start_ms or 0)) / 1000.0
        elif self._start_ms is not None and state.events:
            total = (state.events[-1].timestamp_ms - self._start_ms) / 1000.0
        else:
            total = 0.0
        return SessionReport(
            scenario_id=self.scenario.id,
            mode_tag=self.config.mode_tag,
            completed=state.completed,
            aborted=aborted,
            total_time_s=total,
            per_step_durations_s=durations,
            error_counts=error_counts,
            frames_processed=frames_processed,
            steps_validated=sum(self.engine.validated_flags()),
            events=list(state.events),
        )


class Subscription:
    """Ordered consumer feed of JoinedResults and GuidanceEvents."""

    def __init__(self, hub: "SessionHub") -> None:
        self._hub = hub
        self._items: deque = deque()
        self._frames_queued = 0
        self._lock = threading.Lock()
        self._ready = threading.Condition(self._lock)
        self.dropped_frames = 0

    def _offer(self, item, is_frame: bool) -> bool:
        """Enqueue; returns False when a lossless frame put must wait."""
        with self._ready:
            if is_frame and self._frames_queued >= self._hub.capacity:
                if not self._hub.live_mode:
                    return False
                for i, queued in enumerate(self._items):
                    if isinstance(queued, JoinedResult):
                        del self._items[i]
                        self._frames_queued -= 1
                        self.dropped_frames += 1
                        break
            self._items.append(item)
            if is_frame:
                self._frames_queued += 1
            self._ready.notify_all()
            return True

    def get(self, timeout: Optional[float] = None):
        """Next item, or None at end of stream."""
        with self._ready:
            while not self._items:
                if self._hub.closed:
                    return None
                if not self._ready.wait(timeout=timeout):
                    raise TimeoutError("no item within timeout")
            item = self._items.popleft()
            if isinstance(item, JoinedResult):
                self._frames_queued -= 1
            self._ready.notify_all()
            return item

    def __iter__(self):
        while True:
            item = self.get()
            if item is None:
                return
            yield item


class SessionHub:
    """Broadcasts one session's output to any number of subscribers."""

    def __init__(self, capacity: int = 64, live_mode: bool = False) -> None:
        self.capacity = capacity
        self.live_mode = live_mode
        self.closed = False
        self._subs: list[Subscription] = []
        self._lock = threading.Lock()

    def subscribe(self) -> Subscription:
        with self._lock:
            if self.closed:
                closed_sub = Subscription(self)
                return closed_sub
            sub = Subscription(self)
            self._subs.append(sub)
            return sub

    def _publish(self, item, is_frame: bool) -> None:
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            while not sub._offer(item, is_frame):
                # Replay (lossless) mode: back-pressure on the producer.
                with sub._ready:
                    sub._ready.wait(timeout=0.05)

    def publish_event(self, event: GuidanceEvent) -> None:
        self._publish(event, is_frame=False)

    def publish_frame(self, result: JoinedResult) -> None:
        self._publish(result, is_frame=True)

    def close(self) -> None:
        with self._lock:
            self.closed = True
            subs = list(self._subs)
        for sub in subs:
            with sub._ready:
                sub._ready.notify_all()


def load_session_components(config: PipelineConfig):
    """Resolve scenario, model and rules from the config paths."""
    from .classifier import load_model
    from .overlay import load_anchor_rules
    from .scenario import load_scenario

    if config.scenario_path is None:
        raise ValueError("a scenario path is required")
    rules = {}
    if config.rules_path is not None:
        rules = load_anchor_rules(config.rules_path)
    scenario = load_scenario(config.scenario_path, anchor_rules=rules if rules else None)
    if config.rules_path is not None:
        unknown = [r.anchor_label for r in rules.values() if r.anchor_label not in scenario.objects]
        if unknown:
            raise ValueError(f"rule anchors outside the scenario vocabulary: {unknown}")
    model = load_model(config.model_path) if config.model_path else None
    return scenario, model, rules


def run_session(
    config: PipelineConfig,
    provider: Iterable[FrameDetections],
    header: StreamHeader,
    hub: Optional[SessionHub] = None,
    components: Optional[tuple] = None,
) -> SessionReport:
    """Drive a full session over a frame provider and build its report."""
    scenario, model, rules = components or load_session_components(config)
    pipeline = FramePipeline(scenario, model, rules, config, header)
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    frames_processed = 0
    aborted = False
    frame_interval = 1.0 / config.fps_cap if config.live_mode and config.fps_cap > 0 else 0.0
    next_deadline = time.monotonic()
    try:
        iterator = iter(provider)
        while True:
            try:
                frame = next(iterator)
            except StopIteration:
                break
            except StreamParseError:
                aborted = True
                break
            if pool is not None:
                object_future = pool.submit(pipeline.object_path.step, frame)
                action_future = pool.submit(pipeline.action_path.step, frame)
                result = pipeline.step(
                    frame,
                    object_result=object_future.result(),
                    action_result=action_future.result(),
                    paths_ran=True,
                )
            else:
                result = pipeline.step(frame)
            frames_processed += 1
            if hub is not None:
                for event in result.events:
                    hub.publish_event(event)
                hub.publish_frame(result)
            if frame_interval > 0:
                next_deadline += frame_interval
                delay = next_deadline - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
        if hub is not None:
            hub.close()
    return pipeline.build_report(frames_processed, aborted=aborted)
