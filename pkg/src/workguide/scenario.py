"""Step requirements, per-frame validation and the guidance event stream.

A scenario is an ordered list of steps, each demanding objects on the
table (optionally inside a region) and/or a sustained action. Evaluating
one frame of smoothed signals against the active step either validates
it (advancing the workflow) or raises one of the five error categories.
Errors are edge-triggered: raised once when a condition starts, re-armed
when it clears.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Optional, Sequence, Union


class ErrorCategory(str, Enum):
    WRONG_TOOL = "WrongTool"
    MISSING_TOOL = "MissingTool"
    WRONG_ACTION = "WrongAction"
    PREMATURE_ADVANCE = "PrematureAdvance"
    WRONG_POSITION = "WrongPosition"


ERROR_CATEGORY_NAMES = tuple(c.value for c in ErrorCategory)


class EventKind(str, Enum):
    STEP_VALIDATED = "StepValidated"
    STEP_ADVANCED = "StepAdvanced"
    ERROR_RAISED = "ErrorRaised"
    SCENARIO_COMPLETED = "ScenarioCompleted"


DEFAULT_MIN_ACTION_FRAMES = 3
DEFAULT_GRACE_WINDOW = 15


class ScenarioFormatError(ValueError):
    """Scenario source failed validation."""


@dataclass(frozen=True)
class GuidanceEvent:
    seq: int
    kind: EventKind
    step_id: int
    timestamp_ms: int
    error_category: Optional[ErrorCategory] = None
    detail: str = ""

    def __post_init__(self) -> None:
        if (self.kind == EventKind.ERROR_RAISED) != (self.error_category is not None):
            raise ValueError("error_category is present iff kind is ErrorRaised")

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "kind": self.kind.value,
            "step_id": self.step_id,
            "timestamp_ms": self.timestamp_ms,
            "error_category": self.error_category.value if self.error_category else None,
            "detail": self.detail,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_dict(record: dict) -> "GuidanceEvent":
        category = record.get("error_category")
        return GuidanceEvent(
            seq=record["seq"],
            kind=EventKind(record["kind"]),
            step_id=record["step_id"],
            timestamp_ms=record["timestamp_ms"],
            error_category=ErrorCategory(category) if category else None,
            detail=record.get("detail", ""),
        )


Rect = tuple[float, float, float, float]


@dataclass(frozen=True)
class RequiredObject:
    label: str
    must_be_present: bool = True
    region: Optional[Rect] = None


@dataclass(frozen=True)
class Step:
    id: int
    instruction: str
    required_objects: tuple = ()
    required_action: Optional[str] = None
    forbidden_objects: tuple = ()
    min_action_frames: int = DEFAULT_MIN_ACTION_FRAMES
    confusable_actions: tuple = ()
    ar_components: tuple = ()
    hint_video: Optional[str] = None

    def __post_init__(self) -> None:
        if self.min_action_frames < 1:
            raise ValueError(f"step {self.id}: min_action_frames must be >= 1")
        has_object_req = any(r.must_be_present for r in self.required_objects)
        if not has_object_req and self.required_action is None:
            raise ValueError(f"step {self.id}: needs at least one object or action requirement")


@dataclass(frozen=True)
class Scenario:
    id: str
    title: str
    objects: tuple
    actions: tuple
    grasp_actions: tuple
    steps: tuple
    grace_window: int = DEFAULT_GRACE_WINDOW
    version: int = 1

    def step_count(self) -> int:
        return len(self.steps)


def _validate_scenario(s: Scenario) -> None:
    if not s.steps:
        raise ScenarioFormatError("scenario has no steps")
    seen_ids = set()
    for step in s.steps:
        if step.id in seen_ids:
            raise ScenarioFormatError(f"duplicate step id {step.id}")
        seen_ids.add(step.id)
    object_vocab = set(s.objects)
    action_vocab = set(s.actions)
    for action in s.grasp_actions:
        if action not in action_vocab:
            raise ScenarioFormatError(f"grasp action {action!r} not in action vocabulary")
    for step in s.steps:
        for req in step.required_objects:
            if req.label not in object_vocab:
                raise ScenarioFormatError(
                    f"step {step.id}: unknown object label {req.label!r}"
                )
            if req.region is not None and (req.region[2] <= 0 or req.region[3] <= 0):
                raise ScenarioFormatError(f"step {step.id}: region sides must be positive")
        for label in step.forbidden_objects:
            if label not in object_vocab:
                raise ScenarioFormatError(
                    f"step {step.id}: unknown forbidden object {label!r}"
                )
        if step.required_action is not None and step.required_action not in action_vocab:
            raise ScenarioFormatError(
                f"step {step.id}: unknown action {step.required_action!r}"
            )
        for action in step.confusable_actions:
            if action not in action_vocab:
                raise ScenarioFormatError(
                    f"step {step.id}: unknown confusable action {action!r}"
                )


def load_scenario(
    source: Union[str, Path, IO[str]],
    anchor_rules: Optional[dict] = None,
) -> Scenario:
    """Parse and fully validate a scenario document.

    When ``anchor_rules`` (id -> rule) is given, every ar_components
    reference must resolve into it.
    """
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"scenario is not valid JSON: {exc}") from exc
    if doc.get("format") != "workguide-scenario":
        raise ScenarioFormatError("missing workguide-scenario format marker")
    if doc.get("version") != 1:
        raise ScenarioFormatError(f"unsupported scenario version {doc.get('version')}")

    try:
        steps = []
        for raw in doc["steps"]:
            required = tuple(
                RequiredObject(
                    label=r["label"],
                    must_be_present=bool(r.get("must_be_present", True)),
                    region=tuple(r["region"]) if r.get("region") else None,
                )
                for r in raw.get("required_objects", [])
            )
            steps.append(Step(
                id=int(raw["id"]),
                instruction=str(raw["instruction"]),
                required_objects=required,
                required_action=raw.get("required_action"),
                forbidden_objects=tuple(raw.get("forbidden_objects", [])),
                min_action_frames=int(raw.get("min_action_frames", DEFAULT_MIN_ACTION_FRAMES)),
                confusable_actions=tuple(raw.get("confusable_actions", [])),
                ar_components=tuple(raw.get("ar_components", [])),
                hint_video=raw.get("hint_video"),
            ))
        scenario = Scenario(
            id=str(doc["id"]),
            title=str(doc.get("title", doc["id"])),
            objects=tuple(doc["objects"]),
            actions=tuple(doc["actions"]),
            grasp_actions=tuple(doc.get("grasp_actions", [])),
            steps=tuple(steps),
            grace_window=int(doc.get("grace_window_frames", DEFAULT_GRACE_WINDOW)),
            version=int(doc["version"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioFormatError):
            raise
        raise ScenarioFormatError(f"bad scenario document: {exc}") from exc

    _validate_scenario(scenario)
    if anchor_rules is not None:
        for step in scenario.steps:
            for rule_id in step.ar_components:
                if rule_id not in anchor_rules:
                    raise ScenarioFormatError(
                        f"step {step.id}: ar component {rule_id!r} not in rule set"
                    )
    return scenario


def rect_contains(outer: Rect, inner: Rect) -> bool:
    ox, oy, ow, oh = outer
    ix, iy, iw, ih = inner
    return ix >= ox and iy >= oy and ix + iw <= ox + ow and iy + ih <= oy + oh


@dataclass(frozen=True)
class SmoothedFrame:
    """Stabilized per-frame signals the scenario consumes.

    ``present`` holds the smoothed presence verdict per object label,
    ``boxes`` the most recently seen pixel box per label, ``action`` the
    smoothed action label (None before the first classification).
    """

    frame_id: int
    timestamp_ms: int
    present: dict
    boxes: dict
    action: Optional[str]


class StepStatus(str, Enum):
    AWAITING = "awaiting"
    SATISFIED = "satisfied"
    ERRORED = "errored"


@dataclass
class ScenarioState:
    scenario_id: str
    step_index: int = 0
    status: StepStatus = StepStatus.AWAITING
    started_ms: list = field(default_factory=list)
    validated_ms: list = field(default_factory=list)
    action_run: int = 0
    confusable_runs: dict = field(default_factory=dict)
    absent_runs: dict = field(default_factory=dict)
    active_conditions: set = field(default_factory=set)
    events: list = field(default_factory=list)
    seq: int = 0
    completed: bool = False
    terminal: bool = False


class ScenarioEngine:
    """Single-owner evaluator advancing one ScenarioState through a session."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        self.state = ScenarioState(
            scenario_id=scenario.id,
            started_ms=[None] * len(scenario.steps),
            validated_ms=[None] * len(scenario.steps),
        )

    @property
    def current_step(self) -> Optional[Step]:
        if self.state.terminal:
            return None
        return self.scenario.steps[self.state.step_index]

    def _emit(
        self,
        kind: EventKind,
        step_id: int,
        timestamp_ms: int,
        category: Optional[ErrorCategory] = None,
        detail: str = "",
    ) -> GuidanceEvent:
        event = GuidanceEvent(
            seq=self.state.seq,
            kind=kind,
            step_id=step_id,
            timestamp_ms=timestamp_ms,
            error_category=category,
            detail=detail,
        )
        self.state.seq += 1
        self.state.events.append(event)
        return event

    def _edge_error(
        self,
        key: tuple,
        active: bool,
        category: ErrorCategory,
        step_id: int,
        timestamp_ms: int,
        detail: str,
        out: list,
    ) -> None:
        if active:
            if key not in self.state.active_conditions:
                self.state.active_conditions.add(key)
                out.append(self._emit(
                    EventKind.ERROR_RAISED, step_id, timestamp_ms, category, detail
                ))
                self.state.status = StepStatus.ERRORED
        else:
            self.state.active_conditions.discard(key)

    def evaluate_frame(self, smoothed: SmoothedFrame) -> list[GuidanceEvent]:
        """Check the active step's requirements against one smoothed frame."""
        if self.state.terminal:
            raise ValueError("scenario already finished")
        state = self.state
        step = self.scenario.steps[state.step_index]
        ts = smoothed.timestamp_ms
        if state.started_ms[state.step_index] is None:
            state.started_ms[state.step_index] = ts
        events: list[GuidanceEvent] = []

        # Missing tools: must-be-present objects absent beyond the grace window.
        for req in step.required_objects:
            if not req.must_be_present:
                continue
            if smoothed.present.get(req.label, False):
                state.absent_runs[req.label] = 0
                self._edge_error((ErrorCategory.MISSING_TOOL, req.label), False,
                                 ErrorCategory.MISSING_TOOL, step.id, ts, "", events)
            else:
                run = state.absent_runs.get(req.label, 0) + 1
                state.absent_runs[req.label] = run
                self._edge_error(
                    (ErrorCategory.MISSING_TOOL, req.label),
                    run > self.scenario.grace_window,
                    ErrorCategory.MISSING_TOOL, step.id, ts,
                    f"{req.label} missing from the working station", events,
                )

        # Misplaced objects: present but their box escapes the step's region.
        for req in step.required_objects:
            if req.region is None:
                continue
            box = smoothed.boxes.get(req.label)
            visible = smoothed.present.get(req.label, False) and box is not None
            misplaced = visible and not rect_contains(req.region, box)
            self._edge_error(
                (ErrorCategory.WRONG_POSITION, req.label), misplaced,
                ErrorCategory.WRONG_POSITION, step.id, ts,
                f"{req.label} is outside its target area", events,
            )

        # Wrong tool: a forbidden object while the worker performs a grasp action.
        grasping = smoothed.action in self.scenario.grasp_actions
        for label in step.forbidden_objects:
            active = grasping and smoothed.present.get(label, False)
            self._edge_error(
                (ErrorCategory.WRONG_TOOL, label), active,
                ErrorCategory.WRONG_TOOL, step.id, ts,
                f"grabbed {label}, which step {step.id} does not use", events,
            )

        # Wrong action: a confusable action sustained as long as a valid one.
        for action in step.confusable_actions:
            run = state.confusable_runs.get(action, 0)
            run = run + 1 if smoothed.action == action else 0
            state.confusable_runs[action] = run
            self._edge_error(
                (ErrorCategory.WRONG_ACTION, action),
                run >= step.min_action_frames,
                ErrorCategory.WRONG_ACTION, step.id, ts,
                f"performing {action} instead of {step.required_action}", events,
            )

        # Step validation: all required objects in place and the required
        # action sustained for min_action_frames consecutive evaluations.
        objects_ok = all(
            smoothed.present.get(req.label, False)
            and (
                req.region is None
                or (
                    smoothed.boxes.get(req.label) is not None
                    and rect_contains(req.region, smoothed.boxes[req.label])
                )
            )
            for req in step.required_objects
            if req.must_be_present
        )
        if step.required_action is not None:
            state.action_run = state.action_run + 1 if smoothed.action == step.required_action else 0
            action_ok = state.action_run >= step.min_action_frames
        else:
            action_ok = True

        if objects_ok and action_ok:
            state.status = StepStatus.SATISFIED
            state.validated_ms[state.step_index] = ts
            events.append(self._emit(EventKind.STEP_VALIDATED, step.id, ts))
            events.extend(self.advance(ts))
        elif state.status == StepStatus.ERRORED and not state.active_conditions:
            state.status = StepStatus.AWAITING
        return events

    def advance(self, timestamp_ms: int, forced: bool = False) -> list[GuidanceEvent]:
        """Move to the next step; on an unsatisfied step this is an error.

        A plain advance on an unsatisfied step raises PrematureAdvance and
        stays put; with ``forced`` the index moves anyway (operator skip).
        """
        if self.state.terminal:
            return []
        state = self.state
        step = self.scenario.steps[state.step_index]
        events: list[GuidanceEvent] = []
        if state.status != StepStatus.SATISFIED:
            events.append(self._emit(
                EventKind.ERROR_RAISED, step.id, timestamp_ms,
                ErrorCategory.PREMATURE_ADVANCE,
                f"step {step.id} skipped before its requirements were met",
            ))
            if not forced:
                return events
        validated = state.status == StepStatus.SATISFIED
        last = state.step_index == len(self.scenario.steps) - 1
        if last:
            state.terminal = True
            if validated:
                state.completed = True
                events.append(self._emit(EventKind.SCENARIO_COMPLETED, step.id, timestamp_ms))
        else:
            state.step_index += 1
            state.status = StepStatus.AWAITING
            state.action_run = 0
            state.confusable_runs.clear()
            state.absent_runs.clear()
            state.active_conditions.clear()
            state.started_ms[state.step_index] = timestamp_ms
            events.append(self._emit(
                EventKind.STEP_ADVANCED,
                self.scenario.steps[state.step_index].id,
                timestamp_ms,
            ))
        return events

    def active_error(self) -> Optional[GuidanceEvent]:
        """Most recent error whose condition is still active, for banners."""
        if not self.state.active_conditions:
            return None
        active_categories = {key[0] for key in self.state.active_conditions}
        for event in reversed(self.state.events):
            if event.kind == EventKind.ERROR_RAISED and event.error_category in active_categories:
                return event
        return None

    def validated_flags(self) -> list[bool]:
        return [ms is not None for ms in self.state.validated_ms]

    def progress(self) -> float:
        return sum(self.validated_flags()) / len(self.scenario.steps)
