"""Anchor-based overlay placement.

Overlay rules position AR components relative to a detected object's
bounding box instead of fixed screen coordinates, so guidance survives
camera shifts. Offsets and sizes are fractions of the anchor box by
default; a rule can opt into absolute pixel sizes. When an anchor drops
out momentarily the last-known rect is reused, flagged stale, until a
per-rule timeout expires.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union


class OverlayKind(str, Enum):
    HIGHLIGHT_BOX = "HighlightBox"
    ARROW = "Arrow"
    TEXT_HINT = "TextHint"
    ANIMATION_REF = "AnimationRef"


DEFAULT_STALENESS_TIMEOUT = 15

Rect = tuple[float, float, float, float]


class RuleFormatError(ValueError):
    """Anchor-rule source failed validation."""


@dataclass(frozen=True)
class AnchorRule:
    id: str
    anchor_label: str
    kind: OverlayKind
    offset: tuple[float, float]
    size: tuple[float, float]
    size_absolute: bool = False
    payload: str = ""
    staleness_timeout_frames: int = DEFAULT_STALENESS_TIMEOUT

    def __post_init__(self) -> None:
        if self.staleness_timeout_frames < 0:
            raise ValueError(f"rule {self.id}: staleness timeout must be >= 0")
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError(f"rule {self.id}: size must be positive")


@dataclass(frozen=True)
class OverlayInstance:
    rule_id: str
    kind: OverlayKind
    rect: Rect
    stale: bool
    payload: str

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "kind": self.kind.value,
            "rect": list(self.rect),
            "stale": self.stale,
            "payload": self.payload,
        }


def load_anchor_rules(
    source: Union[str, Path, IO[str]],
    object_vocabulary: Optional[Sequence[str]] = None,
) -> dict[str, AnchorRule]:
    """Parse the rule file into an id-keyed rule set."""
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        text = Path(source).read_text(encoding="utf-8")
    if not text.strip():
        return {}
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleFormatError(f"rule file is not valid JSON: {exc}") from exc
    if doc.get("format") != "workguide-rules" or doc.get("version") != 1:
        raise RuleFormatError("missing or unsupported workguide-rules header")
    rules: dict[str, AnchorRule] = {}
    vocab = set(object_vocabulary) if object_vocabulary is not None else None
    for raw in doc.get("rules", []):
        try:
            rule = AnchorRule(
                id=str(raw["id"]),
                anchor_label=str(raw["anchor"]),
                kind=OverlayKind(raw["kind"]),
                offset=(float(raw["offset"][0]), float(raw["offset"][1])),
                size=(float(raw["size"][0]), float(raw["size"][1])),
                size_absolute=bool(raw.get("size_absolute", False)),
                payload=str(raw.get("payload", "")),
                staleness_timeout_frames=int(
                    raw.get("staleness_timeout_frames", DEFAULT_STALENESS_TIMEOUT)
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise RuleFormatError(f"bad rule record {raw.get('id')!r}: {exc}") from exc
        if rule.id in rules:
            raise RuleFormatError(f"duplicate rule id {rule.id!r}")
        if vocab is not None and rule.anchor_label not in vocab:
            raise RuleFormatError(
                f"rule {rule.id}: anchor {rule.anchor_label!r} not in object vocabulary"
            )
        rules[rule.id] = rule
    return rules


def compute_rect(rule: AnchorRule, anchor_bbox: Rect) -> Rect:
    """Rect for a rule given its anchor box; the pure placement formula."""
    ax, ay, aw, ah = anchor_bbox
    x = ax + rule.offset[0] * aw
    y = ay + rule.offset[1] * ah
    if rule.size_absolute:
        w, h = rule.size
    else:
        w, h = rule.size[0] * aw, rule.size[1] * ah
    return (x, y, w, h)


def clamp_rect(rect: Rect, frame_size: tuple[float, float]) -> Optional[Rect]:
    """Intersect a rect with the frame; None when nothing remains visible."""
    fw, fh = frame_size
    x0 = max(rect[0], 0.0)
    y0 = max(rect[1], 0.0)
    x1 = min(rect[0] + rect[2], fw)
    y1 = min(rect[1] + rect[3], fh)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


class OverlayPlacer:
    """Stateful placement: rules + detections + a last-known anchor cache."""

    def __init__(self, frame_size: tuple[float, float]) -> None:
        self.frame_size = frame_size
        # rule id -> (last rect, frames since the anchor was last seen)
        self._cache: dict[str, tuple[Rect, int]] = {}

    def reset(self) -> None:
        self._cache.clear()

    def place(
        self, objects: Iterable, rules: Sequence[AnchorRule]
    ) -> list[OverlayInstance]:
        """Overlay instances for this frame, in rule order."""
        best_boxes: dict[str, tuple[float, Rect]] = {}
        for det in objects:
            known = best_boxes.get(det.label)
            if known is None or det.score > known[0]:
                best_boxes[det.label] = (det.score, det.bbox)

        instances: list[OverlayInstance] = []
        for rule in rules:
            anchored = best_boxes.get(rule.anchor_label)
            if anchored is not None:
                rect = clamp_rect(compute_rect(rule, anchored[1]), self.frame_size)
                if rect is None:
                    self._cache.pop(rule.id, None)
                    continue
                self._cache[rule.id] = (rect, 0)
                instances.append(OverlayInstance(rule.id, rule.kind, rect, False, rule.payload))
            elif rule.id in self._cache:
                rect, age = self._cache[rule.id]
                age += 1
                if age > rule.staleness_timeout_frames:
                    del self._cache[rule.id]
                    continue
                self._cache[rule.id] = (rect, age)
                instances.append(OverlayInstance(rule.id, rule.kind, rect, True, rule.payload))
        return instances


def place_overlays(
    detections: Iterable,
    rules: Sequence[AnchorRule],
    placer: OverlayPlacer,
) -> list[OverlayInstance]:
    """Functional facade over OverlayPlacer.place."""
    return placer.place(detections, rules)
