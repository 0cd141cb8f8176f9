"""Pipeline configuration: one documented defaults table, file overrides.

The config file is a JSON object whose nested keys mirror the dotted
names below; command-line flags override the file, which overrides the
defaults. See README for the full key reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

DEFAULTS = {
    "smoothing": {"window": 10, "object_window": None},
    "detection": {"score_threshold": 0.5},
    "queue": {"capacity": 64},
    "runtime": {"workers": 1, "live": False, "fps_cap": 30.0, "mode_tag": "mode2"},
}


@dataclass
class PipelineConfig:
    scenario_path: Optional[str] = None
    model_path: Optional[str] = None
    rules_path: Optional[str] = None
    stream_path: Optional[str] = None
    synthetic_action: Optional[str] = None
    smoothing_window: int = 10
    object_smoothing_window: Optional[int] = None
    score_threshold: float = 0.5
    queue_capacity: int = 64
    workers: int = 1
    live_mode: bool = False
    fps_cap: float = 30.0
    mode_tag: str = "mode2"
    # Deterministic operator script: (frame_id, forced) advance requests
    # applied after that frame's evaluation.
    advance_at: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.queue_capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def effective_object_window(self) -> int:
        return self.object_smoothing_window or self.smoothing_window


def load_config_file(path: Union[str, Path]) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def config_from_sources(file_doc: Optional[dict] = None, **overrides) -> PipelineConfig:
    """Merge defaults <- config file <- keyword overrides."""

    def pick(section: str, key: str):
        if section in (file_doc or {}) and key in file_doc[section]:
            return file_doc[section][key]
        return DEFAULTS[section][key]

    merged = dict(
        smoothing_window=int(pick("smoothing", "window")),
        object_smoothing_window=pick("smoothing", "object_window"),
        score_threshold=float(pick("detection", "score_threshold")),
        queue_capacity=int(pick("queue", "capacity")),
        workers=int(pick("runtime", "workers")),
        live_mode=bool(pick("runtime", "live")),
        fps_cap=float(pick("runtime", "fps_cap")),
        mode_tag=str(pick("runtime", "mode_tag")),
    )
    if merged["object_smoothing_window"] is not None:
        merged["object_smoothing_window"] = int(merged["object_smoothing_window"])
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**merged)
