"""workguide: real-time workflow guidance from object and skeleton detections."""

from importlib.resources import files
from pathlib import Path

__version__ = "0.1.0"


def asset_path(name: str) -> Path:
    """Filesystem path of a bundled asset (golden scenario, rules, model...)."""
    return Path(str(files("workguide").joinpath("assets", name)))
