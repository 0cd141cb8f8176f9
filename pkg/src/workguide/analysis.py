"""Session metrics and study statistics.

A finished session condenses into a SessionReport: timings, error counts
by category and the event timeline. Groups of reports feed one-way ANOVA
(F statistic plus the exact tail probability from
:mod:`workguide.fdist`), per-iteration learning curves and a windowed
convergence detector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping, Optional, Sequence, Union

from . import fdist
from .scenario import ERROR_CATEGORY_NAMES, GuidanceEvent

REPORT_VERSION = 1


@dataclass
class SessionReport:
    scenario_id: str
    mode_tag: str
    completed: bool
    aborted: bool
    total_time_s: float
    per_step_durations_s: list
    error_counts: dict
    frames_processed: int
    steps_validated: int
    events: list = field(default_factory=list)

    @property
    def total_errors(self) -> int:
        return sum(self.error_counts.values())

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "scenario_id": self.scenario_id,
            "mode_tag": self.mode_tag,
            "completed": self.completed,
            "aborted": self.aborted,
            "total_time_s": self.total_time_s,
            "per_step_durations_s": self.per_step_durations_s,
            "error_counts": self.error_counts,
            "frames_processed": self.frames_processed,
            "steps_validated": self.steps_validated,
            "events": [e.to_dict() for e in self.events],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_dict(doc: dict) -> "SessionReport":
        return SessionReport(
            scenario_id=doc["scenario_id"],
            mode_tag=doc["mode_tag"],
            completed=doc["completed"],
            aborted=doc["aborted"],
            total_time_s=doc["total_time_s"],
            per_step_durations_s=doc["per_step_durations_s"],
            error_counts=doc["error_counts"],
            frames_processed=doc["frames_processed"],
            steps_validated=doc["steps_validated"],
            events=[GuidanceEvent.from_dict(e) for e in doc.get("events", [])],
        )


def write_report(report: SessionReport, path: Union[str, Path]) -> None:
    Path(path).write_text(report.to_json() + "\n", encoding="ascii")


def read_report(source: Union[str, Path, IO[str]]) -> SessionReport:
    if hasattr(source, "read"):
        text = source.read()  # type: ignore[union-attr]
    else:
        text = Path(source).read_text(encoding="ascii")
    return SessionReport.from_dict(json.loads(text))


SESSIONS_TABLE_COLUMNS = (
    "scenario_id", "mode_tag", "iteration", "completed",
    "total_time_s", "errors_total", "steps_validated",
)


def write_sessions_table(
    reports: Mapping[str, Sequence[SessionReport]], sink: Union[str, Path, IO[str]]
) -> None:
    """Combined tab-separated table over all modes, one session per row."""

    def _write(fh: IO[str]) -> None:
        fh.write("\t".join(SESSIONS_TABLE_COLUMNS) + "\n")
        for mode in sorted(reports):
            for iteration, report in enumerate(reports[mode], start=1):
                fh.write("\t".join(str(v) for v in (
                    report.scenario_id, mode, iteration, int(report.completed),
                    report.total_time_s, report.total_errors, report.steps_validated,
                )) + "\n")

    if hasattr(sink, "write"):
        _write(sink)  # type: ignore[arg-type]
    else:
        with open(sink, "w", encoding="ascii") as fh:
            _write(fh)


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    p_value: float
    df_between: int
    df_within: int
    group_means: tuple

    def to_dict(self) -> dict:
        return {
            "F": self.f_statistic,
            "p": self.p_value,
            "df_between": self.df_between,
            "df_within": self.df_within,
            "group_means": list(self.group_means),
        }


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """Classic one-way ANOVA across independent groups.

    F = MS_between / MS_within; the p value is the F-distribution
    survival function evaluated through the regularized incomplete beta.
    """
    if len(groups) < 2:
        raise ValueError(f"ANOVA needs at least 2 groups, got {len(groups)}")
    data = [[float(v) for v in g] for g in groups]
    for i, g in enumerate(data):
        if len(g) < 2:
            raise ValueError(f"group {i} has {len(g)} values; need at least 2")
    n_total = sum(len(g) for g in data)
    grand_mean = sum(sum(g) for g in data) / n_total
    means = [sum(g) / len(g) for g in data]
    ss_between = sum(len(g) * (m - grand_mean) ** 2 for g, m in zip(data, means))
    ss_within = sum(
        sum((v - m) ** 2 for v in g) for g, m in zip(data, means)
    )
    df_between = len(data) - 1
    df_within = n_total - len(data)
    if ss_within <= 0.0:
        raise ValueError("within-group variance is zero; F is undefined")
    f_stat = (ss_between / df_between) / (ss_within / df_within)
    p = fdist.f_survival(f_stat, df_between, df_within)
    return AnovaResult(
        f_statistic=f_stat,
        p_value=p,
        df_between=df_between,
        df_within=df_within,
        group_means=tuple(means),
    )


@dataclass(frozen=True)
class LearningCurve:
    """Per-iteration completion-time summary for one mode."""

    mean: tuple
    minimum: tuple
    maximum: tuple

    def __len__(self) -> int:
        return len(self.mean)


def aggregate_learning_curve(
    reports_by_mode: Mapping[str, Sequence[Sequence[SessionReport]]],
) -> dict[str, LearningCurve]:
    """Mean/min/max completion time per iteration per mode.

    Input per mode: one list per iteration holding that iteration's
    repetitions (e.g. one report per participant).
    """
    if not reports_by_mode:
        raise ValueError("no reports given")
    scenario_ids = set()
    curves: dict[str, LearningCurve] = {}
    for mode, iterations in reports_by_mode.items():
        if not iterations:
            raise ValueError(f"mode {mode!r} has no iterations")
        means, mins, maxs = [], [], []
        for idx, batch in enumerate(iterations, start=1):
            if not batch:
                raise ValueError(f"mode {mode!r} iteration {idx} is empty")
            times = [r.total_time_s for r in batch]
            scenario_ids.update(r.scenario_id for r in batch)
            means.append(sum(times) / len(times))
            mins.append(min(times))
            maxs.append(max(times))
        curves[mode] = LearningCurve(tuple(means), tuple(mins), tuple(maxs))
    if len(scenario_ids) > 1:
        raise ValueError(f"reports mix scenarios: {sorted(scenario_ids)}")
    return curves


def convergence_iteration(
    curve: Sequence[float], epsilon: float, window: int
) -> Optional[int]:
    """First 1-based iteration where the curve stays within ``epsilon``.

    Returns the smallest i such that max(curve[i..i+window-1]) -
    min(...) < epsilon over the 1-indexed curve, or None when the curve
    never settles.
    """
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    if len(curve) < window + 1:
        raise ValueError(
            f"curve has {len(curve)} points; need at least window + 1 = {window + 1}"
        )
    values = [float(v) for v in curve]
    for start in range(0, len(values) - window + 1):
        chunk = values[start : start + window]
        if max(chunk) - min(chunk) < epsilon:
            return start + 1
    return None


def error_rate_series(reports: Sequence[SessionReport]) -> list[int]:
    """Total error count per session, in the given order."""
    return [r.total_errors for r in reports]


__all__ = [
    "AnovaResult", "LearningCurve", "SessionReport",
    "aggregate_learning_curve", "convergence_iteration", "error_rate_series",
    "one_way_anova", "read_report", "write_report", "write_sessions_table",
    "ERROR_CATEGORY_NAMES",
]
