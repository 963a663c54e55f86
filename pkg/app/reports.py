import json
import math
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

MAX_VIOLATING_POINTS = 25


class SweepReport(BaseModel):
    """Outcome of checking a margin (bound minus quantity) over a grid of points."""

    model_config = ConfigDict(frozen=True)

    name: str
    grid: dict[str, Any] = Field(default_factory=dict)
    points: int = 0
    worst_margin: float | None = None
    violations: int = 0
    violating_points: list[dict[str, Any]] = Field(default_factory=list)
    details: dict[str, Any] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def merge(self, other: "SweepReport") -> "SweepReport":
        """Combines two reports on disjoint point sets; the operation is associative."""
        if self.worst_margin is None:
            worst = other.worst_margin
        elif other.worst_margin is None:
            worst = self.worst_margin
        else:
            worst = min(self.worst_margin, other.worst_margin)
        grid = {**self.grid, **other.grid}
        details = {**self.details, **other.details}
        return SweepReport(
            name=self.name,
            grid=grid,
            points=self.points + other.points,
            worst_margin=worst,
            violations=self.violations + other.violations,
            violating_points=(self.violating_points + other.violating_points)[:MAX_VIOLATING_POINTS],
            details=details,
        )


def summarize_margins(name: str, grid: dict, margins, point_of, slack=0.0, details: dict | None = None) -> SweepReport:
    """Builds a SweepReport from a margin array.

    Args:
        name: Report name.
        grid: Description of the sweep grid.
        margins: Array of margins; negative means the inequality is violated.
        point_of: Callable mapping an index to a JSON-friendly description of the point.
        slack: Scalar or per-point tolerance; a point violates when margin < -slack.
        details: Extra fields copied into the report.
    """
    margins = np.asarray(margins, dtype=float).ravel()
    slack = np.broadcast_to(np.asarray(slack, dtype=float).ravel(), margins.shape)
    bad = np.flatnonzero(~(margins >= -slack))
    return SweepReport(
        name=name,
        grid=grid,
        points=int(margins.size),
        worst_margin=float(np.min(margins)) if margins.size else None,
        violations=int(bad.size),
        violating_points=[{**point_of(int(i)), "margin": float(margins[i])} for i in bad[:MAX_VIOLATING_POINTS]],
        details=details or {},
    )


def report_from_records(name: str, records: list[dict], slack=0.0, grid: dict | None = None, details: dict | None = None) -> SweepReport:
    """SweepReport over per-instance records, each carrying its own "margin"."""
    margins = [record["margin"] for record in records]
    return summarize_margins(
        name,
        grid if grid is not None else {"instances": len(records)},
        margins,
        lambda i: {k: v for k, v in records[i].items() if k != "margin"},
        slack=slack,
        details=details,
    )


def _clean(value):
    if isinstance(value, BaseModel):
        return _clean(value.model_dump())
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def to_json(payload) -> str:
    """Deterministic JSON: sorted keys, numpy scalars unwrapped, non-finite floats as strings."""
    return json.dumps(_clean(payload), indent=2, sort_keys=True)
