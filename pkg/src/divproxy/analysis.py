"""Calibration analysis: cumulative failure-vs-measure curves and OLS fits.

A cumulative-max curve reports, for each measure threshold t (ascending), the
failure probability among observations with measure <= t; cumulative-min
mirrors it with measure >= t, descending. Points appear only once they cover
at least ``min_bucket`` observations; thresholds below that support are
merged upward into the first emitted point.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import DataError, UsageError

DIRECTIONS = ("cumulative_min", "cumulative_max")

DEFAULT_MIN_BUCKET = 100
DEFAULT_TEMPERATURES = (0.3, 0.5, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class LabeledObservation:
    measure_value: float
    failed: bool
    question_id: str = ""
    temperature: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.measure_value):
            raise UsageError(f"measure value must be finite, got {self.measure_value}")


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    failure_probability: float
    support: int


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class CalibrationCurve:
    direction: str
    points: tuple[CurvePoint, ...]
    fit: Optional[LinearFit]


def linear_fit(points: Sequence[tuple[float, float]]) -> LinearFit:
    """Ordinary least squares y = slope*x + intercept with R^2.

    All-equal y is an exact fit by convention (slope 0, R^2 = 1); all-equal x
    is degenerate and rejected.
    """
    if len(points) < 2:
        raise UsageError("need at least 2 points to fit a line")
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    if max(xs) == min(xs):
        raise UsageError("cannot fit a line when every x is identical")
    if max(ys) == min(ys):
        return LinearFit(slope=0.0, intercept=ys[0], r_squared=1.0)
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    return LinearFit(slope=slope, intercept=intercept, r_squared=1.0 - ss_res / ss_tot)


def cumulative_curve(
    obs: Sequence[LabeledObservation],
    direction: str,
    min_bucket: int = DEFAULT_MIN_BUCKET,
) -> CalibrationCurve:
    """Failure probability as a function of a moving measure threshold."""
    if direction not in DIRECTIONS:
        raise UsageError(f"unknown direction {direction!r}, expected one of {DIRECTIONS}")
    if min_bucket < 1:
        raise UsageError("min_bucket must be >= 1")
    if len(obs) < min_bucket:
        raise UsageError(f"{len(obs)} observations < min_bucket={min_bucket}")

    ascending = direction == "cumulative_max"
    ordered = sorted(obs, key=lambda o: o.measure_value, reverse=not ascending)

    points: list[CurvePoint] = []
    support = 0
    failures = 0
    i = 0
    n = len(ordered)
    while i < n:
        threshold = ordered[i].measure_value
        # Absorb every observation sharing this distinct measure value.
        while i < n and ordered[i].measure_value == threshold:
            support += 1
            failures += ordered[i].failed
            i += 1
        if support >= min_bucket:
            points.append(CurvePoint(threshold=threshold, failure_probability=failures / support, support=support))

    fit = None
    if len(points) >= 2 and points[0].threshold != points[-1].threshold:
        fit = linear_fit([(p.threshold, p.failure_probability) for p in points])
    return CalibrationCurve(direction=direction, points=tuple(points), fit=fit)


@dataclass(frozen=True)
class MeasureRow:
    """One graded question from a measurement run."""

    question_id: str
    temperature: float
    measures: dict[str, float]
    failed: bool


@dataclass(frozen=True)
class CalibrationReport:
    # keyed (measure, temperature, direction)
    curves: dict[tuple[str, float, str], CalibrationCurve]

    def to_summary(self) -> dict:
        summary = []
        for (measure, temperature, direction), curve in sorted(self.curves.items()):
            entry = {
                "measure": measure,
                "temperature": temperature,
                "direction": direction,
                "n_points": len(curve.points),
                "fit": None,
            }
            if curve.fit is not None:
                entry["fit"] = {
                    "slope": curve.fit.slope,
                    "intercept": curve.fit.intercept,
                    "r_squared": curve.fit.r_squared,
                }
            summary.append(entry)
        return {"curves": summary}


def calibration_suite(
    rows: Sequence[MeasureRow],
    measures: Sequence[str],
    directions: Sequence[str] = DIRECTIONS,
    min_bucket: int = DEFAULT_MIN_BUCKET,
) -> CalibrationReport:
    """One curve + fit per (temperature, measure, direction) over the rows."""
    for direction in directions:
        if direction not in DIRECTIONS:
            raise UsageError(f"unknown direction {direction!r}")
    temperatures = sorted({row.temperature for row in rows})
    curves: dict[tuple[str, float, str], CalibrationCurve] = {}
    for temperature in temperatures:
        at_temp = [row for row in rows if row.temperature == temperature]
        for measure in measures:
            obs = [
                LabeledObservation(
                    measure_value=row.measures[measure],
                    failed=row.failed,
                    question_id=row.question_id,
                    temperature=temperature,
                )
                for row in at_temp
                if measure in row.measures
            ]
            if not obs:
                continue
            if len(obs) < min_bucket:
                raise DataError(
                    f"measure {measure!r} at temperature {temperature}: "
                    f"{len(obs)} observations < min_bucket={min_bucket}"
                )
            for direction in directions:
                curves[(measure, temperature, direction)] = cumulative_curve(obs, direction, min_bucket)
    return CalibrationReport(curves=curves)


def write_calibration_csv(report: CalibrationReport, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["direction", "measure", "temperature", "threshold", "failure_probability", "support"])
        for (measure, temperature, direction), curve in sorted(report.curves.items()):
            for point in curve.points:
                writer.writerow(
                    [direction, measure, temperature, point.threshold, point.failure_probability, point.support]
                )


def write_calibration_json(report: CalibrationReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
