"""Pure growth computations behind the pictorial and graphical views.

Everything here is piecewise-linear over (age_months, height_cm) points:
the reference ("national average") curve, a child's own measurements, the
comparison of the two at a chosen age, the series for the height-vs-time
graph, and the pixel scaling for the two silhouettes.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

from .cohort import Measurement


class NoData(ValueError):
    """No points to interpolate from."""


class OutOfRange(ValueError):
    """Requested age lies outside the interpolable span."""

    def __init__(self, age, lo, hi):
        super().__init__(f"age {age} outside span [{lo}, {hi}]")
        self.age = age
        self.span = (lo, hi)


class InvalidInput(ValueError):
    """Non-positive or non-finite quantity where a positive one is required."""


@dataclass(frozen=True)
class Comparison:
    """Child vs. reference height at one age; delta is child minus reference."""

    age_months: float
    child_height_cm: float
    reference_height_cm: float
    delta_cm: float
    ratio: float


@dataclass(frozen=True)
class GraphSeries:
    child_points: tuple[tuple[float, float], ...]
    reference_points: tuple[tuple[float, float], ...]
    age_span: tuple[float, float]


@dataclass(frozen=True)
class SilhouettePair:
    child_px: float
    reference_px: float
    max_px: float


def _interpolate(points: Sequence[tuple[float, float]], age: float) -> float:
    """Piecewise-linear value at age over ascending points; exact at the points."""
    if not points:
        raise NoData("no points")
    ages = [p[0] for p in points]
    if age < ages[0] or age > ages[-1]:
        raise OutOfRange(age, ages[0], ages[-1])
    i = bisect_right(ages, age) - 1
    if ages[i] == age:
        return points[i][1]
    a0, v0 = points[i]
    a1, v1 = points[i + 1]
    return v0 + (v1 - v0) * (age - a0) / (a1 - a0)


def interpolate_curve(knots: Sequence[tuple[float, float]], age_months: float) -> float:
    """Reference-curve height at age_months.

    Raises OutOfRange outside the knot span and NoData on an empty knot list.
    """
    return _interpolate(knots, age_months)


def _height_points(measurements: Iterable[Measurement]) -> list[tuple[float, float]]:
    return [(m.age_months, m.height_cm) for m in measurements]


def child_height_at(measurements: Sequence[Measurement], age_months: float) -> float:
    """Child height at age_months, linear between the child's own measurements.

    A single measurement gives a degenerate span: exact at that age, OutOfRange
    everywhere else.
    """
    return _interpolate(_height_points(measurements), age_months)


def compare_at_age(
    measurements: Sequence[Measurement],
    knots: Sequence[tuple[float, float]],
    age_months: float,
) -> Comparison:
    """Compose both interpolators at one age within the spans' intersection."""
    child = child_height_at(measurements, age_months)
    reference = interpolate_curve(knots, age_months)
    return Comparison(
        age_months=age_months,
        child_height_cm=child,
        reference_height_cm=reference,
        delta_cm=child - reference,
        ratio=child / reference,
    )


def graph_series(
    measurements: Sequence[Measurement], knots: Sequence[tuple[float, float]]
) -> GraphSeries:
    """Assemble the height-vs-time series for one child.

    child_points are the raw measurements; reference_points are the knots
    restricted to the child's measured span, with interpolated values at the
    span boundaries. The span is the child's, so the two lines share an axis.
    """
    child_points = _height_points(measurements)
    if not child_points:
        raise NoData("child has no measurements")
    span_lo = child_points[0][0]
    span_hi = child_points[-1][0]

    reference_points: list[tuple[float, float]] = []
    if knots:
        lo = max(span_lo, knots[0][0])
        hi = min(span_hi, knots[-1][0])
        if lo <= hi:
            reference_points.append((lo, _interpolate(knots, lo)))
            reference_points.extend((a, v) for a, v in knots if lo < a < hi)
            if hi > lo:
                reference_points.append((hi, _interpolate(knots, hi)))

    return GraphSeries(
        child_points=tuple(child_points),
        reference_points=tuple(reference_points),
        age_span=(span_lo, span_hi),
    )


def silhouette_heights(child_cm: float, reference_cm: float, max_px: float) -> SilhouettePair:
    """Scale the two heights into pixels so the taller one fills max_px exactly."""
    for name, value in (("child_cm", child_cm), ("reference_cm", reference_cm), ("max_px", max_px)):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise InvalidInput(f"{name} must be a positive finite number, got {value!r}")
    if child_cm >= reference_cm:
        pair = (max_px, max_px * reference_cm / child_cm)
    else:
        pair = (max_px * child_cm / reference_cm, max_px)
    return SilhouettePair(child_px=pair[0], reference_px=pair[1], max_px=max_px)
