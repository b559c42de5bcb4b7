"""Anonymized cohort data model and the sectioned flat-file that delivers it.

The cohort arrives as a UTF-8 text file with five sections (#UPDATE, #MOTHERS,
#CHILDREN, #MEASUREMENTS, #REFERENCE). Identities are opaque IDs only; there
is no name column anywhere in the format.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from datetime import datetime, timezone

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

# Ingest sanity bounds; records outside these fail validation, never clamped.
AGE_MONTHS_MAX = 240
HEIGHT_CM_MIN = 20.0
HEIGHT_CM_MAX = 220.0
WEIGHT_KG_MIN = 0.5
WEIGHT_KG_MAX = 150.0

SECTION_HEADERS = ("#UPDATE", "#MOTHERS", "#CHILDREN", "#MEASUREMENTS", "#REFERENCE")


class CohortSyntaxError(ValueError):
    """Malformed cohort file: bad header, field count, number or timestamp."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def parse_timestamp(text: str) -> datetime:
    """Parse a strict ISO-8601 UTC timestamp at second precision (trailing Z)."""
    ts = datetime.strptime(text, TIMESTAMP_FORMAT)
    return ts.replace(tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    """Render a timestamp in the file's UTC second-precision form."""
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc)
    return ts.strftime(TIMESTAMP_FORMAT)


@dataclass(frozen=True)
class MotherRecord:
    """One enrolled mother; children listed in file order."""

    mother_id: str
    child_ids: tuple[str, ...]


@dataclass(frozen=True)
class ChildRecord:
    child_id: str
    mother_id: str


@dataclass(frozen=True)
class Measurement:
    """One height/weight reading at an age point (months, cm, kg)."""

    child_id: str
    age_months: int
    height_cm: float
    weight_kg: float


@dataclass(frozen=True)
class ReferenceCurve:
    """The national-average metric as piecewise-linear knots over age."""

    metric: str
    knots: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class DatasetSnapshot:
    """The complete cohort at one update date; immutable, the unit of sync."""

    update_date: datetime
    mothers: tuple[MotherRecord, ...]
    children: tuple[ChildRecord, ...]
    measurements: tuple[Measurement, ...]
    reference: ReferenceCurve


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple[tuple[str, str], ...]  # (record locator, rule violated)


def _parse_int(part: str, line_no: int, what: str) -> int:
    try:
        return int(part)
    except ValueError:
        raise CohortSyntaxError(line_no, f"{what} is not an integer: {part!r}") from None


def _parse_decimal(part: str, line_no: int, what: str) -> float:
    try:
        value = float(part)
    except ValueError:
        raise CohortSyntaxError(line_no, f"{what} is not a number: {part!r}") from None
    if not math.isfinite(value):
        raise CohortSyntaxError(line_no, f"{what} is not finite: {part!r}")
    return value


def _split_row(line: str, line_no: int, expected: int) -> list[str]:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != expected:
        raise CohortSyntaxError(line_no, f"expected {expected} field(s), got {len(parts)}")
    for p in parts:
        if not p:
            raise CohortSyntaxError(line_no, "empty field")
    return parts


def parse_cohort_file(text: str | bytes) -> DatasetSnapshot:
    """Parse a cohort file into a snapshot, checking syntax only.

    Semantic rules (uniqueness, referential integrity, sanity bounds) are the
    job of validate_snapshot. Raises CohortSyntaxError on malformed input.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CohortSyntaxError(0, f"not valid UTF-8: {exc}") from None

    update_date: datetime | None = None
    mother_ids: list[str] = []
    children: list[ChildRecord] = []
    measurements: list[Measurement] = []
    knots: list[tuple[int, float]] = []
    seen: set[str] = set()
    section: str | None = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("#"):
            if line not in SECTION_HEADERS:
                raise CohortSyntaxError(line_no, f"unknown section header {line!r}")
            if line in seen:
                raise CohortSyntaxError(line_no, f"duplicate section {line}")
            seen.add(line)
            section = line
            continue
        if section is None:
            raise CohortSyntaxError(line_no, "data before any section header")

        if section == "#UPDATE":
            if update_date is not None:
                raise CohortSyntaxError(line_no, "more than one update timestamp")
            try:
                update_date = parse_timestamp(line)
            except ValueError:
                raise CohortSyntaxError(line_no, f"bad timestamp {line!r}") from None
        elif section == "#MOTHERS":
            (mother_id,) = _split_row(line, line_no, 1)
            mother_ids.append(mother_id)
        elif section == "#CHILDREN":
            child_id, mother_id = _split_row(line, line_no, 2)
            children.append(ChildRecord(child_id, mother_id))
        elif section == "#MEASUREMENTS":
            child_id, age, height, weight = _split_row(line, line_no, 4)
            measurements.append(
                Measurement(
                    child_id,
                    _parse_int(age, line_no, "age_months"),
                    _parse_decimal(height, line_no, "height_cm"),
                    _parse_decimal(weight, line_no, "weight_kg"),
                )
            )
        else:  # #REFERENCE
            age, height = _split_row(line, line_no, 2)
            knots.append((_parse_int(age, line_no, "age_months"), _parse_decimal(height, line_no, "height_cm")))

    missing = [h for h in SECTION_HEADERS if h not in seen]
    if missing:
        raise CohortSyntaxError(0, f"missing section(s): {', '.join(missing)}")
    if update_date is None:
        raise CohortSyntaxError(0, "#UPDATE section has no timestamp")

    by_mother: dict[str, list[str]] = {m: [] for m in mother_ids}
    for child in children:
        by_mother.setdefault(child.mother_id, []).append(child.child_id)
    mothers = tuple(MotherRecord(m, tuple(by_mother[m])) for m in mother_ids)

    return DatasetSnapshot(
        update_date=update_date,
        mothers=mothers,
        children=tuple(children),
        measurements=tuple(measurements),
        reference=ReferenceCurve(metric="height", knots=tuple(knots)),
    )


def serialize_snapshot(s: DatasetSnapshot) -> str:
    """Emit the canonical cohort-file text for a snapshot (parse's inverse)."""
    lines = ["#UPDATE", format_timestamp(s.update_date), "#MOTHERS"]
    lines.extend(m.mother_id for m in s.mothers)
    lines.append("#CHILDREN")
    lines.extend(f"{c.child_id},{c.mother_id}" for c in s.children)
    lines.append("#MEASUREMENTS")
    lines.extend(
        f"{m.child_id},{m.age_months},{m.height_cm!r},{m.weight_kg!r}" for m in s.measurements
    )
    lines.append("#REFERENCE")
    lines.extend(f"{age},{height!r}" for age, height in s.reference.knots)
    return "\n".join(lines) + "\n"


def snapshot_digest(s: DatasetSnapshot) -> str:
    """SHA-256 of the canonical serialization; equal iff snapshots are equal."""
    return hashlib.sha256(serialize_snapshot(s).encode("utf-8")).hexdigest()


def validate_snapshot(s: DatasetSnapshot) -> ValidationReport:
    """Check every semantic invariant; violations are data, not exceptions."""
    errors: list[tuple[str, str]] = []

    mother_ids = [m.mother_id for m in s.mothers]
    mother_set = set()
    for m in s.mothers:
        loc = f"mother {m.mother_id}"
        if not m.mother_id:
            errors.append((loc, "mother_id is empty"))
        if m.mother_id in mother_set:
            errors.append((loc, "duplicate mother_id"))
        mother_set.add(m.mother_id)
        if not m.child_ids:
            errors.append((loc, "mother has no children in the subset"))
        if len(set(m.child_ids)) != len(m.child_ids):
            errors.append((loc, "duplicate child_id under one mother"))

    child_set = set()
    for c in s.children:
        loc = f"child {c.child_id}"
        if not c.child_id:
            errors.append((loc, "child_id is empty"))
        if c.child_id in child_set:
            errors.append((loc, "duplicate child_id"))
        child_set.add(c.child_id)
        if c.mother_id not in mother_set:
            errors.append((loc, f"mother_id {c.mother_id} not in #MOTHERS"))

    seen_points = set()
    for m in s.measurements:
        loc = f"measurement {m.child_id}@{m.age_months}"
        if m.child_id not in child_set:
            errors.append((loc, f"child_id {m.child_id} not in #CHILDREN"))
        if (m.child_id, m.age_months) in seen_points:
            errors.append((loc, "duplicate (child_id, age_months)"))
        seen_points.add((m.child_id, m.age_months))
        if not 0 <= m.age_months <= AGE_MONTHS_MAX:
            errors.append((loc, f"age_months outside [0, {AGE_MONTHS_MAX}]"))
        if not HEIGHT_CM_MIN <= m.height_cm <= HEIGHT_CM_MAX:
            errors.append((loc, f"height_cm outside [{HEIGHT_CM_MIN}, {HEIGHT_CM_MAX}]"))
        if not WEIGHT_KG_MIN <= m.weight_kg <= WEIGHT_KG_MAX:
            errors.append((loc, f"weight_kg outside [{WEIGHT_KG_MIN}, {WEIGHT_KG_MAX}]"))

    knots = s.reference.knots
    if len(knots) < 2:
        errors.append(("reference", "fewer than 2 knots"))
    for i, (age, height) in enumerate(knots):
        loc = f"reference knot {i}"
        if i > 0 and age <= knots[i - 1][0]:
            errors.append((loc, "knot ages not strictly increasing"))
        if not HEIGHT_CM_MIN <= height <= HEIGHT_CM_MAX:
            errors.append((loc, f"height_cm outside [{HEIGHT_CM_MIN}, {HEIGHT_CM_MAX}]"))

    return ValidationReport(ok=not errors, errors=tuple(errors))


def lookup_children(s: DatasetSnapshot, mother_id: str) -> list[ChildRecord]:
    """All children of one mother, in file order; [] if the mother is unknown."""
    return [c for c in s.children if c.mother_id == mother_id]


def lookup_measurements(s: DatasetSnapshot, child_id: str) -> list[Measurement]:
    """One child's measurements sorted ascending by age; [] if unknown."""
    return sorted(
        (m for m in s.measurements if m.child_id == child_id), key=lambda m: m.age_months
    )
