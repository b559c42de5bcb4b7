"""Shared fixtures: a desk-scale cohort (3 mothers, 5 children, 40 measurements,
25-knot reference) plus an installed service state with known tokens."""

from __future__ import annotations

import pytest

from bibmobile.cohort import format_timestamp, parse_cohort_file, parse_timestamp
from bibmobile.service import ServiceState

T1 = "2015-08-01T00:00:00Z"
T2 = "2015-09-01T00:00:00Z"

# mother -> children, fixed fixture shape
FIXTURE_FAMILIES = {
    "M001": ["C001", "C002"],
    "M002": ["C003", "C004"],
    "M003": ["C005"],
}

FIXTURE_TOKENS = {
    "TK-0001": "M001",
    "TK-0002": "M002",
    "TK-0003": "M003",
}

MEASUREMENT_AGES = [0, 3, 6, 9, 12, 18, 24, 36]

# Per-child scale relative to the reference curve; synthetic, no claim made.
CHILD_SCALE = {"C001": 0.98, "C002": 1.03, "C003": 1.00, "C004": 0.95, "C005": 1.05}


def reference_height(age_months: float) -> float:
    """Synthetic national-average height, monotone over 0..240 months."""
    return round(50.0 + 128.0 * (age_months / 240.0) ** 0.7, 1)


def fixture_reference_knots() -> list[tuple[int, float]]:
    return [(age, reference_height(age)) for age in range(0, 250, 10)]  # 25 knots


def build_cohort_text(update_date: str = T1, families: dict | None = None,
                      ages: list[int] | None = None) -> str:
    families = FIXTURE_FAMILIES if families is None else families
    ages = MEASUREMENT_AGES if ages is None else ages
    lines = ["; synthetic fixture cohort", "#UPDATE", update_date, "#MOTHERS"]
    lines.extend(families.keys())
    lines.append("#CHILDREN")
    for mother, children in families.items():
        lines.extend(f"{child},{mother}" for child in children)
    lines.append("#MEASUREMENTS")
    for children in families.values():
        for child in children:
            scale = CHILD_SCALE.get(child, 1.0)
            for age in ages:
                height = round(reference_height(age) * scale, 1)
                weight = round(3.5 + 0.35 * age, 1)
                lines.append(f"{child},{age},{height},{weight}")
    lines.append("#REFERENCE")
    lines.extend(f"{age},{h}" for age, h in fixture_reference_knots())
    return "\n".join(lines) + "\n"


@pytest.fixture
def cohort_text() -> str:
    return build_cohort_text()


@pytest.fixture
def snapshot(cohort_text):
    return parse_cohort_file(cohort_text)


def install_tokens(state: ServiceState, tokens: dict[str, str] | None = None) -> None:
    """Install the well-known fixture tokens directly into the table."""
    tokens = FIXTURE_TOKENS if tokens is None else tokens
    for token, mother_id in tokens.items():
        state.tokens.entries[state.tokens.fingerprint(token)] = mother_id
    state.tokens.save(state.token_table_path)


@pytest.fixture
def state(tmp_path, snapshot) -> ServiceState:
    """A ServiceState over a tmp data dir with the fixture snapshot installed."""
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    st = ServiceState(str(data_dir))
    st.swap_snapshot(snapshot)
    install_tokens(st)
    return st


def bump_timestamp(stamp: str, months: int = 0, seconds: int = 1) -> str:
    """A strictly-later fixture timestamp."""
    from datetime import timedelta

    ts = parse_timestamp(stamp) + timedelta(days=31 * months, seconds=seconds)
    return format_timestamp(ts)
