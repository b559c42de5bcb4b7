"""Device-side sync engine: local store, update-date comparison, delete-and-reload.

The server is the only writer of cohort data; this client only ever reads.
A refresh empties the store first and installs the fetched slice in a single
atomic file write, so the store is always either empty-with-no-date or a
complete mother-scoped slice of exactly one server snapshot.
"""

from __future__ import annotations

import re
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from datetime import datetime

from . import soapwire
from .cohort import (
    Measurement,
    ReferenceCurve,
    format_timestamp,
    parse_timestamp,
    _parse_decimal,
    _parse_int,
    _split_row,
)
from .fsutil import write_private

FETCH_RETRIES = 5

STORE_SECTIONS = ("#TOKEN", "#MOTHER", "#UPDATE", "#CHILDREN", "#MEASUREMENTS", "#REFERENCE")


class SyncError(Exception):
    pass


class AuthError(SyncError):
    """Server rejected the token."""


class NetworkError(SyncError):
    """Endpoint unreachable or connection dropped."""


class ProtocolError(SyncError):
    """Fault or malformed/unexpected response from the endpoint."""


class Busy(SyncError):
    """A sync is already in flight on this store."""


class EmptyStore(SyncError):
    """Local read before the first successful sync."""


@dataclass(frozen=True)
class SyncOutcome:
    kind: str  # "InitialLoad" | "NoChange" | "FullRefresh"
    new_update_date: datetime


def needs_refresh(local: datetime | None, server: datetime) -> bool:
    """True iff there is no local data yet or the server is strictly newer."""
    return local is None or server > local


class HttpEndpoint:
    """Wire client for the real HTTP endpoint (POST {base_url}/soap)."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def call(self, action, params=(), token=None):
        body = soapwire.encode_request(
            soapwire.RequestEnvelope(action=action, params=tuple(params), auth_token=token)
        )
        request = urllib.request.Request(
            f"{self.base_url}/soap",
            data=body,
            headers={
                "Content-Type": "text/xml; charset=utf-8",
                "SOAPAction": f'"{soapwire.APP_NS}#{action}"',
            },
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            payload = exc.read()
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise NetworkError(str(exc)) from None
        return _decode_reply(payload, action)


class InProcessEndpoint:
    """Endpoint bound directly to a ServiceState; same wire bytes, no socket."""

    def __init__(self, state):
        self.state = state

    def call(self, action, params=(), token=None):
        body = soapwire.encode_request(
            soapwire.RequestEnvelope(action=action, params=tuple(params), auth_token=token)
        )
        _, payload = self.state.dispatch(body)
        return _decode_reply(payload, action)


def _decode_reply(payload: bytes, action: str) -> tuple[tuple[str, str], ...]:
    try:
        reply = soapwire.decode_response(payload)
    except (soapwire.MalformedXml, soapwire.InvalidEnvelope) as exc:
        raise ProtocolError(f"undecodable response: {exc}") from None
    if isinstance(reply, soapwire.FaultEnvelope):
        if reply.fault_code == "Client.AuthFailed":
            raise AuthError(reply.fault_string)
        raise ProtocolError(f"{reply.fault_code}: {reply.fault_string}")
    if reply.action != action:
        raise ProtocolError(f"response for {reply.action!r}, expected {action!r}")
    return reply.fields


def _field(fields, name: str) -> str:
    for key, value in fields:
        if key == name:
            return value
    raise ProtocolError(f"response missing field {name!r}")


def _indexed(fields, pattern: str) -> dict[int, dict[str, str]]:
    """Group `Name.<i>` / `Name.<i>.<part>` fields by index."""
    rx = re.compile(pattern)
    groups: dict[int, dict[str, str]] = {}
    for key, value in fields:
        m = rx.fullmatch(key)
        if m is None:
            raise ProtocolError(f"unexpected field {key!r}")
        idx = int(m.group(1))
        part = m.group(2) if m.lastindex and m.lastindex >= 2 else ""
        groups.setdefault(idx, {})[part] = value
    return groups


class LocalStore:
    """The on-device store file: remembered token plus one snapshot slice.

    All mutations rewrite the file atomically with owner-only permissions.
    """

    def __init__(self, path: str):
        self.path = path
        self._sync_lock = threading.Lock()
        self.remembered_token: str | None = None
        self._clear_data()
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            return
        self._load(text)

    def _clear_data(self) -> None:
        self.update_date: datetime | None = None
        self.mother_id: str | None = None
        self.children: list[str] = []
        self.measurements: dict[str, list[Measurement]] = {}
        self.reference: ReferenceCurve | None = None

    @property
    def is_populated(self) -> bool:
        return self.update_date is not None

    # -- persistence ----------------------------------------------------------

    def _load(self, text: str) -> None:
        section = None
        rows: dict[str, list[tuple[int, str]]] = {h: [] for h in STORE_SECTIONS}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith(";"):
                continue
            if line.startswith("#"):
                if line not in STORE_SECTIONS:
                    raise ValueError(f"{self.path}:{line_no}: unknown section {line!r}")
                section = line
                continue
            if section is None:
                raise ValueError(f"{self.path}:{line_no}: data before any section")
            rows[section].append((line_no, line))

        def single(header: str) -> str | None:
            got = rows[header]
            if len(got) > 1:
                raise ValueError(f"{self.path}: section {header} must have at most one row")
            return got[0][1] if got else None

        token = single("#TOKEN")
        self.remembered_token = token
        stamp = single("#UPDATE")
        mother = single("#MOTHER")

        children = []
        for line_no, line in rows["#CHILDREN"]:
            child_id, _ = _split_row(line, line_no, 2)
            children.append(child_id)
        measurements: dict[str, list[Measurement]] = {}
        for line_no, line in rows["#MEASUREMENTS"]:
            child_id, age, height, weight = _split_row(line, line_no, 4)
            measurements.setdefault(child_id, []).append(
                Measurement(
                    child_id,
                    _parse_int(age, line_no, "age_months"),
                    _parse_decimal(height, line_no, "height_cm"),
                    _parse_decimal(weight, line_no, "weight_kg"),
                )
            )
        knots = []
        for line_no, line in rows["#REFERENCE"]:
            age, height = _split_row(line, line_no, 2)
            knots.append((_parse_int(age, line_no, "age_months"), _parse_decimal(height, line_no, "height_cm")))

        has_data = bool(children or measurements or knots or mother)
        if (stamp is None) and has_data:
            raise ValueError(f"{self.path}: data sections present without an update date")
        if stamp is not None and not has_data:
            raise ValueError(f"{self.path}: update date present but no data sections")
        if stamp is not None:
            self.update_date = parse_timestamp(stamp)
            self.mother_id = mother
            self.children = children
            for series in measurements.values():
                series.sort(key=lambda m: m.age_months)
            self.measurements = measurements
            self.reference = ReferenceCurve(metric="height", knots=tuple(knots))

    def _persist(self) -> None:
        lines = ["#TOKEN"]
        if self.remembered_token is not None:
            lines.append(self.remembered_token)
        lines.append("#MOTHER")
        if self.mother_id is not None:
            lines.append(self.mother_id)
        lines.append("#UPDATE")
        if self.update_date is not None:
            lines.append(format_timestamp(self.update_date))
        lines.append("#CHILDREN")
        if self.mother_id is not None:
            lines.extend(f"{c},{self.mother_id}" for c in self.children)
        lines.append("#MEASUREMENTS")
        for child_id in self.children:
            lines.extend(
                f"{m.child_id},{m.age_months},{m.height_cm!r},{m.weight_kg!r}"
                for m in self.measurements.get(child_id, [])
            )
        lines.append("#REFERENCE")
        if self.reference is not None:
            lines.extend(f"{age},{height!r}" for age, height in self.reference.knots)
        write_private(self.path, "\n".join(lines) + "\n")

    # -- token persistence ------------------------------------------------------

    def remember_token(self, token: str) -> None:
        self.remembered_token = token
        self._persist()

    def forget_token(self) -> None:
        self.remembered_token = None
        self._persist()

    # -- offline reads ----------------------------------------------------------

    def local_children(self) -> list[str]:
        if not self.is_populated:
            raise EmptyStore("no synced data")
        return list(self.children)

    def local_measurements(self, child_id: str) -> list[Measurement]:
        if not self.is_populated:
            raise EmptyStore("no synced data")
        return list(self.measurements.get(child_id, []))

    def local_reference(self) -> ReferenceCurve:
        if not self.is_populated:
            raise EmptyStore("no synced data")
        return self.reference


def _fetch_timestamp(endpoint, token) -> datetime:
    value = _field(endpoint.call("GetLastUpdate", token=token), "updateDate")
    try:
        return parse_timestamp(value)
    except ValueError:
        raise ProtocolError(f"bad updateDate {value!r}") from None


def _fetch_slice(endpoint, token):
    """Fetch the authenticated mother's children, measurements and reference."""
    children_fields = endpoint.call("GetChildren", token=token)
    groups = _indexed(children_fields, r"Child\.(\d+)")
    try:
        children = [groups[i][""] for i in sorted(groups)]
    except KeyError as exc:
        raise ProtocolError(f"bad child field: {exc}") from None

    measurements: dict[str, list[Measurement]] = {}
    for child_id in children:
        fields = endpoint.call("GetMeasurements", (("childId", child_id),), token=token)
        rows = _indexed(fields, r"Measurement\.(\d+)\.([A-Za-z]+)")
        series = []
        try:
            for i in sorted(rows):
                row = rows[i]
                series.append(
                    Measurement(
                        child_id,
                        int(row["ageMonths"]),
                        float(row["heightCm"]),
                        float(row["weightKg"]),
                    )
                )
        except (KeyError, ValueError) as exc:
            raise ProtocolError(f"bad measurement row: {exc}") from None
        measurements[child_id] = series

    knot_fields = endpoint.call("GetReferenceCurve", token=token)
    rows = _indexed(knot_fields, r"Knot\.(\d+)\.([A-Za-z]+)")
    try:
        knots = tuple((int(rows[i]["ageMonths"]), float(rows[i]["heightCm"])) for i in sorted(rows))
    except (KeyError, ValueError) as exc:
        raise ProtocolError(f"bad reference knot: {exc}") from None
    return children, measurements, ReferenceCurve(metric="height", knots=knots)


def sync(store: LocalStore, token: str, endpoint) -> SyncOutcome:
    """Run one sync: compare update dates, delete-and-reload if the server is newer.

    Failure after the delete step leaves the store empty-with-no-date (never
    half-populated); failure before it leaves the store untouched.
    """
    if not store._sync_lock.acquire(blocking=False):
        raise Busy("sync already in flight")
    try:
        was_populated = store.is_populated

        auth_fields = endpoint.call("Authenticate", token=token)
        mother_id = _field(auth_fields, "motherId")
        server_date = _fetch_timestamp(endpoint, token)

        if not needs_refresh(store.update_date, server_date):
            return SyncOutcome(kind="NoChange", new_update_date=store.update_date)

        # Delete phase: from here on the store is observably empty until the
        # full slice lands in one atomic write.
        store._clear_data()
        store._persist()

        for _ in range(FETCH_RETRIES):
            children, measurements, reference = _fetch_slice(endpoint, token)
            check_date = _fetch_timestamp(endpoint, token)
            if check_date == server_date:
                store.update_date = server_date
                store.mother_id = mother_id
                store.children = children
                store.measurements = measurements
                store.reference = reference
                store._persist()
                kind = "FullRefresh" if was_populated else "InitialLoad"
                return SyncOutcome(kind=kind, new_update_date=server_date)
            # A newer snapshot landed mid-fetch; the data may span versions.
            server_date = check_date
        raise ProtocolError("dataset kept changing during refresh")
    finally:
        store._sync_lock.release()
