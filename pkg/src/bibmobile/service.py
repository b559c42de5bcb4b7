"""Single-endpoint service logic: authentication, dispatch, snapshot state.

The HTTP transport lives in httpserver; everything here works on decoded
envelopes so it can be exercised in-process. Handlers are read-only over an
immutable snapshot taken once per request; the only mutating entry points
are swap_snapshot and the recovery queue.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timezone

from . import soapwire
from .fsutil import write_private
from .cohort import (
    DatasetSnapshot,
    format_timestamp,
    lookup_children,
    lookup_measurements,
    parse_cohort_file,
    serialize_snapshot,
    validate_snapshot,
)

SNAPSHOT_FILENAME = "snapshot.cohort"
TOKEN_TABLE_FILENAME = "tokens.json"
RECOVERY_LOG_FILENAME = "recovery.log"

MAX_HINT_LENGTH = 500


class ServiceFault(Exception):
    """Handler error that maps onto one wire fault code."""

    def __init__(self, code: str, reason: str):
        assert code in soapwire.FAULT_CODES
        super().__init__(f"{code}: {reason}")
        self.code = code
        self.reason = reason


class StaleImport(ValueError):
    """Import whose update date is not strictly newer than the active one."""


class InvalidSnapshot(ValueError):
    """Import that failed validation; the report rides along."""

    def __init__(self, report):
        super().__init__(f"{len(report.errors)} validation error(s)")
        self.report = report


class UnknownMother(KeyError):
    pass


class UnknownRequest(KeyError):
    pass


@dataclass(frozen=True)
class MotherSession:
    """Authenticated principal; scopes every read to her own children."""

    mother_id: str
    token_fingerprint: str


@dataclass(frozen=True)
class RecoveryRequest:
    request_id: int
    mother_hint: str
    received_at: datetime
    status: str  # "pending" | "handled"


class AtomicRef:
    """Lock-guarded reference cell; readers and the swapper never block long."""

    def __init__(self, value=None):
        self._value = value
        self._lock = threading.Lock()

    def get(self):
        with self._lock:
            return self._value

    def get_and_set(self, value):
        with self._lock:
            previous = self._value
            self._value = value
            return previous


def _now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


class TokenTable:
    """Salted token hashes mapped to mother IDs; raw tokens are never stored."""

    def __init__(self, salt: bytes, entries: dict[str, str] | None = None):
        self.salt = salt
        self.entries = dict(entries or {})

    @classmethod
    def create(cls) -> "TokenTable":
        return cls(salt=secrets.token_bytes(16))

    @classmethod
    def load(cls, path: str) -> "TokenTable":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(salt=bytes.fromhex(raw["salt"]), entries=dict(raw["entries"]))

    def save(self, path: str) -> None:
        payload = {"salt": self.salt.hex(), "entries": self.entries}
        write_private(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def fingerprint(self, token: str) -> str:
        return hashlib.sha256(self.salt + token.encode("utf-8")).hexdigest()

    def issue(self, mother_id: str) -> str:
        """Mint a fresh token (192 random bits, URL-safe) for one mother.

        Any previous token for the same mother stops working: one active
        token per mother.
        """
        token = secrets.token_urlsafe(24)
        self.entries = {h: m for h, m in self.entries.items() if m != mother_id}
        self.entries[self.fingerprint(token)] = mother_id
        return token

    def lookup(self, token: str) -> str | None:
        """Resolve a raw token to its mother, comparing hashes in constant time.

        Every entry is compared; there is no early exit on a match.
        """
        digest = self.fingerprint(token)
        found = None
        for entry_hash, mother_id in self.entries.items():
            if hmac.compare_digest(digest, entry_hash):
                found = mother_id
        return found


def _escape_hint(hint: str) -> str:
    return hint.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _unescape_hint(text: str) -> str:
    out = []
    it = iter(text)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, "")
        out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, nxt))
    return "".join(out)


class RecoveryQueue:
    """Forgot-ID requests, persisted as an append-only one-record-per-line log.

    Recovery itself stays out-of-band (the team hands the ID over in person);
    this queue only records and tracks the requests.
    """

    def __init__(self, log_path: str):
        self.log_path = log_path
        self._lock = threading.Lock()
        self._requests: dict[int, RecoveryRequest] = {}
        self._next_id = 1
        if os.path.exists(log_path):
            self._replay()

    def _replay(self) -> None:
        with open(self.log_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if parts[0] == "R" and len(parts) == 4:
                    request_id = int(parts[1])
                    self._requests[request_id] = RecoveryRequest(
                        request_id=request_id,
                        mother_hint=_unescape_hint(parts[3]),
                        received_at=datetime.strptime(parts[2], "%Y-%m-%dT%H:%M:%SZ").replace(
                            tzinfo=timezone.utc
                        ),
                        status="pending",
                    )
                    self._next_id = max(self._next_id, request_id + 1)
                elif parts[0] == "H" and len(parts) == 3:
                    request_id = int(parts[1])
                    req = self._requests.get(request_id)
                    if req is not None:
                        self._requests[request_id] = RecoveryRequest(
                            request_id=req.request_id,
                            mother_hint=req.mother_hint,
                            received_at=req.received_at,
                            status="handled",
                        )
                else:
                    raise ValueError(f"{self.log_path}:{line_no}: unreadable record")

    def _append(self, line: str) -> None:
        fd = os.open(self.log_path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o600)
        with os.fdopen(fd, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def submit(self, hint: str) -> RecoveryRequest:
        with self._lock:
            req = RecoveryRequest(
                request_id=self._next_id, mother_hint=hint, received_at=_now(), status="pending"
            )
            self._append(f"R\t{req.request_id}\t{format_timestamp(req.received_at)}\t{_escape_hint(hint)}")
            self._requests[req.request_id] = req
            self._next_id += 1
            return req

    def mark_handled(self, request_id: int) -> RecoveryRequest:
        with self._lock:
            req = self._requests.get(request_id)
            if req is None:
                raise UnknownRequest(request_id)
            if req.status != "handled":
                self._append(f"H\t{request_id}\t{format_timestamp(_now())}")
                req = RecoveryRequest(
                    request_id=req.request_id,
                    mother_hint=req.mother_hint,
                    received_at=req.received_at,
                    status="handled",
                )
                self._requests[request_id] = req
            return req

    def list(self, pending_only: bool = False) -> list[RecoveryRequest]:
        with self._lock:
            reqs = sorted(self._requests.values(), key=lambda r: r.request_id)
        if pending_only:
            reqs = [r for r in reqs if r.status == "pending"]
        return reqs


class ServiceState:
    """Everything the endpoint serves: active snapshot, tokens, recovery queue.

    The active snapshot sits behind an atomic reference; each request reads it
    exactly once, so every response is consistent with a single version.
    """

    def __init__(self, data_dir: str, token_table_path: str | None = None,
                 recovery_log_path: str | None = None):
        self.data_dir = data_dir
        self.snapshot_path = os.path.join(data_dir, SNAPSHOT_FILENAME)
        self.token_table_path = token_table_path or os.path.join(data_dir, TOKEN_TABLE_FILENAME)
        self.recovery_log_path = recovery_log_path or os.path.join(data_dir, RECOVERY_LOG_FILENAME)

        self._active = AtomicRef(None)
        self._swap_lock = threading.Lock()

        if os.path.exists(self.snapshot_path):
            with open(self.snapshot_path, encoding="utf-8") as fh:
                snapshot = parse_cohort_file(fh.read())
            report = validate_snapshot(snapshot)
            if not report.ok:
                raise InvalidSnapshot(report)
            self._active.get_and_set(snapshot)

        if os.path.exists(self.token_table_path):
            self.tokens = TokenTable.load(self.token_table_path)
        else:
            self.tokens = TokenTable.create()

        self.recovery = RecoveryQueue(self.recovery_log_path)

    # -- snapshot lifecycle -------------------------------------------------

    def active_snapshot(self) -> DatasetSnapshot | None:
        return self._active.get()

    def has_snapshot(self) -> bool:
        return self._active.get() is not None

    def swap_snapshot(self, new: DatasetSnapshot) -> datetime | None:
        """Install a validated, strictly-newer snapshot; returns the old date.

        Persists first, then swaps the in-memory reference, so a failed write
        leaves the previous snapshot active.
        """
        report = validate_snapshot(new)
        if not report.ok:
            raise InvalidSnapshot(report)
        with self._swap_lock:
            current = self._active.get()
            if current is not None and new.update_date <= current.update_date:
                raise StaleImport(
                    f"import dated {format_timestamp(new.update_date)} is not newer than "
                    f"active {format_timestamp(current.update_date)}"
                )
            write_private(self.snapshot_path, serialize_snapshot(new))
            previous = self._active.get_and_set(new)
        return previous.update_date if previous is not None else None

    # -- authentication and handlers ----------------------------------------

    def issue_token(self, mother_id: str) -> str:
        """Mint and persist a token for a mother in the active snapshot.

        Returns the raw token exactly once; only its salted hash is stored.
        """
        snapshot = self.active_snapshot()
        if snapshot is None or all(m.mother_id != mother_id for m in snapshot.mothers):
            raise UnknownMother(mother_id)
        token = self.tokens.issue(mother_id)
        self.tokens.save(self.token_table_path)
        return token

    def authenticate(self, token: str | None, snapshot: DatasetSnapshot | None = None) -> MotherSession:
        if snapshot is None:
            snapshot = self._require_snapshot()
        if not token:
            raise ServiceFault("Client.AuthFailed", "no token presented")
        mother_id = self.tokens.lookup(token)
        if mother_id is None or all(m.mother_id != mother_id for m in snapshot.mothers):
            raise ServiceFault("Client.AuthFailed", "unknown token")
        return MotherSession(mother_id=mother_id, token_fingerprint=self.tokens.fingerprint(token))

    def _require_snapshot(self) -> DatasetSnapshot:
        snapshot = self._active.get()
        if snapshot is None:
            raise ServiceFault("Server.Internal", "no active snapshot")
        return snapshot

    def get_last_update(self, snapshot: DatasetSnapshot) -> list[tuple[str, str]]:
        return [("updateDate", format_timestamp(snapshot.update_date))]

    def get_children(self, snapshot: DatasetSnapshot, session: MotherSession) -> list[tuple[str, str]]:
        children = lookup_children(snapshot, session.mother_id)
        return [(f"Child.{i}", c.child_id) for i, c in enumerate(children)]

    def get_measurements(
        self, snapshot: DatasetSnapshot, session: MotherSession, child_id: str
    ) -> list[tuple[str, str]]:
        owner = next((c.mother_id for c in snapshot.children if c.child_id == child_id), None)
        if owner is None:
            raise ServiceFault("Client.NotFound", f"unknown child {child_id!r}")
        if owner != session.mother_id:
            raise ServiceFault("Client.AccessDenied", "child belongs to another mother")
        fields = []
        for i, m in enumerate(lookup_measurements(snapshot, child_id)):
            fields.append((f"Measurement.{i}.ageMonths", str(m.age_months)))
            fields.append((f"Measurement.{i}.heightCm", repr(m.height_cm)))
            fields.append((f"Measurement.{i}.weightKg", repr(m.weight_kg)))
        return fields

    def get_reference_curve(self, snapshot: DatasetSnapshot) -> list[tuple[str, str]]:
        fields = []
        for i, (age, height) in enumerate(snapshot.reference.knots):
            fields.append((f"Knot.{i}.ageMonths", str(age)))
            fields.append((f"Knot.{i}.heightCm", repr(height)))
        return fields

    def request_id_recovery(self, hint: str) -> list[tuple[str, str]]:
        if not hint or len(hint) > MAX_HINT_LENGTH:
            raise ServiceFault(
                "Client.BadRequest", f"hint must be 1..{MAX_HINT_LENGTH} characters"
            )
        req = self.recovery.submit(hint)
        return [("requestId", str(req.request_id))]

    # -- dispatch -------------------------------------------------------------

    def dispatch(self, body: bytes) -> tuple[int, bytes]:
        """Turn request bytes into (http_status, response bytes); faults are 500.

        Every error path yields a decodable fault envelope, never a bare error.
        """
        try:
            return 200, self._handle(body)
        except (soapwire.MalformedXml, soapwire.InvalidEnvelope) as exc:
            return 500, soapwire.encode_fault("Client.BadRequest", str(exc))
        except ServiceFault as exc:
            return 500, soapwire.encode_fault(exc.code, exc.reason)
        except Exception:
            return 500, soapwire.encode_fault("Server.Internal", "internal error")

    def _handle(self, body: bytes) -> bytes:
        request = soapwire.decode_request(body)
        params = dict(request.params)

        def param(name: str) -> str:
            if name not in params:
                raise ServiceFault("Client.BadRequest", f"missing param {name!r}")
            return params.pop(name)

        snapshot = self._require_snapshot()
        action = request.action
        if action == "Authenticate":
            session = self.authenticate(request.auth_token, snapshot)
            fields = [("ok", "true"), ("motherId", session.mother_id)]
        elif action == "RequestIdRecovery":
            fields = self.request_id_recovery(param("hint"))
        elif action == "GetLastUpdate":
            self.authenticate(request.auth_token, snapshot)
            fields = self.get_last_update(snapshot)
        elif action == "GetChildren":
            session = self.authenticate(request.auth_token, snapshot)
            fields = self.get_children(snapshot, session)
        elif action == "GetMeasurements":
            session = self.authenticate(request.auth_token, snapshot)
            fields = self.get_measurements(snapshot, session, param("childId"))
        elif action == "GetReferenceCurve":
            self.authenticate(request.auth_token, snapshot)
            fields = self.get_reference_curve(snapshot)
        else:
            raise ServiceFault("Client.BadRequest", f"unknown action {action!r}")

        if params:
            raise ServiceFault("Client.BadRequest", f"unexpected param(s): {sorted(params)}")
        return soapwire.encode_response(soapwire.ResponseEnvelope(action=action, fields=tuple(fields)))
