"""Service logic: authentication, access control, dispatch, recovery, swaps."""

from __future__ import annotations

import os
import random
import threading
from datetime import timedelta

import pytest

from bibmobile import soapwire
from bibmobile.cohort import parse_cohort_file, snapshot_digest
from bibmobile.service import (
    InvalidSnapshot,
    RecoveryQueue,
    ServiceFault,
    ServiceState,
    StaleImport,
    TokenTable,
    UnknownMother,
    UnknownRequest,
)
from conftest import FIXTURE_FAMILIES, FIXTURE_TOKENS, T2, build_cohort_text, install_tokens


def call(state, action, params=(), token=None):
    """Drive dispatch through real wire bytes; return (status, decoded reply)."""
    body = soapwire.encode_request(
        soapwire.RequestEnvelope(action=action, params=tuple(params), auth_token=token)
    )
    status, payload = state.dispatch(body)
    return status, soapwire.decode_response(payload)


class TestTokenTable:
    def test_issue_and_lookup(self):
        table = TokenTable.create()
        token = table.issue("M001")
        assert len(token) >= 22  # 128 bits of urlsafe text is 22 chars; we issue 192
        assert table.lookup(token) == "M001"
        assert table.lookup("WRONG") is None

    def test_one_active_token_per_mother(self):
        table = TokenTable.create()
        first = table.issue("M001")
        second = table.issue("M001")
        assert table.lookup(first) is None
        assert table.lookup(second) == "M001"

    def test_raw_tokens_never_in_saved_file(self, tmp_path):
        table = TokenTable.create()
        token = table.issue("M001")
        path = tmp_path / "tokens.json"
        table.save(str(path))
        assert token not in path.read_text()
        assert TokenTable.load(str(path)).lookup(token) == "M001"


class TestAuthenticate:
    def test_fixture_token(self, state):
        session = state.authenticate("TK-0001")
        assert session.mother_id == "M001"
        assert session.token_fingerprint == state.tokens.fingerprint("TK-0001")

    def test_wrong_token(self, state):
        with pytest.raises(ServiceFault) as err:
            state.authenticate("WRONG")
        assert err.value.code == "Client.AuthFailed"

    def test_empty_token(self, state):
        with pytest.raises(ServiceFault):
            state.authenticate("")
        with pytest.raises(ServiceFault):
            state.authenticate(None)

    def test_tokens_never_cross_mothers(self, state):
        rng = random.Random(1234)
        tokens = list(FIXTURE_TOKENS)
        for _ in range(10_000):
            token = rng.choice(tokens)
            assert state.authenticate(token).mother_id == FIXTURE_TOKENS[token]

    def test_mother_dropped_by_reimport_cannot_authenticate(self, state, snapshot):
        families = {"M001": ["C001", "C002"], "M002": ["C003", "C004"]}  # M003 gone
        state.swap_snapshot(parse_cohort_file(build_cohort_text(T2, families)))
        with pytest.raises(ServiceFault) as err:
            state.authenticate("TK-0003")
        assert err.value.code == "Client.AuthFailed"
        assert state.authenticate("TK-0001").mother_id == "M001"


class TestHandlers:
    def test_get_last_update(self, state, snapshot):
        status, reply = call(state, "GetLastUpdate", token="TK-0001")
        assert status == 200
        assert reply.fields == (("updateDate", "2015-08-01T00:00:00Z"),)

    def test_get_last_update_after_reimport(self, state):
        state.swap_snapshot(parse_cohort_file(build_cohort_text(T2)))
        _, reply = call(state, "GetLastUpdate", token="TK-0001")
        assert reply.fields == (("updateDate", T2),)

    def test_get_children_scoped(self, state):
        _, reply = call(state, "GetChildren", token="TK-0001")
        assert reply.fields == (("Child.0", "C001"), ("Child.1", "C002"))
        other = {v for _, v in call(state, "GetChildren", token="TK-0002")[1].fields}
        assert other == {"C003", "C004"}
        assert not other & {"C001", "C002"}

    def test_get_measurements_owned(self, state, snapshot):
        status, reply = call(state, "GetMeasurements", (("childId", "C001"),), "TK-0001")
        assert status == 200
        ages = [int(v) for n, v in reply.fields if n.endswith("ageMonths")]
        assert ages == sorted(ages) and len(ages) == 8

    def test_get_measurements_denied_for_other_mother(self, state):
        status, reply = call(state, "GetMeasurements", (("childId", "C003"),), "TK-0001")
        assert status == 500
        assert reply.fault_code == "Client.AccessDenied"

    def test_get_measurements_unknown_child(self, state):
        _, reply = call(state, "GetMeasurements", (("childId", "CX"),), "TK-0001")
        assert reply.fault_code == "Client.NotFound"

    def test_access_control_cross_product(self, state, snapshot):
        """Exhaustive ownership check over every (session, child) pair."""
        for token, mother_id in FIXTURE_TOKENS.items():
            for child in snapshot.children:
                status, reply = call(state, "GetMeasurements", (("childId", child.child_id),), token)
                owned = child.mother_id == mother_id
                assert (status == 200) == owned
                if not owned:
                    assert reply.fault_code == "Client.AccessDenied"

    def test_reference_curve_identical_across_mothers(self, state, snapshot):
        replies = [call(state, "GetReferenceCurve", token=t)[1].fields for t in FIXTURE_TOKENS]
        assert replies[0] == replies[1] == replies[2]
        ages = [int(v) for n, v in replies[0] if n.endswith("ageMonths")]
        assert ages == sorted(ages) and len(ages) == 25

    def test_get_children_empty_for_departed_mother(self, state, snapshot):
        # A session can outlive its mother's membership only between requests;
        # the handler itself just answers with an empty list.
        from bibmobile.service import MotherSession

        ghost = MotherSession(mother_id="M999", token_fingerprint="x")
        assert state.get_children(snapshot, ghost) == []

    def test_authenticate_action(self, state):
        status, reply = call(state, "Authenticate", token="TK-0002")
        assert status == 200
        assert ("motherId", "M002") in reply.fields
        status, reply = call(state, "Authenticate", token="NOPE")
        assert status == 500 and reply.fault_code == "Client.AuthFailed"


class TestDispatchFaults:
    def test_undecodable_body(self, state):
        status, payload = state.dispatch(b"this is not xml")
        assert status == 500
        assert soapwire.decode_response(payload).fault_code == "Client.BadRequest"

    def test_unknown_action(self, state):
        status, reply = call(state, "Frobnicate", token="TK-0001")
        assert status == 500 and reply.fault_code == "Client.BadRequest"

    def test_missing_token(self, state):
        status, reply = call(state, "GetChildren")
        assert status == 500 and reply.fault_code == "Client.AuthFailed"

    def test_missing_param(self, state):
        status, reply = call(state, "GetMeasurements", (), "TK-0001")
        assert status == 500 and reply.fault_code == "Client.BadRequest"

    def test_unexpected_param(self, state):
        status, reply = call(state, "GetChildren", (("extra", "1"),), "TK-0001")
        assert status == 500 and reply.fault_code == "Client.BadRequest"

    def test_every_response_is_decodable(self, state):
        rng = random.Random(5)
        for _ in range(500):
            blob = bytes(rng.randrange(256) for _ in range(rng.randrange(150)))
            status, payload = state.dispatch(blob)
            reply = soapwire.decode_response(payload)  # must never raise
            assert status in (200, 500)
            if status == 500:
                assert isinstance(reply, soapwire.FaultEnvelope)


class TestReadOnly:
    def test_fuzz_requests_leave_snapshot_unchanged(self, state):
        before = snapshot_digest(state.active_snapshot())
        rng = random.Random(17)
        actions = ["Authenticate", "GetLastUpdate", "GetChildren", "GetMeasurements",
                   "GetReferenceCurve", "RequestIdRecovery", "Frobnicate"]
        for _ in range(1500):
            action = rng.choice(actions)
            params = []
            if rng.random() < 0.5:
                params.append(("childId", rng.choice(["C001", "C003", "CX"])))
            if action == "RequestIdRecovery":
                params = [("hint", "lost it")]
            token = rng.choice([None, "TK-0001", "TK-0002", "WRONG"])
            call(state, action, params, token)
        assert snapshot_digest(state.active_snapshot()) == before


class TestRecovery:
    def test_sequence_and_ack(self, state):
        status, reply = call(state, "RequestIdRecovery", (("hint", "lost phone, green case"),))
        assert status == 200 and reply.fields == (("requestId", "1"),)
        _, reply = call(state, "RequestIdRecovery", (("hint", "moved house"),))
        assert reply.fields == (("requestId", "2"),)

    def test_hint_bounds(self, state):
        _, reply = call(state, "RequestIdRecovery", (("hint", ""),))
        assert reply.fault_code == "Client.BadRequest"
        _, reply = call(state, "RequestIdRecovery", (("hint", "x" * 501),))
        assert reply.fault_code == "Client.BadRequest"
        status, _ = call(state, "RequestIdRecovery", (("hint", "x" * 500),))
        assert status == 200

    def test_no_token_material_in_response(self, state):
        status, payload = state.dispatch(
            soapwire.encode_request(
                soapwire.RequestEnvelope("RequestIdRecovery", (("hint", "help me"),))
            )
        )
        text = payload.decode("utf-8")
        for token in FIXTURE_TOKENS:
            assert token not in text

    def test_queue_survives_restart(self, tmp_path):
        path = str(tmp_path / "recovery.log")
        queue = RecoveryQueue(path)
        queue.submit("first hint\twith tab")
        queue.submit("second")
        queue.mark_handled(1)
        reloaded = RecoveryQueue(path)
        reqs = reloaded.list()
        assert [(r.request_id, r.status) for r in reqs] == [(1, "handled"), (2, "pending")]
        assert reqs[0].mother_hint == "first hint\twith tab"
        assert reloaded.submit("third").request_id == 3

    def test_pending_filter_and_unknown(self, tmp_path):
        queue = RecoveryQueue(str(tmp_path / "r.log"))
        queue.submit("a")
        queue.submit("b")
        queue.mark_handled(1)
        assert [r.request_id for r in queue.list(pending_only=True)] == [2]
        with pytest.raises(UnknownRequest):
            queue.mark_handled(99)


class TestSwapSnapshot:
    def test_newer_import_succeeds(self, state, snapshot):
        previous = state.swap_snapshot(parse_cohort_file(build_cohort_text(T2)))
        assert previous == snapshot.update_date
        assert state.active_snapshot().update_date > snapshot.update_date

    def test_equal_timestamp_rejected(self, state, cohort_text):
        with pytest.raises(StaleImport):
            state.swap_snapshot(parse_cohort_file(cohort_text))

    def test_older_timestamp_rejected(self, state):
        older = build_cohort_text("2015-07-01T00:00:00Z")
        with pytest.raises(StaleImport):
            state.swap_snapshot(parse_cohort_file(older))

    def test_invalid_snapshot_rejected(self, state):
        bad = build_cohort_text(T2).replace("C001,M001", "C001,M999")
        with pytest.raises(InvalidSnapshot):
            state.swap_snapshot(parse_cohort_file(bad))

    def test_issue_token_unknown_mother(self, state):
        with pytest.raises(UnknownMother):
            state.issue_token("MX")

    def test_issued_token_authenticates_end_to_end(self, state):
        token = state.issue_token("M002")
        assert state.authenticate(token).mother_id == "M002"

    def test_concurrent_readers_see_single_versions(self, state):
        """Count triples observed under concurrent swaps belong to one version."""
        known = set()
        stop = threading.Event()
        seen = []
        errors = []

        def reader():
            try:
                while not stop.is_set():
                    snap = state.active_snapshot()
                    seen.append((len(snap.mothers), len(snap.children), len(snap.measurements)))
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        base = state.active_snapshot()
        known.add((len(base.mothers), len(base.children), len(base.measurements)))
        threads = [threading.Thread(target=reader) for _ in range(8)]
        for t in threads:
            t.start()
        families = dict(FIXTURE_FAMILIES)
        stamp = base.update_date
        for i in range(20):
            stamp = stamp + timedelta(seconds=1)
            families[f"M9{i:02}"] = [f"C9{i:02}"]
            snap = parse_cohort_file(
                build_cohort_text(stamp.strftime("%Y-%m-%dT%H:%M:%SZ"), families)
            )
            known.add((len(snap.mothers), len(snap.children), len(snap.measurements)))
            state.swap_snapshot(snap)
        stop.set()
        for t in threads:
            t.join()
        assert not errors
        assert set(seen) <= known


class TestTokenSecrecy:
    def test_raw_token_nowhere_in_data_dir(self, state):
        token = state.issue_token("M003")
        call(state, "GetChildren", token=token)
        call(state, "RequestIdRecovery", (("hint", "anything"),))
        for root, _, files in os.walk(state.data_dir):
            for name in files:
                content = open(os.path.join(root, name), encoding="utf-8").read()
                assert token not in content, f"raw token leaked into {name}"

    def test_raw_token_not_in_responses(self, state):
        token = state.issue_token("M001")
        for action in ("Authenticate", "GetLastUpdate", "GetChildren", "GetReferenceCurve"):
            _, payload = state.dispatch(
                soapwire.encode_request(soapwire.RequestEnvelope(action, (), token))
            )
            assert token.encode() not in payload
