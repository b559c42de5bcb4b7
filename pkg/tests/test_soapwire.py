"""Envelope codec: canonical forms, round-trips, tolerance, and fuzz totality."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bibmobile import soapwire
from bibmobile.soapwire import (
    FAULT_CODES,
    FaultEnvelope,
    InvalidEnvelope,
    MalformedXml,
    RequestEnvelope,
    ResponseEnvelope,
    decode_request,
    decode_response,
    encode_fault,
    encode_request,
    encode_response,
)

CANONICAL_GET_LAST_UPDATE = (
    b'<Envelope xmlns="http://schemas.xmlsoap.org/soap/envelope/">'
    b'<Header><Auth xmlns="urn:bib-mobile">TK-0001</Auth></Header>'
    b'<Body><GetLastUpdate xmlns="urn:bib-mobile"/></Body></Envelope>'
)


class TestRequests:
    def test_canonical_form(self):
        e = RequestEnvelope("GetLastUpdate", (), "TK-0001")
        assert encode_request(e) == CANONICAL_GET_LAST_UPDATE

    def test_decode_canonical(self):
        assert decode_request(CANONICAL_GET_LAST_UPDATE) == RequestEnvelope(
            "GetLastUpdate", (), "TK-0001"
        )

    def test_round_trip_with_params(self):
        e = RequestEnvelope("Authenticate", (("token", "TK-0001"),))
        assert decode_request(encode_request(e)) == e

    def test_bad_action_name(self):
        with pytest.raises(InvalidEnvelope):
            encode_request(RequestEnvelope("9bad", ()))
        with pytest.raises(InvalidEnvelope):
            encode_request(RequestEnvelope("Get Update", ()))

    def test_duplicate_param_names(self):
        with pytest.raises(InvalidEnvelope):
            encode_request(RequestEnvelope("A", (("x", "1"), ("x", "2"))))

    def test_truncated_is_malformed(self):
        with pytest.raises(MalformedXml):
            decode_request(CANONICAL_GET_LAST_UPDATE[:-10])

    def test_two_body_children_invalid(self):
        xml = CANONICAL_GET_LAST_UPDATE.replace(
            b"<Body><GetLastUpdate xmlns=\"urn:bib-mobile\"/></Body>",
            b"<Body><A xmlns=\"urn:bib-mobile\"/><B xmlns=\"urn:bib-mobile\"/></Body>",
        )
        with pytest.raises(InvalidEnvelope):
            decode_request(xml)

    def test_whitespace_and_prefix_tolerance(self):
        pretty = b"""<soap:Envelope xmlns:soap="http://schemas.xmlsoap.org/soap/envelope/">
          <soap:Header>
            <b:Auth xmlns:b="urn:bib-mobile">TK-0001</b:Auth>
          </soap:Header>
          <soap:Body>
            <b:GetLastUpdate xmlns:b="urn:bib-mobile" />
          </soap:Body>
        </soap:Envelope>"""
        assert decode_request(pretty) == RequestEnvelope("GetLastUpdate", (), "TK-0001")

    def test_wrong_namespace_invalid(self):
        xml = CANONICAL_GET_LAST_UPDATE.replace(b"urn:bib-mobile", b"urn:other")
        with pytest.raises(InvalidEnvelope):
            decode_request(xml)

    def test_token_absent_vs_empty(self):
        absent = encode_request(RequestEnvelope("GetChildren", ()))
        assert b"<Header>" not in absent
        assert decode_request(absent).auth_token is None
        empty = encode_request(RequestEnvelope("GetChildren", (), ""))
        assert decode_request(empty).auth_token == ""

    def test_value_with_specials_escaped(self):
        e = RequestEnvelope("A", (("v", "a<b&c>d\"e'f"),))
        raw = encode_request(e)
        assert b"a&lt;b&amp;c&gt;d" in raw  # the literal specials never survive
        assert decode_request(raw) == e


class TestResponses:
    def test_round_trip(self):
        e = ResponseEnvelope("GetLastUpdate", (("updateDate", "2015-08-01T00:00:00Z"),))
        assert decode_response(encode_response(e)) == e

    def test_indexed_fields(self):
        e = ResponseEnvelope("GetChildren", (("Child.0", "C001"), ("Child.1", "C002")))
        raw = encode_response(e)
        assert b"<Child.0>C001</Child.0>" in raw
        assert decode_response(raw) == e

    def test_empty_fields_self_close(self):
        e = ResponseEnvelope("GetChildren", ())
        raw = encode_response(e)
        assert b"<GetChildrenResponse xmlns=\"urn:bib-mobile\"/>" in raw
        assert decode_response(raw) == e

    def test_response_element_must_end_with_response(self):
        raw = encode_response(ResponseEnvelope("GetChildren", ()))
        with pytest.raises(InvalidEnvelope):
            decode_response(raw.replace(b"GetChildrenResponse", b"GetChildren"))


class TestFaults:
    @pytest.mark.parametrize("code", FAULT_CODES)
    def test_fault_round_trip(self, code):
        raw = encode_fault(code, "something happened")
        decoded = decode_response(raw)
        assert decoded == FaultEnvelope(code, "something happened")

    def test_unknown_code_rejected(self):
        with pytest.raises(InvalidEnvelope):
            encode_fault("Client.Teapot", "nope")
        raw = encode_fault("Client.NotFound", "x").replace(b"Client.NotFound", b"Nope.Nope")
        with pytest.raises(InvalidEnvelope):
            decode_response(raw)

    def test_fault_shape(self):
        raw = encode_fault("Client.AuthFailed", "bad token")
        assert b"<Fault><faultcode>Client.AuthFailed</faultcode>" in raw
        assert b"<faultstring>bad token</faultstring>" in raw


# -- property tests -----------------------------------------------------------

# Text the codec can carry: anything XML 1.0 can represent.
_values = st.text(
    alphabet=st.characters(
        codec="utf-8", exclude_categories=("Cs", "Cc"), include_characters="\t\n\r<>&\"'"
    ),
    max_size=40,
)
_actions = st.from_regex(r"[A-Za-z][A-Za-z0-9]{0,10}", fullmatch=True)
_names = st.from_regex(r"[A-Za-z][A-Za-z0-9]{0,6}(?:\.[A-Za-z0-9]{1,3}){0,2}", fullmatch=True)


def _unique_names(pairs):
    seen = set()
    out = []
    for name, value in pairs:
        if name not in seen:
            seen.add(name)
            out.append((name, value))
    return tuple(out)


_request_envelopes = st.builds(
    RequestEnvelope,
    action=_actions,
    params=st.lists(st.tuples(_names, _values), max_size=6).map(_unique_names),
    auth_token=st.none() | _values,
)
_response_envelopes = st.builds(
    ResponseEnvelope,
    action=_actions,
    fields=st.lists(st.tuples(_names, _values), max_size=6).map(tuple),
)
_fault_envelopes = st.builds(
    FaultEnvelope, fault_code=st.sampled_from(FAULT_CODES), fault_string=_values
)


@settings(max_examples=300, deadline=None)
@given(_request_envelopes)
def test_request_round_trip_property(e):
    raw = encode_request(e)
    assert decode_request(raw) == e
    assert encode_request(decode_request(raw)) == raw


@settings(max_examples=300, deadline=None)
@given(_response_envelopes)
def test_response_round_trip_property(e):
    raw = encode_response(e)
    assert decode_response(raw) == e
    assert encode_response(decode_response(raw)) == raw


@settings(max_examples=100, deadline=None)
@given(_fault_envelopes)
def test_fault_round_trip_property(e):
    raw = encode_fault(e.fault_code, e.fault_string)
    assert decode_response(raw) == e


@settings(max_examples=100, deadline=None)
@given(_request_envelopes)
def test_encoding_deterministic(e):
    assert encode_request(e) == encode_request(e)


def test_decode_never_crashes_on_noise():
    """Random bytes and mutated valid envelopes only ever raise the two errors."""
    rng = random.Random(0xB1B)
    for _ in range(2000):
        blob = bytes(rng.randrange(256) for _ in range(rng.randrange(200)))
        try:
            decode_request(blob)
            decode_response(blob)
        except (MalformedXml, InvalidEnvelope):
            pass
    base = bytearray(CANONICAL_GET_LAST_UPDATE)
    for _ in range(2000):
        mutated = bytearray(base)
        for _ in range(rng.randrange(1, 4)):
            mutated[rng.randrange(len(mutated))] = rng.randrange(256)
        try:
            decode_request(bytes(mutated))
        except (MalformedXml, InvalidEnvelope):
            pass
