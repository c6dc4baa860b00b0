"""RESP codec and remote oracle against an in-process mini server."""

import io
import socket
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hllrt import HllParams, HllSketch, make_oracle, run_attack, verify
from hllrt.remote import (
    BulkString,
    ErrorReply,
    ProtocolError,
    RemoteOracle,
    RespArray,
    RespStream,
    ServerError,
    SimpleString,
    encode_value,
    parse_endpoint,
    resp_decode,
    resp_encode,
)
from respserver import running_server


# -- encoding -------------------------------------------------------------------


def test_encode_golden_commands():
    assert resp_encode([b"PING"]) == b"*1\r\n$4\r\nPING\r\n"
    assert resp_encode([b"PFADD", b"k", b"x"]) == b"*3\r\n$5\r\nPFADD\r\n$1\r\nk\r\n$1\r\nx\r\n"
    assert resp_encode([b"PFCOUNT", b"k"]) == b"*2\r\n$7\r\nPFCOUNT\r\n$1\r\nk\r\n"


def test_encode_rejects_empty_command():
    with pytest.raises(ValueError):
        resp_encode([])


def test_encode_value_forms():
    assert encode_value(42) == b":42\r\n"
    assert encode_value(SimpleString("OK")) == b"+OK\r\n"
    assert encode_value(ErrorReply("ERR boom")) == b"-ERR boom\r\n"
    assert encode_value(BulkString(None)) == b"$-1\r\n"
    assert encode_value(BulkString(b"hey")) == b"$3\r\nhey\r\n"
    assert encode_value(RespArray(None)) == b"*-1\r\n"
    assert encode_value(RespArray((1, BulkString(b"a")))) == b"*2\r\n:1\r\n$1\r\na\r\n"


# -- decoding -------------------------------------------------------------------


def test_decode_golden_replies():
    assert resp_decode(b":42\r\n") == 42
    assert resp_decode(b"$-1\r\n") == BulkString(None)
    assert resp_decode(b"+OK\r\n") == SimpleString("OK")
    assert resp_decode(b"-ERR nope\r\n") == ErrorReply("ERR nope")
    assert resp_decode(b"*2\r\n:1\r\n$2\r\nab\r\n") == RespArray((1, BulkString(b"ab")))
    assert resp_decode(b"*-1\r\n") == RespArray(None)


def test_decode_consumes_exactly_one_reply():
    stream = RespStream(io.BytesIO(b":1\r\n:2\r\n+OK\r\n"))
    assert stream.read_value() == 1
    assert stream.read_value() == 2
    assert stream.read_value() == SimpleString("OK")


def test_decode_malformed_framing():
    with pytest.raises(ProtocolError):
        resp_decode(b"?weird\r\n")
    with pytest.raises(ProtocolError):
        resp_decode(b":notanint\r\n")
    with pytest.raises(ProtocolError):
        resp_decode(b"$5\r\nab\r\n")  # truncated bulk
    with pytest.raises(ProtocolError):
        resp_decode(b"$3\r\nabcXX")  # bad terminator
    with pytest.raises(ProtocolError):
        resp_decode(b":42")  # no CRLF, stream ends


def _values(depth):
    # Well-formed RESP line text: encodable (no lone surrogates) and free
    # of the CRLF framing bytes.
    line_text = st.text(
        alphabet=st.characters(
            blacklist_characters="\r\n", blacklist_categories=("Cs",)
        ),
        max_size=20,
    )
    scalar = st.one_of(
        st.integers(min_value=-(2**63), max_value=2**63 - 1),
        st.builds(SimpleString, line_text),
        st.builds(ErrorReply, line_text),
        st.builds(BulkString, st.one_of(st.none(), st.binary(max_size=40))),
    )
    if depth == 0:
        return scalar
    inner = _values(depth - 1)
    return st.one_of(
        scalar,
        st.builds(RespArray, st.one_of(st.none(), st.tuples())),
        st.builds(lambda items: RespArray(tuple(items)), st.lists(inner, max_size=4)),
    )


@given(_values(3))
@settings(max_examples=200, deadline=None)
def test_codec_roundtrip(value):
    assert resp_decode(encode_value(value)) == value


# -- endpoints -------------------------------------------------------------------


def test_parse_endpoint():
    ep = parse_endpoint("redis://localhost:6380/mykey")
    assert (ep.host, ep.port, ep.key) == ("localhost", 6380, "mykey")
    assert parse_endpoint("redis://10.0.0.1/k").port == 6379
    assert ep.url() == "redis://localhost:6380/mykey"


def test_parse_endpoint_rejects_bad_urls():
    for bad in ("http://x/k", "redis://hostonly", "redis://host:port/k", "redis://:1/k"):
        with pytest.raises(ValueError):
            parse_endpoint(bad)


# -- remote oracle vs the mini server ----------------------------------------------


def test_oracle_basic_cycle():
    with running_server(register_count=1024) as server:
        with RemoteOracle(server.url()) as oracle:
            assert oracle.ping()
            oracle.reset()
            assert oracle.estimate() == 0
            for e in (b"a", b"b", b"c"):
                oracle.insert(e)
            assert oracle.estimate() == 3
            oracle.reset()
            assert oracle.estimate() == 0


def test_oracle_surfaces_wrong_type_errors():
    with running_server() as server:
        with RemoteOracle(server.url("strkey")) as oracle:
            oracle._exchange([[b"SET", b"strkey", b"hello"]])
            with pytest.raises(ServerError, match="WRONGTYPE"):
                oracle.estimate()


def test_pipelined_batch_equals_sequential():
    elements = [b"e%d" % k for k in range(500)]
    with running_server(register_count=1024) as server:
        with RemoteOracle(server.url("seq")) as sequential:
            sequential.reset()
            for e in elements:
                sequential.insert(e)
            expected = sequential.estimate()
        with RemoteOracle(server.url("bat"), batch=True) as batched:
            batched.reset()
            for e in elements:
                batched.insert(e)
            assert batched.estimate() == expected
            # cached while clean, refreshed after the next insertion
            assert batched.estimate() == expected
            batched.insert(b"one-more")
            assert batched.estimate() >= expected


def test_batch_mode_bounds_pipeline_size():
    # A long insert-only burst must flush in bounded chunks rather than
    # as one giant pipeline.
    with running_server(register_count=1024) as server:
        with RemoteOracle(server.url("big"), batch=True, max_pipeline=128) as oracle:
            oracle.reset()
            for k in range(5000):
                oracle.insert(b"elem-%d" % k)
            assert len(oracle._pending) <= 2 * 128
            estimate = oracle.estimate()
            assert abs(estimate - 5000) <= 0.1 * 5000


def test_non_strict_mode_reports_the_change_bit():
    with running_server() as server:
        with RemoteOracle(server.url("c"), strict=False) as oracle:
            oracle.reset()
            oracle.insert(b"x")
            assert oracle.last_insert_changed is True
            oracle.insert(b"x")
            assert oracle.last_insert_changed is False


def test_oracle_reconnects_once_after_a_drop():
    with running_server(register_count=1024, drop_after=5) as server:
        with RemoteOracle(server.url()) as oracle:
            oracle.reset()
            for e in (b"a", b"b", b"c", b"d", b"e", b"f", b"g"):
                oracle.insert(e)
            assert oracle.estimate() == 7


def test_oracle_times_out_on_a_silent_server():
    silent = socket.socket()
    silent.bind(("127.0.0.1", 0))
    silent.listen(1)
    port = silent.getsockname()[1]
    try:
        oracle = RemoteOracle(f"redis://127.0.0.1:{port}/k", timeout=0.2)
        with pytest.raises((TimeoutError, ConnectionError, OSError)):
            oracle.ping()
    finally:
        silent.close()


def test_connection_refused_propagates():
    oracle = RemoteOracle("redis://127.0.0.1:1/k", timeout=0.5)
    with pytest.raises(OSError):
        oracle.ping()


def test_attack_runs_over_resp():
    # Full black-box attack across TCP: same code path as in-process,
    # only the oracle differs.
    r = 1024
    c = 5 * r
    with running_server(register_count=r) as server:

        def factory():
            return RemoteOracle(server.url("attacked"), batch=True)

        run = run_attack(factory, seed=5, target_cardinality=c)
        remote_estimate = verify(factory(), run.attack_set)
        assert abs(remote_estimate - c) <= 0.10 * c
        # transfers to a hash-compatible local sketch
        local = verify(make_oracle(server.params), run.attack_set)
        assert local == remote_estimate
        assert len(run.attack_set.elements) <= 1.2 * r
