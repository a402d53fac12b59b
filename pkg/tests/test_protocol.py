
import numpy as np
import pytest

from tinyodl.protocol import (
    RESPONSE_SIZE,
    BadMagic,
    EnsembleStub,
    LabelOutOfRange,
    LabelResponse,
    MemoryHub,
    OracleTeacher,
    ProtocolError,
    QueryMessage,
    Status,
    TcpTransport,
    TeacherChannel,
    TeacherEndpoint,
    TeacherServer,
    TruncatedFrame,
    VersionMismatch,
    decode_query,
    decode_response,
    encode_query,
    encode_response,
    parse_address,
    query_size,
)
from tinyodl.soak import run_soak


def test_query_size():
    assert query_size(561) == 2252
    assert len(encode_query(0, 1, np.zeros(561))) == 2252
    assert RESPONSE_SIZE == 10


def test_round_trip_many(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        x = rng.uniform(-1, 1, n).astype(np.float32)
        edge, seq = int(rng.integers(256)), int(rng.integers(2**32))
        q = decode_query(encode_query(edge, seq, x), n)
        assert q == QueryMessage(edge, seq, x.tobytes())
        np.testing.assert_array_equal(q.features, x)


def test_fixed_payload_round_trip(rng):
    x = rng.uniform(-1, 1, 16)
    q = decode_query(encode_query(3, 9, x, fixed=True), 16, fixed=True)
    np.testing.assert_allclose(q.features, x, atol=0.5 / 65536)


def test_response_round_trip():
    r = LabelResponse(7, 123456, 5)
    assert decode_response(encode_response(r)) == r
    off = LabelResponse(1, 2, 0, Status.UNAVAILABLE)
    assert decode_response(encode_response(off)).status is Status.UNAVAILABLE


def test_decode_errors():
    frame = encode_query(0, 1, np.ones(4))
    with pytest.raises(TruncatedFrame):
        decode_query(frame[:-1], 4)
    with pytest.raises(TruncatedFrame):
        decode_query(frame[:5])
    with pytest.raises(BadMagic):
        decode_query(b"XX" + frame[2:], 4)
    with pytest.raises(VersionMismatch):
        decode_query(frame[:2] + bytes([9]) + frame[3:], 4)
    with pytest.raises(TruncatedFrame):
        decode_response(encode_response(LabelResponse(0, 1, 2))[:-1])


def test_error_types_are_distinct():
    kinds = {BadMagic, VersionMismatch, TruncatedFrame}
    assert len(kinds) == 3 and all(issubclass(k, ProtocolError) for k in kinds)


def _channel(rng, n=561, m=6, retries=3, edge=0):
    X = rng.uniform(-1, 1, (20, n))
    y = rng.integers(0, m, 20)
    hub = MemoryHub(TeacherEndpoint(OracleTeacher(X, y), n))
    return X, y, hub, TeacherChannel(hub.connect(edge), m, edge_id=edge, retries=retries)


def test_one_hot_and_byte_accounting(rng):
    X, y, hub, ch = _channel(rng)
    label = ch.acquire_label(X[4])
    np.testing.assert_array_equal(label, np.eye(6)[y[4]])
    assert ch.ledger.bytes_sent == 2252
    assert ch.ledger.bytes_received == 10
    assert ch.ledger.queries_sent == 1


def test_oracle_returns_ground_truth(rng, fixture_data):
    X, y = fixture_data.X[:50], fixture_data.y[:50]
    hub = MemoryHub(TeacherEndpoint(OracleTeacher(X, y), X.shape[1]))
    ch = TeacherChannel(hub.connect(0), 6)
    got = [int(np.argmax(ch.acquire_label(x))) for x in X]
    assert got == list(y)


def test_offline_teacher_is_unavailable(rng):
    X, _, hub, ch = _channel(rng, retries=2)
    hub.online = False
    assert ch.acquire_label(X[0]) is None
    assert ch.ledger.retries == 2
    assert ch.ledger.unavailable == 1
    assert ch.ledger.frames_sent == 3
    assert ch.ledger.queries_sent == 0


def test_unknown_sample_is_unavailable(rng):
    _, _, _, ch = _channel(rng, retries=0)
    assert ch.acquire_label(np.full(561, 0.123)) is None


def test_label_out_of_range(rng):
    X, _, hub, _ = _channel(rng)
    ch = TeacherChannel(hub.connect(0), n_classes=3)
    hub.endpoint.teacher = EnsembleStub(_Const(5))
    with pytest.raises(LabelOutOfRange):
        ch.acquire_label(X[0])


class _Const:
    def __init__(self, c):
        self.c = c

    def predict(self, X):
        return np.full(len(X), self.c)


def test_ensemble_majority():
    t = EnsembleStub(_Const(2), _Const(1), _Const(2))
    q = QueryMessage(0, 1, np.zeros(3, np.float32).tobytes())
    assert t.label(q) == 2


def test_malformed_frames_dropped(rng):
    _, _, hub, _ = _channel(rng)
    assert hub.endpoint.handle(b"OD\x01") is None
    assert hub.endpoint.malformed == 1


def test_interleaved_edges_get_their_own_responses(rng):
    X = rng.uniform(-1, 1, (10, 8))
    y = np.arange(10) % 6
    hub = MemoryHub(TeacherEndpoint(OracleTeacher(X, y), 8))
    a = TeacherChannel(hub.connect(1), 6, edge_id=1)
    b = TeacherChannel(hub.connect(2), 6, edge_id=2)
    sa = [a.send_query(X[i]) for i in (0, 1)]
    sb = [b.send_query(X[i]) for i in (2, 3)]
    hub.pump()
    assert int(np.argmax(b.receive_label(sb[0]))) == y[2]
    assert int(np.argmax(a.receive_label(sa[0]))) == y[0]
    assert int(np.argmax(a.receive_label(sa[1]))) == y[1]
    assert int(np.argmax(b.receive_label(sb[1]))) == y[3]


def test_misrouted_response_detected(rng):
    X, _, hub, ch = _channel(rng)
    seq = ch.send_query(X[0])
    hub.pump()
    with pytest.raises(ProtocolError, match="misrouted"):
        ch.receive_label(seq + 1)


def test_tcp_round_trip(rng):
    X = rng.uniform(-1, 1, (5, 561))
    y = np.array([0, 1, 2, 3, 4])
    server = TeacherServer(TeacherEndpoint(OracleTeacher(X, y), 561)).start()
    try:
        ch = TeacherChannel(TcpTransport(server.server_address), 6)
        assert [int(np.argmax(ch.acquire_label(x))) for x in X] == list(y)
        assert ch.ledger.bytes_sent == 5 * 2252
        ch.transport.close()
    finally:
        server.shutdown()
        server.server_close()


def test_tcp_unreachable_is_unavailable():
    server = TeacherServer(TeacherEndpoint(OracleTeacher(np.zeros((1, 4)), [0]), 4))
    address = server.server_address
    server.server_close()
    ch = TeacherChannel(TcpTransport(address, timeout=0.5), 6, retries=2)
    assert ch.acquire_label(np.zeros(4)) is None
    assert ch.ledger.retries == 2 and ch.ledger.unavailable == 1


def test_parse_address():
    assert parse_address("10.0.0.2:7000") == ("10.0.0.2", 7000)
    assert parse_address(":7000") == ("127.0.0.1", 7000)


@pytest.mark.parametrize("transport", ["memory", "tcp"])
def test_soak(transport):
    res = run_soak(transport, n_queries=10_000)
    assert res.ok, res.summary()
    assert res.answered == 10_000
