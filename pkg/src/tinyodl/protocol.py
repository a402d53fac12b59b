"""Edge/teacher label acquisition protocol.

Wire format (little-endian)::

    query     magic "OD" | version u8 | edge_id u8 | seq u32 | n x 4-byte feature
    response  magic "OD" | version u8 | edge_id u8 | seq u32 | label u8 | status u8

Features are float32 in float modes and raw Q16.16 int32 in fixed mode. A
query therefore occupies ``8 + 4n`` bytes (2252 for 561 features) and a
response 10 bytes.
"""
from __future__ import annotations

import enum
import logging
import socket
import socketserver
import struct
import threading
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx

log = logging.getLogger(__name__)

MAGIC = b"OD"
VERSION = 1
HEADER = struct.Struct("<2sBBI")
RESPONSE = struct.Struct("<2sBBIBB")
HEADER_SIZE = HEADER.size
RESPONSE_SIZE = RESPONSE.size


def query_size(n_features: int) -> int:
    return HEADER_SIZE + 4 * n_features


class Status(enum.IntEnum):
    OK = 0
    UNAVAILABLE = 1


class ProtocolError(Exception):
    pass


class BadMagic(ProtocolError):
    pass


class VersionMismatch(ProtocolError):
    pass


class TruncatedFrame(ProtocolError):
    pass


class LabelOutOfRange(ProtocolError):
    pass


@dataclass(frozen=True, eq=False)
class QueryMessage:
    edge_id: int
    seq: int
    payload: bytes
    fixed: bool = False

    @property
    def features(self) -> np.ndarray:
        if self.fixed:
            return nx.from_fixed(np.frombuffer(self.payload, dtype="<i4"))
        return np.frombuffer(self.payload, dtype="<f4").astype(np.float64)

    @property
    def n_features(self) -> int:
        return len(self.payload) // 4

    def __eq__(self, other):
        return (isinstance(other, QueryMessage) and self.edge_id == other.edge_id
                and self.seq == other.seq and self.payload == other.payload)


@dataclass(frozen=True)
class LabelResponse:
    edge_id: int
    seq: int
    label: int
    status: Status = Status.OK


def encode_features(x, fixed=False) -> bytes:
    x = np.asarray(x, dtype=np.float64)
    if fixed:
        return nx.to_fixed(x).astype("<i4").tobytes()
    return x.astype("<f4").tobytes()


def encode_query(edge_id: int, seq: int, x, fixed=False) -> bytes:
    return HEADER.pack(MAGIC, VERSION, edge_id, seq) + encode_features(x, fixed)


def _check_header(frame, min_size):
    if len(frame) < min(min_size, 2) or frame[:2] != MAGIC:
        if len(frame) < 2:
            raise TruncatedFrame(f"frame of {len(frame)} bytes is shorter than the magic")
        raise BadMagic(f"bad magic {bytes(frame[:2])!r}")
    if len(frame) < min_size:
        raise TruncatedFrame(f"frame of {len(frame)} bytes is shorter than {min_size}")
    if frame[2] != VERSION:
        raise VersionMismatch(f"protocol version {frame[2]}, expected {VERSION}")


def decode_query(frame: bytes, n_features=None, fixed=False) -> QueryMessage:
    frame = bytes(frame)
    _check_header(frame, HEADER_SIZE)
    body = len(frame) - HEADER_SIZE
    if n_features is not None:
        if body != 4 * n_features:
            raise TruncatedFrame(f"payload has {body} bytes, expected {4 * n_features}")
    elif body % 4:
        raise TruncatedFrame(f"payload of {body} bytes is not a whole number of features")
    _, _, edge_id, seq = HEADER.unpack_from(frame)
    return QueryMessage(edge_id, seq, frame[HEADER_SIZE:], fixed)


def encode_response(resp: LabelResponse) -> bytes:
    return RESPONSE.pack(MAGIC, VERSION, resp.edge_id, resp.seq, resp.label, int(resp.status))


def decode_response(frame: bytes) -> LabelResponse:
    frame = bytes(frame)
    _check_header(frame, RESPONSE_SIZE)
    if len(frame) != RESPONSE_SIZE:
        raise TruncatedFrame(f"response has {len(frame)} bytes, expected {RESPONSE_SIZE}")
    _, _, edge_id, seq, label, status = RESPONSE.unpack(frame)
    try:
        status = Status(status)
    except ValueError:
        raise ProtocolError(f"unknown response status {status}") from None
    return LabelResponse(edge_id, seq, label, status)


# ---------------------------------------------------------------------------
# teachers


class OracleTeacher:
    """Answers with the ground-truth label of the queried sample.

    Samples are recognised by their wire payload, so the oracle sees exactly
    what an edge sends. Unknown payloads are answered ``UNAVAILABLE``.
    """

    def __init__(self, X, y, fixed=False):
        self.fixed = fixed
        self._labels = {}
        for x, t in zip(np.asarray(X), np.asarray(y)):
            self._labels.setdefault(encode_features(x, fixed), int(t))

    def label(self, query: QueryMessage):
        return self._labels.get(query.payload)


class EnsembleStub:
    """Teacher backed by any fitted estimator(s); majority vote of ``predict``."""

    def __init__(self, *models):
        if not models:
            raise ValueError("at least one model is required")
        self.models = models

    def label(self, query: QueryMessage):
        x = query.features[None, :]
        votes = [int(m.predict(x)[0]) for m in self.models]
        return max(set(votes), key=lambda v: (votes.count(v), -v))


class TeacherEndpoint:
    """Decodes query frames and produces response frames for any transport."""

    def __init__(self, teacher, n_features=None, fixed=False):
        self.teacher = teacher
        self.n_features = n_features
        self.fixed = fixed
        self.handled = 0
        self.malformed = 0

    def handle(self, frame: bytes):
        try:
            q = decode_query(frame, self.n_features, self.fixed)
        except ProtocolError as exc:
            self.malformed += 1
            log.warning("dropping malformed frame: %s", exc)
            return None
        label = self.teacher.label(q)
        self.handled += 1
        if label is None:
            return encode_response(LabelResponse(q.edge_id, q.seq, 0, Status.UNAVAILABLE))
        return encode_response(LabelResponse(q.edge_id, q.seq, int(label)))


# ---------------------------------------------------------------------------
# transports


class MemoryHub:
    """Deterministic in-process delivery between edges and one teacher.

    Queries are queued in arrival order; :meth:`pump` serves them all and
    routes each response to the inbox of the ``edge_id`` in its header.
    """

    def __init__(self, endpoint: TeacherEndpoint):
        self.endpoint = endpoint
        self.online = True
        self._queue = deque()
        self._inbox = defaultdict(deque)

    def connect(self, edge_id: int) -> "MemoryTransport":
        return MemoryTransport(self, edge_id)

    def pump(self):
        while self._queue:
            frame = self._queue.popleft()
            if not self.online:
                continue
            out = self.endpoint.handle(frame)
            if out is not None:
                self._inbox[out[3]].append(out)


class MemoryTransport:
    def __init__(self, hub: MemoryHub, edge_id: int):
        self.hub = hub
        self.edge_id = edge_id

    def send(self, frame: bytes):
        self.hub._queue.append(bytes(frame))

    def recv(self):
        box = self.hub._inbox[self.edge_id]
        return box.popleft() if box else None

    def flush(self):
        self.hub.pump()

    def request(self, frame: bytes):
        self.send(frame)
        self.flush()
        return self.recv()

    def close(self):
        pass


def _recv_exact(sock, size):
    buf = bytearray()
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        endpoint = self.server.endpoint
        size = query_size(endpoint.n_features)
        while True:
            frame = _recv_exact(self.request, size)
            if frame is None:
                return
            out = endpoint.handle(frame)
            if out is not None:
                self.request.sendall(out)


class TeacherServer(socketserver.ThreadingTCPServer):
    """Stream-socket teacher. Frames are fixed size, so ``n_features`` is required."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, endpoint: TeacherEndpoint, address=("127.0.0.1", 0)):
        if endpoint.n_features is None:
            raise ValueError("a stream server needs the endpoint's n_features")
        self.endpoint = endpoint
        super().__init__(address, _Handler)

    def start(self):
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return self


def serve(endpoint: TeacherEndpoint, transport):
    """Run a teacher on ``transport`` (a ``MemoryHub`` or a bound ``TeacherServer``)."""
    if isinstance(transport, MemoryHub):
        transport.pump()
    else:
        transport.serve_forever()


class TcpTransport:
    """Client side of :class:`TeacherServer`. I/O failures read as "no response"."""

    def __init__(self, address, timeout=5.0):
        self.address = address
        self.timeout = timeout
        self._sock = None
        self._failed = False

    def _connect(self):
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        return self._sock

    def send(self, frame: bytes):
        try:
            self._connect().sendall(frame)
        except OSError as exc:
            log.warning("send to %s failed: %s", self.address, exc)
            self._failed = True
            self.close()

    def flush(self):
        pass

    def recv(self):
        if self._failed:
            self._failed = False
            return None
        try:
            return _recv_exact(self._connect(), RESPONSE_SIZE)
        except OSError as exc:
            log.warning("receive from %s failed: %s", self.address, exc)
            self.close()
            return None

    def request(self, frame: bytes):
        self.send(frame)
        return self.recv()

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None


def parse_address(spec: str):
    host, _, port = spec.rpartition(":")
    return (host or "127.0.0.1", int(port))


# ---------------------------------------------------------------------------
# edge side


@dataclass
class TrafficLedger:
    """Application-layer traffic of one edge.

    ``queries_sent`` counts samples that obtained a label, ``unavailable``
    those that gave up after retries and ``queries_skipped`` those pruned by
    the confidence gate. ``frames_sent`` counts every transmitted query
    frame, retries included.
    """

    queries_sent: int = 0
    queries_skipped: int = 0
    unavailable: int = 0
    retries: int = 0
    frames_sent: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0

    @property
    def decisions(self) -> int:
        return self.queries_sent + self.queries_skipped + self.unavailable


@dataclass
class TeacherChannel:
    transport: object
    n_classes: int
    edge_id: int = 0
    retries: int = 3
    fixed: bool = False
    ledger: TrafficLedger = field(default_factory=TrafficLedger)
    seq: int = 0

    def send_query(self, x) -> int:
        """Transmit one query frame and return its sequence number."""
        self.seq = (self.seq + 1) & 0xFFFFFFFF
        frame = encode_query(self.edge_id, self.seq, x, self.fixed)
        self.transport.send(frame)
        self.ledger.frames_sent += 1
        self.ledger.bytes_sent += len(frame)
        return self.seq

    def receive_label(self, seq: int):
        """Read the response to ``seq``; a one-hot label, or None if none was given."""
        reply = self.transport.recv()
        if reply is None:
            return None
        self.ledger.bytes_received += len(reply)
        resp = decode_response(reply)
        if resp.edge_id != self.edge_id or resp.seq != seq:
            raise ProtocolError(
                f"misrouted response edge={resp.edge_id} seq={resp.seq}, "
                f"expected edge={self.edge_id} seq={seq}"
            )
        if resp.status is Status.UNAVAILABLE:
            return None
        if resp.label >= self.n_classes:
            raise LabelOutOfRange(f"teacher label {resp.label} >= {self.n_classes} classes")
        y = np.zeros(self.n_classes)
        y[resp.label] = 1.0
        return y

    def acquire_label(self, x):
        """Query the teacher for ``x`` with up to ``retries`` retries.

        Returns a one-hot label, or None when the teacher stayed unavailable.
        """
        for attempt in range(self.retries + 1):
            if attempt:
                self.ledger.retries += 1
            seq = self.send_query(x)
            self.transport.flush()
            y = self.receive_label(seq)
            if y is not None:
                self.ledger.queries_sent += 1
                return y
        self.ledger.unavailable += 1
        return None

    def record_skip(self):
        self.ledger.queries_skipped += 1
