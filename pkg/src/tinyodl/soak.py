"""Many edges interleaving queries against one teacher, with exact accounting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .protocol import (
    RESPONSE_SIZE,
    MemoryHub,
    OracleTeacher,
    ProtocolError,
    TcpTransport,
    TeacherChannel,
    TeacherEndpoint,
    TeacherServer,
    query_size,
)


@dataclass
class SoakResult:
    transport: str
    queries: int
    answered: int
    misrouted: int
    wrong_label: int
    lost: int
    bytes_ok: bool
    conserved: bool

    @property
    def ok(self) -> bool:
        return (self.misrouted == 0 and self.wrong_label == 0 and self.lost == 0
                and self.bytes_ok and self.conserved)

    def summary(self) -> str:
        return (f"{self.answered}/{self.queries} answered, {self.misrouted} misrouted, "
                f"{self.lost} lost, bytes exact: {self.bytes_ok}")


def run_soak(transport="memory", n_queries=10_000, n_features=561, n_edges=3, seed=0,
             pool=512, n_classes=6) -> SoakResult:
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (pool, n_features))
    y = rng.integers(0, n_classes, pool)
    endpoint = TeacherEndpoint(OracleTeacher(X, y), n_features)

    server = None
    if transport == "memory":
        hub = MemoryHub(endpoint)
        links = [hub.connect(e) for e in range(n_edges)]
    elif transport == "tcp":
        server = TeacherServer(endpoint).start()
        links = [TcpTransport(server.server_address) for _ in range(n_edges)]
    else:
        raise ValueError(f"unknown transport {transport!r}")

    channels = [TeacherChannel(link, n_classes, edge_id=e) for e, link in enumerate(links)]
    misrouted = wrong = lost = 0
    try:
        sent = 0
        rnd = 0
        while sent < n_queries:
            # rotate the send order so edges interleave differently each round
            order = [(rnd + k) % n_edges for k in range(n_edges)][: n_queries - sent]
            pending = []
            for e in order:
                idx = int(rng.integers(pool))
                pending.append((e, idx, channels[e].send_query(X[idx])))
            for link in links:
                link.flush()
            for e, idx, seq in pending:
                ch = channels[e]
                try:
                    label = ch.receive_label(seq)
                except ProtocolError:
                    misrouted += 1
                    ch.ledger.unavailable += 1
                    continue
                if label is None:
                    lost += 1
                    ch.ledger.unavailable += 1
                    continue
                ch.ledger.queries_sent += 1
                if int(np.argmax(label)) != int(y[idx]):
                    wrong += 1
            sent += len(order)
            rnd += 1
    finally:
        for link in links:
            link.close()
        if server is not None:
            server.shutdown()
            server.server_close()

    ledgers = [c.ledger for c in channels]
    answered = sum(lg.queries_sent for lg in ledgers)
    bytes_ok = all(
        lg.bytes_sent == lg.frames_sent * query_size(n_features)
        and lg.bytes_received == lg.queries_sent * RESPONSE_SIZE
        for lg in ledgers
    )
    conserved = sum(lg.decisions for lg in ledgers) == n_queries == sum(lg.frames_sent for lg in ledgers)
    return SoakResult(transport, n_queries, answered, misrouted, wrong, lost, bytes_ok, conserved)
