"""Live UDP probe: sender and reflector for real-network smoke tests.

The reflector echoes every valid probe datagram back to its source. The
sender emits a full train, stamps receive times with the local monotonic
clock, and reuses the tx timestamp embedded in the echoed header, so no
clock synchronization is needed for RTT.
"""

from __future__ import annotations

import logging
import socket
import threading
import time

import numpy as np

from .probe import (
    EchoSet,
    HEADER_LEN,
    HEADER_STRUCT,
    MAGIC,
    ProbeError,
    ProbeTimeout,
    TrainConfig,
    TrainStats,
    compute_stats,
    generate_train,
)

log = logging.getLogger(__name__)

_RCVBUF = 1 << 22
_PACE_EVERY = 64
_PACE_SLEEP_S = 0.0002


class PortBindFailure(ProbeError):
    pass


def _bound_socket(bind: tuple[str, int]) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, _RCVBUF)
        sock.bind(bind)
    except OSError as exc:
        sock.close()
        raise PortBindFailure(f"cannot bind {bind[0]}:{bind[1]}: {exc}") from exc
    return sock


def live_reflect(
    bind: tuple[str, int],
    stop: threading.Event | None = None,
    max_packets: int | None = None,
    ready: threading.Event | None = None,
) -> int:
    """Echo probe datagrams until stopped. Returns the reflected count."""
    sock = _bound_socket(bind)
    sock.settimeout(0.2)
    if ready is not None:
        ready.set()
    reflected = 0
    try:
        while not (stop is not None and stop.is_set()):
            try:
                data, addr = sock.recvfrom(65535)
            except socket.timeout:
                continue
            if len(data) < HEADER_LEN:
                continue
            if HEADER_STRUCT.unpack_from(data)[0] != MAGIC:
                continue
            sock.sendto(data, addr)
            reflected += 1
            if max_packets is not None and reflected >= max_packets:
                break
    finally:
        sock.close()
    log.info("reflector on %s:%d echoed %d packets", bind[0], bind[1], reflected)
    return reflected


def live_measure(
    cfg: TrainConfig,
    dst: tuple[str, int],
    bind: tuple[str, int] = ("0.0.0.0", 0),
) -> TrainStats:
    """Send one train to a reflector and account the echoes.

    Raises ProbeTimeout (with the partial statistics attached) if the
    train does not complete within cfg.timeout_ms.
    """
    sock = _bound_socket(bind)
    sock.settimeout(0.05)

    n = cfg.count
    rx_ns = np.zeros(n, dtype=np.float64)
    tx_ns = np.zeros(n, dtype=np.float64)
    received = np.zeros(n, dtype=bool)
    deadline = time.monotonic() + cfg.timeout_ms / 1000.0
    pending = n

    def drain(block: bool) -> int:
        nonlocal pending
        got = 0
        while pending > 0:
            try:
                if not block:
                    sock.setblocking(False)
                data = sock.recv(65535)
            except (BlockingIOError, socket.timeout):
                break
            finally:
                sock.settimeout(0.05)
            now = time.monotonic_ns()
            if len(data) < HEADER_LEN:
                continue
            magic, _v, _f, _vlan, train_id, seq, _c, _tx = HEADER_STRUCT.unpack_from(
                data
            )
            if magic != MAGIC or train_id != cfg.train_id or seq >= n:
                continue
            if not received[seq]:
                received[seq] = True
                rx_ns[seq] = now
                pending -= 1
                got += 1
        return got

    try:
        for pkt in generate_train(cfg):
            now = time.monotonic_ns()
            wire = pkt.encode()
            # Rewrite the tx timestamp with the wall send time.
            wire = wire[:20] + now.to_bytes(8, "big") + wire[HEADER_LEN:]
            tx_ns[pkt.seq] = now
            sock.sendto(wire, dst)
            if pkt.seq % _PACE_EVERY == _PACE_EVERY - 1:
                time.sleep(_PACE_SLEEP_S)
                drain(block=False)
        while pending > 0 and time.monotonic() < deadline:
            drain(block=True)
    finally:
        sock.close()

    echoes = EchoSet(
        seq=np.arange(n, dtype=np.int64),
        tx_ns=tx_ns,
        rx_ns=rx_ns,
        received=received,
    )
    stats = compute_stats(cfg, echoes, two_way_propagation_us=0.0)
    if pending > 0:
        raise ProbeTimeout(
            f"train incomplete after {cfg.timeout_ms} ms: "
            f"{stats.received}/{cfg.count} echoed",
            stats=stats,
        )
    return stats
