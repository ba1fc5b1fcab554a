"""Live UDP sender and reflector over loopback."""

import socket
import threading

import pytest

from metroslice.live import PortBindFailure, live_measure, live_reflect
from metroslice.probe import MAGIC, ProbeTimeout, TrainConfig


def _free_port():
    try:
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.bind(("127.0.0.1", 0))
    except OSError:
        pytest.skip("loopback UDP sockets unavailable")
    port = s.getsockname()[1]
    s.close()
    return port


def _reflector(port, max_packets):
    ready = threading.Event()
    stop = threading.Event()
    result = {}

    def run():
        result["count"] = live_reflect(
            ("127.0.0.1", port), stop=stop, max_packets=max_packets, ready=ready
        )

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    assert ready.wait(5.0), "reflector did not come up"
    return thread, stop, result


class TestLoopback:
    def test_train_round_trip(self):
        port = _free_port()
        thread, stop, result = _reflector(port, max_packets=1000)
        try:
            stats = live_measure(
                TrainConfig(count=1000, ip_payload_bytes=256, timeout_ms=10_000),
                dst=("127.0.0.1", port),
            )
        finally:
            stop.set()
            thread.join(5.0)
        assert stats.received == 1000
        assert stats.loss_rate == 0.0
        assert stats.rtt_us > 0.0
        assert stats.rtt_mean_us >= stats.rtt_us
        assert stats.jitter_ns >= 0.0
        assert result["count"] == 1000

    def test_single_packet_has_zero_jitter(self):
        port = _free_port()
        thread, stop, _ = _reflector(port, max_packets=1)
        try:
            stats = live_measure(
                TrainConfig(count=1, ip_payload_bytes=128, timeout_ms=5_000),
                dst=("127.0.0.1", port),
            )
        finally:
            stop.set()
            thread.join(5.0)
        assert stats.received == 1
        assert stats.jitter_ns == 0.0
        assert stats.throughput_mbps is None

    def test_reflector_ignores_garbage(self):
        port = _free_port()
        thread, stop, result = _reflector(port, max_packets=3)
        try:
            junk = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            junk.sendto(b"short", ("127.0.0.1", port))
            junk.sendto(b"\x00" * 64, ("127.0.0.1", port))  # wrong magic
            junk.close()
            stats = live_measure(
                TrainConfig(count=3, ip_payload_bytes=128, timeout_ms=5_000),
                dst=("127.0.0.1", port),
            )
        finally:
            stop.set()
            thread.join(5.0)
        assert stats.received == 3
        assert result["count"] == 3

    def test_no_reflector_times_out_with_partial(self):
        port = _free_port()  # nobody listening on it
        with pytest.raises(ProbeTimeout) as exc:
            live_measure(
                TrainConfig(count=10, ip_payload_bytes=128, timeout_ms=300),
                dst=("127.0.0.1", port),
            )
        partial = exc.value.stats
        assert partial is not None
        assert partial.received == 0
        assert partial.loss_rate == 1.0

    def test_bind_conflict(self):
        port = _free_port()
        holder = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        holder.bind(("127.0.0.1", port))
        try:
            with pytest.raises(PortBindFailure):
                live_reflect(("127.0.0.1", port), max_packets=1)
        finally:
            holder.close()
