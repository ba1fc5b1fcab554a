"""Packet-train active probe.

Generates deterministic probe trains, encodes them in the on-wire header
format below, computes train statistics (RTT, jitter, throughput, loss),
and decomposes the fixed latency budget from calibration measurements.

Wire header, big-endian, 28 bytes:

    offset  size  field
    0       4     magic 0x4D485052
    4       1     version (1)
    5       1     flags
    6       2     vlan id
    8       4     train id
    12      4     sequence number
    16      4     train packet count
    20      8     tx timestamp, ns

The remainder of the datagram is BERT filler (zeros, incrementing bytes,
or PRBS-31 seeded with 0x7FFFFFFF).
"""

from __future__ import annotations

import functools
import struct
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .dataplane import (
    CLOCK_TICK_NS,
    LINE_RATE_GBPS,
    PathModel,
    one_way_delay_us,
    serialization_delay_ns,
    transmit_train,
)

MAGIC = 0x4D485052
VERSION = 1
HEADER_STRUCT = struct.Struct(">IBBHIIIQ")
HEADER_LEN = HEADER_STRUCT.size  # 28

#: Ethernet header + VLAN tag + FCS + preamble + interframe gap.
FRAME_OVERHEAD_BYTES = 42

#: IPv4 + UDP headers, already inside the IP-layer byte count.
IP_UDP_HEADER_BYTES = 28

MAX_TRAIN_COUNT = 2**32 - 1


class ProbeError(Exception):
    pass


class ProbeTimeout(ProbeError):
    """Train did not complete in time; carries the partial statistics."""

    def __init__(self, message: str, stats: "TrainStats | None" = None):
        super().__init__(message)
        self.stats = stats


class NegativeBudget(ProbeError):
    """Calibration measurements are inconsistent (later stage faster)."""


class BertType(str, Enum):
    ZEROS = "Zeros"
    INCREMENTING = "Incrementing"
    PRBS31 = "Prbs31"


@dataclass(frozen=True)
class TrainConfig:
    """Everything needed to emit and account one probe train."""

    count: int
    ip_payload_bytes: int = 1456
    train_id: int = 1
    vlan_id: int = 100
    bert_type: BertType = BertType.PRBS31
    timeout_ms: int = 10_000
    line_rate_gbps: float = LINE_RATE_GBPS

    def __post_init__(self) -> None:
        if not 1 <= self.count <= MAX_TRAIN_COUNT:
            raise ValueError(f"count must be in [1, {MAX_TRAIN_COUNT}]")
        if not 64 <= self.ip_payload_bytes <= 9000:
            raise ValueError("ip_payload_bytes must be in [64, 9000]")
        if not 0 <= self.vlan_id < 4096:
            raise ValueError("vlan_id must be a 12-bit value")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")

    @property
    def bert_payload_len(self) -> int:
        return self.ip_payload_bytes - IP_UDP_HEADER_BYTES - HEADER_LEN

    @property
    def wire_slot_ns(self) -> float:
        """Back-to-back packet spacing at line rate, full frame on the wire."""
        return serialization_delay_ns(
            self.ip_payload_bytes + FRAME_OVERHEAD_BYTES, self.line_rate_gbps
        )


# ---------------------------------------------------------------------------
# BERT payloads

#: PRBS-31 polynomial x**31 + x**28 + 1, as (register length, second tap).
PRBS31_TAPS = (31, 28)
PRBS31_SEED = 0x7FFFFFFF


@functools.lru_cache(maxsize=32)
def prbs31_bytes(n: int, seed: int = PRBS31_SEED) -> bytes:
    """First n bytes of the PRBS-31 bit stream, MSB-first packing."""
    state = seed & 0x7FFFFFFF
    if state == 0:
        raise ValueError("PRBS seed must be non-zero")
    out = bytearray(n)
    hi, lo = PRBS31_TAPS
    for i in range(n):
        byte = 0
        for _ in range(8):
            bit = ((state >> (hi - 1)) ^ (state >> (lo - 1))) & 1
            state = ((state << 1) | bit) & 0x7FFFFFFF
            byte = (byte << 1) | bit
        out[i] = byte
    return bytes(out)


@functools.lru_cache(maxsize=32)
def bert_payload(bert_type: BertType, n: int) -> bytes:
    if n <= 0:
        return b""
    if bert_type is BertType.ZEROS:
        return bytes(n)
    if bert_type is BertType.INCREMENTING:
        return bytes(i & 0xFF for i in range(n))
    return prbs31_bytes(n)


# ---------------------------------------------------------------------------
# Packets and codec


@dataclass(frozen=True)
class ProbePacket:
    train_id: int
    seq: int
    count: int
    vlan_id: int
    tx_timestamp_ns: int
    flags: int = 0
    payload: bytes = b""

    def encode(self) -> bytes:
        return (
            HEADER_STRUCT.pack(
                MAGIC,
                VERSION,
                self.flags,
                self.vlan_id,
                self.train_id,
                self.seq,
                self.count,
                self.tx_timestamp_ns,
            )
            + self.payload
        )


def decode_packet(buf: bytes) -> ProbePacket:
    if len(buf) < HEADER_LEN:
        raise ProbeError(f"short packet: {len(buf)} bytes")
    magic, version, flags, vlan, train_id, seq, count, tx_ns = HEADER_STRUCT.unpack(
        buf[:HEADER_LEN]
    )
    if magic != MAGIC:
        raise ProbeError(f"bad magic 0x{magic:08X}")
    if version != VERSION:
        raise ProbeError(f"unsupported version {version}")
    return ProbePacket(
        train_id=train_id,
        seq=seq,
        count=count,
        vlan_id=vlan,
        tx_timestamp_ns=tx_ns,
        flags=flags,
        payload=buf[HEADER_LEN:],
    )


def generate_train(cfg: TrainConfig, start_ns: int = 0):
    """Yield the train's packets with back-to-back line-rate tx timestamps.

    Timestamps are quantized to the capture clock tick. The payload is the
    same BERT pattern for every packet, so the byte stream is a pure
    function of the config.
    """
    payload = bert_payload(cfg.bert_type, cfg.bert_payload_len)
    slot = cfg.wire_slot_ns
    for seq in range(cfg.count):
        tx = start_ns + round(seq * slot / CLOCK_TICK_NS) * CLOCK_TICK_NS
        yield ProbePacket(
            train_id=cfg.train_id,
            seq=seq,
            count=cfg.count,
            vlan_id=cfg.vlan_id,
            tx_timestamp_ns=int(tx),
            payload=payload,
        )


# ---------------------------------------------------------------------------
# Echoes and statistics


@dataclass
class EchoSet:
    """Per-packet (tx, rx) timestamps of one train, lost packets flagged.

    Backed by arrays so million-packet trains stay cheap. ``rx_ns`` is
    undefined where ``received`` is False.
    """

    seq: np.ndarray
    tx_ns: np.ndarray
    rx_ns: np.ndarray
    received: np.ndarray

    @classmethod
    def from_list(cls, echoes) -> "EchoSet":
        """Build from [(seq, tx_ns, rx_ns | None), ...]."""
        n = len(echoes)
        seq = np.empty(n, dtype=np.int64)
        tx = np.empty(n, dtype=np.float64)
        rx = np.zeros(n, dtype=np.float64)
        got = np.zeros(n, dtype=bool)
        for i, (s, t, r) in enumerate(echoes):
            seq[i] = s
            tx[i] = t
            if r is not None:
                rx[i] = r
                got[i] = True
        return cls(seq, tx, rx, got)


@dataclass(frozen=True)
class TrainStats:
    """Aggregate results of one train.

    ``rtt_us`` is the minimum over the train (robust to jitter);
    ``rtt_mean_us`` is the average, which calibration reports use.
    Throughput is IP-layer: payload bytes over the first-to-last receive
    interval, so it excludes Ethernet overhead by construction.
    """

    count: int
    received: int
    rtt_us: float | None
    rtt_mean_us: float | None
    jitter_ns: float | None
    throughput_mbps: float | None
    duration_s: float | None
    two_way_propagation_us: float | None = None

    @property
    def lost(self) -> int:
        return self.count - self.received

    @property
    def loss_rate(self) -> float:
        return self.lost / self.count

    def to_record(self) -> dict:
        return {
            "count": self.count,
            "received": self.received,
            "loss_rate": self.loss_rate,
            "rtt_us": self.rtt_us,
            "rtt_mean_us": self.rtt_mean_us,
            "jitter_ns": self.jitter_ns,
            "throughput_mbps": self.throughput_mbps,
            "duration_s": self.duration_s,
            "two_way_propagation_us": self.two_way_propagation_us,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TrainStats":
        fields = {k: rec.get(k) for k in (
            "count",
            "received",
            "rtt_us",
            "rtt_mean_us",
            "jitter_ns",
            "throughput_mbps",
            "duration_s",
            "two_way_propagation_us",
        )}
        return cls(**fields)


def compute_stats(
    cfg: TrainConfig,
    echoes: EchoSet,
    two_way_propagation_us: float | None = None,
) -> TrainStats:
    """Reduce per-packet echoes to train statistics.

    Order-insensitive: only the (tx, rx) pairs matter. A fully lost train
    yields loss 1.0 with undefined RTT rather than an error.
    """
    got = echoes.received
    received = int(got.sum())
    if received == 0:
        return TrainStats(cfg.count, 0, None, None, None, None, None,
                          two_way_propagation_us)
    tx = echoes.tx_ns[got]
    rx = echoes.rx_ns[got]
    rtt_ns = rx - tx
    rtt_us = float(rtt_ns.min()) / 1000.0
    rtt_mean_us = float(rtt_ns.mean()) / 1000.0
    jitter_ns = float(rtt_ns.std())
    first_rx = float(rx.min())
    last_rx = float(rx.max())
    if received > 1 and last_rx > first_rx:
        thr_mbps = (
            8.0 * cfg.ip_payload_bytes * received / (last_rx - first_rx) * 1000.0
        )
    else:
        thr_mbps = None
    duration_s = (last_rx - float(echoes.tx_ns.min())) / 1e9
    return TrainStats(
        count=cfg.count,
        received=received,
        rtt_us=rtt_us,
        rtt_mean_us=rtt_mean_us,
        jitter_ns=jitter_ns,
        throughput_mbps=thr_mbps,
        duration_s=duration_s,
        two_way_propagation_us=two_way_propagation_us,
    )


def theoretical_ceiling_mbps(ip_payload_bytes: int) -> float:
    """Best possible IP-layer throughput on a 100 Gb/s interface.

    Every frame pays 42 bytes of Ethernet overhead (header, VLAN tag, FCS,
    preamble, interframe gap), so the ceiling is 100000 * L / (L + 42).
    """
    if ip_payload_bytes <= 0:
        raise ValueError("ip_payload_bytes must be > 0")
    return 100_000.0 * ip_payload_bytes / (ip_payload_bytes + FRAME_OVERHEAD_BYTES)


# ---------------------------------------------------------------------------
# Latency budget decomposition


@dataclass(frozen=True)
class LatencyBudget:
    """Two-way fixed-latency contributions, in microseconds."""

    probe_us: float
    switches_us: float
    optical_us: float


def _fixed_delta_us(stats: TrainStats) -> float:
    if stats.rtt_mean_us is None:
        raise NegativeBudget("calibration train has no received packets")
    prop = stats.two_way_propagation_us or 0.0
    return stats.rtt_mean_us - prop

def latency_budget(
    loopback: TrainStats,
    switches: TrainStats,
    optical: TrainStats,
) -> LatencyBudget:
    """Decompose fixed two-way latency from three calibration setups.

    loopback: probe alone, switches: probe + aggregation switches,
    optical: probe + switches + the full optical path. Each stage's delta
    is its RTT minus the fibre propagation; differences isolate the
    contribution of each element class.
    """
    d_probe = _fixed_delta_us(loopback)
    d_switch = _fixed_delta_us(switches)
    d_optical = _fixed_delta_us(optical)
    budget = LatencyBudget(
        probe_us=d_probe,
        switches_us=d_switch - d_probe,
        optical_us=d_optical - d_switch,
    )
    if min(budget.probe_us, budget.switches_us, budget.optical_us) < 0:
        raise NegativeBudget(
            f"inconsistent calibration deltas: {d_probe}, {d_switch}, {d_optical}"
        )
    return budget


# ---------------------------------------------------------------------------
# Simulated measurement backend


class SimulatedProbe:
    """Round-trip train measurement over a dataplane path model.

    The train traverses the path forward, is looped by the remote probe,
    and traverses the reverse path; each direction applies loss and jitter
    independently. With zero jitter and zero loss the measured RTT is
    exactly twice the one-way delay, up to clock-tick quantization.
    """

    def __init__(self, path: PathModel, seed: int = 0):
        self.path = path
        self.seed = seed
        self._runs = 0

    def run(self, cfg: TrainConfig) -> TrainStats:
        # Distinct, reproducible streams per run and per direction.
        root = np.random.SeedSequence(entropy=self.seed, spawn_key=(self._runs,))
        self._runs += 1
        fwd_seed, bwd_seed = root.spawn(2)

        n = cfg.count
        slot = cfg.wire_slot_ns
        tx_ns = np.rint(np.arange(n, dtype=np.float64) * slot / CLOCK_TICK_NS)
        tx_ns *= CLOCK_TICK_NS

        fwd = transmit_train(self.path, tx_ns, np.random.default_rng(fwd_seed))
        back = transmit_train(
            self.path.reversed(),
            fwd.rx_ns[fwd.delivered],
            np.random.default_rng(bwd_seed),
        )
        received = fwd.delivered.copy()
        received[fwd.delivered] = back.delivered
        rx_ns = np.zeros(n, dtype=np.float64)
        rx_ns[received] = back.rx_ns[back.delivered]

        echoes = EchoSet(
            seq=np.arange(n, dtype=np.int64),
            tx_ns=tx_ns,
            rx_ns=rx_ns,
            received=received,
        )
        two_way_prop = 2.0 * self.path.length_km * self.path.prop_const_us_per_km
        return compute_stats(cfg, echoes, two_way_propagation_us=two_way_prop)

    def expected_rtt_us(self) -> float:
        return 2.0 * one_way_delay_us(self.path)
