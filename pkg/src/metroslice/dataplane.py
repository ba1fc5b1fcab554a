"""Deterministic dataplane simulator.

Models a provisioned circuit as an ordered list of elements, each adding a
fixed one-way latency, an independent per-packet loss probability, and a
gaussian timestamp jitter. On top of that the module provides the SNR ramp
generator and the pre-FEC BER curve used for soft-failure studies.

Delay model, one way:

    delay_us = sum(fixed_latency_us) + length_km * prop_const_us_per_km

Loss per traversal:      1 - prod(1 - loss_prob_i)
Jitter std per traversal: root-sum-square of element jitter_std_ns
Timestamps are quantized to the capture clock tick (322 MHz, 3.1 ns).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .model import (
    DEFAULT_PROP_CONST_US_PER_KM,
    NodeKind,
    Topology,
)

#: Hardware timestamping granularity: one tick of the 322 MHz capture clock.
CLOCK_TICK_NS = 3.1

#: Interface line rate used throughout the testbed.
LINE_RATE_GBPS = 100.0


class DataplaneError(Exception):
    pass


class NoPath(DataplaneError):
    """Source and destination are not connected in the topology."""


@dataclass(frozen=True)
class PathElement:
    """One traversed element: its latency, loss and jitter contribution."""

    element_id: str
    fixed_latency_us: float = 0.0
    loss_prob: float = 0.0
    jitter_std_ns: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError(f"{self.element_id}: loss_prob must be in [0, 1]")
        if self.fixed_latency_us < 0 or self.jitter_std_ns < 0:
            raise ValueError(f"{self.element_id}: latency/jitter must be >= 0")


@dataclass(frozen=True)
class PathModel:
    """One-way description of a circuit under test."""

    elements: tuple[PathElement, ...]
    length_km: float = 0.0
    prop_const_us_per_km: float = DEFAULT_PROP_CONST_US_PER_KM

    def __post_init__(self) -> None:
        if self.length_km < 0:
            raise ValueError("length_km must be >= 0")
        object.__setattr__(self, "elements", tuple(self.elements))

    def loss_prob(self) -> float:
        surv = 1.0
        for e in self.elements:
            surv *= 1.0 - e.loss_prob
        return 1.0 - surv

    def jitter_std_ns(self) -> float:
        return math.sqrt(sum(e.jitter_std_ns**2 for e in self.elements))

    def reversed(self) -> "PathModel":
        return PathModel(
            tuple(reversed(self.elements)),
            self.length_km,
            self.prop_const_us_per_km,
        )


def one_way_delay_us(p: PathModel) -> float:
    """Deterministic one-way latency of the path, excluding jitter."""
    fixed = sum(e.fixed_latency_us for e in p.elements)
    return fixed + p.length_km * p.prop_const_us_per_km


def serialization_delay_ns(
    wire_bytes: int, line_rate_gbps: float = LINE_RATE_GBPS
) -> float:
    """Time one frame occupies the wire at the given line rate."""
    return wire_bytes * 8.0 / line_rate_gbps


def quantize_ns(t_ns, tick_ns: float = CLOCK_TICK_NS):
    """Snap timestamps (scalar or array) to the nearest capture-clock tick."""
    return np.rint(np.asarray(t_ns, dtype=np.float64) / tick_ns) * tick_ns


@dataclass
class TransmitResult:
    """Per-packet outcome of one path traversal.

    ``rx_ns`` is only meaningful where ``delivered`` is True.
    """

    rx_ns: np.ndarray
    delivered: np.ndarray


def transmit_train(
    p: PathModel,
    tx_ns: np.ndarray,
    rng: int | np.random.Generator,
    tick_ns: float = CLOCK_TICK_NS,
) -> TransmitResult:
    """Propagate a train of packets one way across the path.

    Each packet is independently lost with the path's aggregate loss
    probability; survivors arrive at tx + one-way delay + gaussian jitter,
    quantized to the capture clock tick.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    tx_ns = np.asarray(tx_ns, dtype=np.float64)
    n = tx_ns.size
    delivered = rng.random(n) >= p.loss_prob()
    sigma = p.jitter_std_ns()
    jitter = rng.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)
    rx_ns = quantize_ns(tx_ns + one_way_delay_us(p) * 1000.0 + jitter, tick_ns)
    return TransmitResult(rx_ns=rx_ns, delivered=delivered)


# ---------------------------------------------------------------------------
# Channel quality: SNR ramps and the pre-FEC BER curve


@dataclass(frozen=True)
class ChannelQuality:
    """One monitoring sample of the optical channel."""

    t_s: float
    snr_db: float
    prefec_ber: float


@dataclass(frozen=True)
class DegradationScenario:
    """Linear SNR ramp, optionally preceded by a steady hold.

    ``ramp_start_s`` keeps the channel at ``snr0_db`` before the ramp
    begins, which is how a healthy monitored circuit looks before a
    failure starts developing.
    """

    ramp_db_per_s: float
    duration_s: float
    snr0_db: float = 23.0
    sample_period_s: float = 1.0
    ramp_start_s: float = 0.0

    def __post_init__(self) -> None:
        if self.ramp_db_per_s < 0:
            raise ValueError("ramp_db_per_s must be >= 0")
        if self.sample_period_s <= 0:
            raise ValueError("sample_period_s must be > 0")
        if self.duration_s < 0 or self.ramp_start_s < 0:
            raise ValueError("durations must be >= 0")


def ber_from_snr_db(snr_db):
    """Pre-FEC bit error rate of the coherent channel at a given SNR.

    ber = 0.5 * erfc(sqrt(snr_lin / 2)), snr_lin = 10 ** (snr_db / 10).
    Vectorized; output lies in [0, 0.5] and decreases with SNR.
    """
    snr_lin = np.power(10.0, np.asarray(snr_db, dtype=np.float64) / 10.0)
    return 0.5 * erfc(np.sqrt(snr_lin / 2.0))


def evolve_quality(s: DegradationScenario) -> list[ChannelQuality]:
    """Sample the SNR ramp at the scenario's monitoring period.

    snr(t) = snr0 for t < ramp_start, then decreases linearly at
    ramp_db_per_s. Samples cover [0, duration_s] inclusive.
    """
    t = np.arange(0.0, s.duration_s + s.sample_period_s / 2, s.sample_period_s)
    snr = s.snr0_db - s.ramp_db_per_s * np.maximum(0.0, t - s.ramp_start_s)
    ber = ber_from_snr_db(snr)
    return [
        ChannelQuality(float(ti), float(si), float(bi))
        for ti, si, bi in zip(t, snr, ber)
    ]


# ---------------------------------------------------------------------------
# Building path models from the topology

#: Per-kind defaults for contributions the topology file does not carry.
DEFAULT_ELEMENT_PARAMS: dict[NodeKind, tuple[float, float]] = {
    # kind: (loss_prob, jitter_std_ns)
    NodeKind.PROBE_ENDPOINT: (0.0, 2.0),
    NodeKind.AGG_SWITCH: (2.0e-7, 1.5),
    NodeKind.ROADM: (2.0e-7, 2.5),
    NodeKind.AMEN: (0.0, 0.0),
    NodeKind.MCEN: (0.0, 0.0),
}


@dataclass
class ElementParams:
    loss_prob: float = 0.0
    jitter_std_ns: float = 0.0


def element_for_node(
    t: Topology,
    node_id: str,
    overrides: dict[str, ElementParams] | None = None,
) -> PathElement:
    node = t.node(node_id)
    if overrides and node_id in overrides:
        p = overrides[node_id]
        loss, jit = p.loss_prob, p.jitter_std_ns
    else:
        loss, jit = DEFAULT_ELEMENT_PARAMS.get(node.kind, (0.0, 0.0))
    return PathElement(
        element_id=node_id,
        fixed_latency_us=node.fixed_latency_us,
        loss_prob=loss,
        jitter_std_ns=jit,
    )


def path_from_nodes(
    t: Topology,
    node_ids: list[str],
    length_km: float,
    overrides: dict[str, ElementParams] | None = None,
) -> PathModel:
    """Path model over an explicit element sequence and a total fibre length.

    Used by calibration setups where the fibre is patched directly between
    the listed elements rather than routed through the topology.
    """
    elements = tuple(element_for_node(t, nid, overrides) for nid in node_ids)
    return PathModel(elements, length_km, t.prop_const_us_per_km)


def path_from_topology(
    t: Topology,
    src: str,
    dst: str,
    overrides: dict[str, ElementParams] | None = None,
) -> PathModel:
    """Minimum-latency path between two nodes, as a dataplane model.

    Traversed nodes (endpoints included) contribute their fixed latency,
    loss and jitter; traversed links contribute propagation length.
    """
    import networkx as nx

    g = nx.Graph()
    for n in t.nodes:
        g.add_node(n.node_id)
    for l in t.links:
        a, z = l.endpoints
        lat = l.length_km * t.prop_const_us_per_km
        if g.has_edge(a, z):
            if lat >= g[a][z]["latency_us"]:
                continue
        g.add_edge(a, z, latency_us=lat, length_km=l.length_km)

    fixed = {n.node_id: n.fixed_latency_us for n in t.nodes}
    try:
        nodes = nx.dijkstra_path(
            g, src, dst, weight=lambda a, b, d: d["latency_us"] + fixed[b]
        )
    except nx.NetworkXNoPath as exc:
        raise NoPath(f"{src} -> {dst}") from exc
    length = sum(
        g[a][b]["length_km"] for a, b in zip(nodes, nodes[1:])
    )
    elements = tuple(element_for_node(t, nid, overrides) for nid in nodes)
    return PathModel(elements, length, t.prop_const_us_per_km)
