"""Disaggregated optical layer: OLS controller and transponder agents.

The OLS controller owns the ROADM-level topology, exposes service
interface points (SIPs), and provisions flexgrid media channels with
first-fit spectrum assignment. Transponder agents walk the five-step
logical-channel bring-up and report traffic-ready only after the laser
warm-up completes.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum

from .model import LinkKind, NodeKind, Topology

log = logging.getLogger(__name__)

#: Flexgrid anchor frequency, THz.
GRID_CENTER_THZ = 193.1
#: Central-frequency granularity, GHz per unit of n.
GRID_STEP_GHZ = 6.25
#: Slot-width granularity, GHz per unit of m.
WIDTH_STEP_GHZ = 12.5

#: Default slot width: m = 4 gives 50 GHz.
DEFAULT_SLOT_M = 4


class OpticalError(Exception):
    pass


class NoRoute(OpticalError):
    pass


class SpectrumCollision(OpticalError):
    pass


class SlotOutOfTunability(OpticalError):
    pass


class UnknownChannel(OpticalError):
    pass


class InvalidPhase(OpticalError):
    pass


class FrequencyOutOfRange(OpticalError):
    pass


@dataclass(frozen=True)
class FrequencySlot:
    """Flexgrid slot: center = 193.1 THz + n * 6.25 GHz, width = m * 12.5 GHz.

    In units of the 6.25 GHz grid the slot occupies [n - m, n + m]; two
    slots overlap when those intervals share more than an endpoint.
    """

    n: int
    m: int = DEFAULT_SLOT_M

    def __post_init__(self) -> None:
        if self.m <= 0:
            raise ValueError("m must be > 0")

    @property
    def center_thz(self) -> float:
        return GRID_CENTER_THZ + self.n * GRID_STEP_GHZ / 1000.0

    @property
    def width_ghz(self) -> float:
        return self.m * WIDTH_STEP_GHZ

    @property
    def interval(self) -> tuple[int, int]:
        return (self.n - self.m, self.n + self.m)

    def overlaps(self, other: "FrequencySlot") -> bool:
        return abs(self.n - other.n) < self.m + other.m

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "center_thz": self.center_thz,
            "width_ghz": self.width_ghz,
        }


@dataclass(frozen=True)
class Sip:
    """Service interface point: a client attachment to the OLS."""

    sip_id: str
    node_id: str
    port: str
    tunability: frozenset[int] = frozenset()

    def to_record(self) -> dict:
        return {
            "sip_id": self.sip_id,
            "node_id": self.node_id,
            "port": self.port,
            "tunability": sorted(self.tunability),
        }


class ChannelState(str, Enum):
    PROVISIONED = "Provisioned"
    DELETED = "Deleted"


@dataclass
class MediaChannel:
    mc_id: str
    a_sip: str
    z_sip: str
    slot: FrequencySlot
    route: tuple[str, ...]
    state: ChannelState = ChannelState.PROVISIONED

    def to_record(self) -> dict:
        return {
            "mc_id": self.mc_id,
            "a_sip": self.a_sip,
            "z_sip": self.z_sip,
            "slot": self.slot.to_record(),
            "route": list(self.route),
            "state": self.state.value,
        }


@dataclass(frozen=True)
class OlsView:
    """Topology as exported by the OLS controller."""

    nodes: tuple[str, ...]
    links: tuple[str, ...]
    abstract: bool


class OlsController:
    """Spectrum and route authority for the optical line system.

    Routing is minimum hop count over the ROADM subgraph, ties broken on
    the lexicographically smallest link-id sequence, so provisioning is
    reproducible. Spectrum state is derived from the set of provisioned
    channels; deleting a channel frees its slots implicitly.
    """

    def __init__(
        self,
        topology: Topology,
        sips: list[Sip],
        abstract_view: bool = False,
    ):
        self._abstract = abstract_view
        self._sips = {s.sip_id: s for s in sips}
        self._channels: dict[str, MediaChannel] = {}
        self._next_id = itertools.count(1)

        self._nodes = [
            n.node_id for n in topology.nodes if n.kind is NodeKind.ROADM
        ]
        node_set = set(self._nodes)
        self._links: dict[str, tuple[str, str]] = {}
        self._adj: dict[str, list[tuple[str, str]]] = {n: [] for n in self._nodes}
        for l in topology.links:
            a, z = l.endpoints
            if l.kind is LinkKind.FIBER and a in node_set and z in node_set:
                self._links[l.link_id] = (a, z)
                self._adj[a].append((l.link_id, z))
                self._adj[z].append((l.link_id, a))
        for n in self._adj:
            self._adj[n].sort()
        for s in sips:
            if s.node_id not in node_set:
                raise OpticalError(f"SIP {s.sip_id} attached to unknown ROADM")

    # -- TAPI-style surface -------------------------------------------------

    def get_context(self) -> tuple[list[Sip], OlsView]:
        sips = sorted(self._sips.values(), key=lambda s: s.sip_id)
        if self._abstract:
            view = OlsView(nodes=("ols",), links=(), abstract=True)
        else:
            view = OlsView(
                nodes=tuple(sorted(self._nodes)),
                links=tuple(sorted(self._links)),
                abstract=False,
            )
        return sips, view

    def get_active_connections(self) -> list[MediaChannel]:
        active = [
            c for c in self._channels.values()
            if c.state is ChannelState.PROVISIONED
        ]
        return sorted(active, key=lambda c: c.mc_id)

    def create_media_channel(
        self,
        a_sip: str,
        z_sip: str,
        slot: FrequencySlot | None = None,
        floor_n: int = 0,
        m: int = DEFAULT_SLOT_M,
    ) -> MediaChannel:
        """Provision a channel between two SIPs.

        With an explicit slot the request fails on any overlap with a
        provisioned channel sharing a route link, or if either SIP cannot
        tune to it. Without a slot, first-fit picks the smallest n >= floor
        that is collision-free on the route and tunable at both ends.
        """
        sa = self._sip(a_sip)
        sz = self._sip(z_sip)
        route = self._route(sa.node_id, sz.node_id)
        if slot is not None:
            self._check_tunability(sa, sz, slot.n)
            clash = self._first_collision(route, slot)
            if clash is not None:
                raise SpectrumCollision(
                    f"slot n={slot.n} m={slot.m} collides with {clash} on route"
                )
        else:
            slot = self._first_fit(sa, sz, route, floor_n, m)
        mc = MediaChannel(
            mc_id=f"mc-{next(self._next_id):04d}",
            a_sip=a_sip,
            z_sip=z_sip,
            slot=slot,
            route=route,
        )
        self._channels[mc.mc_id] = mc
        log.info("provisioned %s: n=%d m=%d route=%s",
                 mc.mc_id, slot.n, slot.m, "/".join(route))
        return mc

    def delete_media_channel(self, mc_id: str) -> MediaChannel:
        mc = self._channels.get(mc_id)
        if mc is None or mc.state is not ChannelState.PROVISIONED:
            raise UnknownChannel(mc_id)
        mc.state = ChannelState.DELETED
        return mc

    # -- internals ----------------------------------------------------------

    def _sip(self, sip_id: str) -> Sip:
        try:
            return self._sips[sip_id]
        except KeyError:
            raise OpticalError(f"unknown SIP {sip_id}") from None

    def _route(self, a_node: str, z_node: str) -> tuple[str, ...]:
        if a_node == z_node:
            return ()
        # BFS over ROADM hops; explore neighbours in link-id order and keep
        # the first path found per node, which yields the lexicographically
        # smallest link sequence among minimum-hop routes.
        best: dict[str, tuple[str, ...]] = {a_node: ()}
        frontier = [a_node]
        while frontier and z_node not in best:
            nxt: list[str] = []
            layer: dict[str, tuple[str, ...]] = {}
            for node in frontier:
                for link_id, peer in self._adj[node]:
                    if peer in best:
                        continue
                    cand = best[node] + (link_id,)
                    if peer not in layer or cand < layer[peer]:
                        layer[peer] = cand
            for peer, path in layer.items():
                best[peer] = path
                nxt.append(peer)
            frontier = nxt
        if z_node not in best:
            raise NoRoute(f"{a_node} -> {z_node}")
        return best[z_node]

    def _occupancy(self, link_id: str) -> list[tuple[FrequencySlot, str]]:
        out = []
        for c in self._channels.values():
            if c.state is ChannelState.PROVISIONED and link_id in c.route:
                out.append((c.slot, c.mc_id))
        return out

    def _first_collision(
        self, route: tuple[str, ...], slot: FrequencySlot
    ) -> str | None:
        for link_id in route:
            for other, mc_id in self._occupancy(link_id):
                if slot.overlaps(other):
                    return mc_id
        return None

    def _check_tunability(self, sa: Sip, sz: Sip, n: int) -> None:
        for s in (sa, sz):
            if s.tunability and n not in s.tunability:
                raise SlotOutOfTunability(f"{s.sip_id} cannot tune to n={n}")

    def _first_fit(
        self,
        sa: Sip,
        sz: Sip,
        route: tuple[str, ...],
        floor_n: int,
        m: int,
    ) -> FrequencySlot:
        if sa.tunability and sz.tunability:
            candidates = sorted(
                n for n in sa.tunability & sz.tunability if n >= floor_n
            )
        elif sa.tunability or sz.tunability:
            tun = sa.tunability or sz.tunability
            candidates = sorted(n for n in tun if n >= floor_n)
        else:
            # Untunable-constrained SIPs: scan the grid upward from the floor.
            candidates = range(floor_n, floor_n + 4096)
        for n in candidates:
            slot = FrequencySlot(n=n, m=m)
            if self._first_collision(route, slot) is None:
                return slot
        raise SpectrumCollision(
            f"no free slot of width m={m} at or above n={floor_n}"
        )


# ---------------------------------------------------------------------------
# Transponders


class TransponderPhase(str, Enum):
    BLANK = "Blank"
    LINE_CHANNELS_CREATED = "LineChannelsCreated"
    OCH_CONFIGURED = "OchConfigured"
    TRANSCEIVER_CREATED = "TransceiverCreated"
    CLIENT_CHANNEL_CREATED = "ClientChannelCreated"
    ASSIGNED = "Assigned"


_PHASE_ORDER = list(TransponderPhase)

#: The five bring-up steps, in order, with the phase each one reaches.
CONFIG_STEPS: tuple[tuple[str, TransponderPhase], ...] = (
    ("create_line_logical_channels", TransponderPhase.LINE_CHANNELS_CREATED),
    ("configure_och_frequency_power", TransponderPhase.OCH_CONFIGURED),
    ("create_transceiver", TransponderPhase.TRANSCEIVER_CREATED),
    ("create_client_logical_channel", TransponderPhase.CLIENT_CHANNEL_CREATED),
    ("assign_client_to_line", TransponderPhase.ASSIGNED),
)


@dataclass(frozen=True)
class StepEvent:
    step: int
    name: str
    phase: TransponderPhase
    t_s: float

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "name": self.name,
            "phase": self.phase.value,
            "t_s": self.t_s,
        }


@dataclass
class VirtualClock:
    """Simulated wall clock; nothing in the stack sleeps for real."""

    now_s: float = 0.0

    def advance(self, dt_s: float) -> float:
        if dt_s < 0:
            raise ValueError("cannot advance a clock backwards")
        self.now_s += dt_s
        return self.now_s


@dataclass
class Transponder:
    """OpenConfig-style terminal device with a single line port."""

    tp_id: str
    tunable_n: frozenset[int] = frozenset()
    phase: TransponderPhase = TransponderPhase.BLANK
    och: FrequencySlot | None = None
    tx_power_dbm: float | None = None
    logical_channels: dict = field(default_factory=dict)
    step_log: list[StepEvent] = field(default_factory=list)
    ready_at_s: float | None = None

    def traffic_ready(self, t_s: float) -> bool:
        return (
            self.phase is TransponderPhase.ASSIGNED
            and self.ready_at_s is not None
            and t_s >= self.ready_at_s
        )

    def to_record(self) -> dict:
        return {
            "tp_id": self.tp_id,
            "phase": self.phase.value,
            "och": self.och.to_record() if self.och else None,
            "tx_power_dbm": self.tx_power_dbm,
            "logical_channels": self.logical_channels,
            "ready_at_s": self.ready_at_s,
            "steps": [s.to_record() for s in self.step_log],
        }


def configure_transponder(
    tp: Transponder,
    slot: FrequencySlot,
    tx_power_dbm: float,
    clock: VirtualClock,
    config_duration_s: float = 2.0,
    laser_warmup_s: float = 125.0,
) -> Transponder:
    """Run the five-step bring-up on a blank transponder.

    The clock advances by config_duration_s (spread evenly over the
    steps); the laser then needs laser_warmup_s before the device is
    traffic-ready, which is reflected in ready_at_s rather than by
    blocking the clock.
    """
    if tp.phase is not TransponderPhase.BLANK:
        raise InvalidPhase(f"{tp.tp_id} is {tp.phase.value}, expected Blank")
    if tp.tunable_n and slot.n not in tp.tunable_n:
        raise FrequencyOutOfRange(
            f"{tp.tp_id} cannot tune to n={slot.n} ({slot.center_thz} THz)"
        )

    ln = f"{tp.tp_id}-line"
    step_dt = config_duration_s / len(CONFIG_STEPS)
    for i, (name, phase) in enumerate(CONFIG_STEPS, start=1):
        clock.advance(step_dt)
        prev = _PHASE_ORDER.index(tp.phase)
        if _PHASE_ORDER.index(phase) <= prev:
            raise InvalidPhase(f"{tp.tp_id}: phase cannot move backwards")
        tp.phase = phase
        tp.step_log.append(StepEvent(i, name, phase, clock.now_s))
        if phase is TransponderPhase.LINE_CHANNELS_CREATED:
            # OTU4 carries ODU4 and is mapped into the OCH carrier.
            tp.logical_channels = {
                "line": {
                    "otu4": f"{ln}-otu4",
                    "odu4": f"{ln}-odu4",
                    "och": f"{ln}-och",
                    "mapping": [
                        [f"{ln}-odu4", f"{ln}-otu4"],
                        [f"{ln}-otu4", f"{ln}-och"],
                    ],
                },
            }
        elif phase is TransponderPhase.OCH_CONFIGURED:
            tp.och = slot
            tp.tx_power_dbm = tx_power_dbm
        elif phase is TransponderPhase.TRANSCEIVER_CREATED:
            tp.logical_channels["transceiver"] = f"{tp.tp_id}-xcvr"
        elif phase is TransponderPhase.CLIENT_CHANNEL_CREATED:
            tp.logical_channels["client"] = {"odu4": f"{tp.tp_id}-client-odu4"}
        elif phase is TransponderPhase.ASSIGNED:
            tp.logical_channels["assignment"] = [
                f"{tp.tp_id}-client-odu4",
                f"{ln}-odu4",
            ]
    tp.ready_at_s = clock.now_s + laser_warmup_s
    return tp
