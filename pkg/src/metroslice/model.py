"""Domain model shared by the planner, the controllers, and the simulators.

Covers the transport topology (nodes, links, per-element latency
contributions), VIM resource snapshots, VNF chains with their latency
requisite, and the video-surveillance demand profile used for sizing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

#: Group-velocity delay of standard single-mode fibre, one way.
DEFAULT_PROP_CONST_US_PER_KM = 4.899


class NodeKind(str, Enum):
    AMEN = "AMEN"
    MCEN = "MCEN"
    ROADM = "ROADM"
    AGG_SWITCH = "AggSwitch"
    PROBE_ENDPOINT = "ProbeEndpoint"


class LinkKind(str, Enum):
    FIBER = "Fiber"
    PATCH = "Patch"


#: Only edge and core metro nodes host a VIM.
VIM_CAPABLE_KINDS = frozenset({NodeKind.AMEN, NodeKind.MCEN})


@dataclass
class VnfDescriptor:
    """Resource requirements of a single VNF in a service chain."""

    vnf_id: str
    type_tag: str
    cpu_req: int
    mem_req: int
    storage_req: int

    def __post_init__(self) -> None:
        if self.cpu_req <= 0 or self.mem_req <= 0 or self.storage_req <= 0:
            raise ValueError(f"{self.vnf_id}: resource requirements must be > 0")


@dataclass
class VimStatus:
    """Idle-resource snapshot of one VIM.

    ``instantiable_vnf_types`` lists the VNF type tags this VIM knows how
    to deploy; eligibility requires the tag as well as the resources.
    """

    vim_id: str
    cpu_idle: int
    mem_idle: int
    storage_idle: int
    instantiable_vnf_types: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if min(self.cpu_idle, self.mem_idle, self.storage_idle) < 0:
            raise ValueError(f"{self.vim_id}: idle resources must be >= 0")
        self.instantiable_vnf_types = frozenset(self.instantiable_vnf_types)

    def can_host(self, vnf: VnfDescriptor) -> bool:
        # Boundary is inclusive: a VNF that exactly consumes the idle
        # capacity is still placeable.
        return (
            self.cpu_idle >= vnf.cpu_req
            and self.mem_idle >= vnf.mem_req
            and self.storage_idle >= vnf.storage_req
            and vnf.type_tag in self.instantiable_vnf_types
        )

    def allocate(self, vnf: VnfDescriptor) -> None:
        if not self.can_host(vnf):
            raise ValueError(f"{self.vim_id} cannot host {vnf.vnf_id}")
        self.cpu_idle -= vnf.cpu_req
        self.mem_idle -= vnf.mem_req
        self.storage_idle -= vnf.storage_req


@dataclass
class Node:
    """Topology vertex. ``fixed_latency_us`` is the one-way transit delay
    added by the element itself, independent of fibre length."""

    node_id: str
    kind: NodeKind
    fixed_latency_us: float = 0.0
    vim: VimStatus | None = None


@dataclass
class Link:
    """Undirected fibre or patch cable between two nodes."""

    link_id: str
    endpoints: tuple[str, str]
    length_km: float
    kind: LinkKind = LinkKind.FIBER


@dataclass
class Topology:
    nodes: list[Node]
    links: list[Link]
    prop_const_us_per_km: float = DEFAULT_PROP_CONST_US_PER_KM

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def has_node(self, node_id: str) -> bool:
        return any(n.node_id == node_id for n in self.nodes)

    def vim_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.vim is not None]

    def node_for_vim(self, vim_id: str) -> Node:
        for n in self.nodes:
            if n.vim is not None and n.vim.vim_id == vim_id:
                return n
        raise KeyError(vim_id)


@dataclass(frozen=True)
class TopologyViolation:
    """One structural defect found by :func:`validate_topology`.

    Violations are data, not exceptions: callers decide what is fatal.
    """

    code: str
    detail: str


def validate_topology(t: Topology) -> list[TopologyViolation]:
    """Structural checks every other module relies on.

    An empty result means the topology is safe to hand to the planner,
    the controllers, and the dataplane simulator.
    """
    out: list[TopologyViolation] = []
    seen_nodes: set[str] = set()
    for n in t.nodes:
        if n.node_id in seen_nodes:
            out.append(TopologyViolation("duplicate-node-id", n.node_id))
        seen_nodes.add(n.node_id)
        if n.fixed_latency_us < 0:
            out.append(
                TopologyViolation(
                    "negative-node-latency", f"{n.node_id}: {n.fixed_latency_us}"
                )
            )
        if n.vim is not None and n.kind not in VIM_CAPABLE_KINDS:
            out.append(
                TopologyViolation(
                    "vim-on-transport-node", f"{n.node_id} ({n.kind.value})"
                )
            )
    seen_links: set[str] = set()
    seen_vims: set[str] = set()
    for n in t.nodes:
        if n.vim is not None:
            if n.vim.vim_id in seen_vims:
                out.append(TopologyViolation("duplicate-vim-id", n.vim.vim_id))
            seen_vims.add(n.vim.vim_id)
    for l in t.links:
        if l.link_id in seen_links:
            out.append(TopologyViolation("duplicate-link-id", l.link_id))
        seen_links.add(l.link_id)
        a, z = l.endpoints
        for end in (a, z):
            if end not in seen_nodes:
                out.append(
                    TopologyViolation("unknown-endpoint", f"{l.link_id}: {end}")
                )
        if a == z:
            out.append(TopologyViolation("self-loop", l.link_id))
        if l.length_km < 0:
            out.append(
                TopologyViolation("negative-length", f"{l.link_id}: {l.length_km}")
            )
    if t.prop_const_us_per_km <= 0:
        out.append(
            TopologyViolation("nonpositive-prop-const", str(t.prop_const_us_per_km))
        )
    return out


@dataclass
class NsRequest:
    """Network-slice instantiation request: an ordered VNF chain plus the
    end-to-end RTT requisite the selected service chain must satisfy."""

    ns_id: str
    chain: list[VnfDescriptor]
    max_rtt_us: float
    k: int = 10
    ingress: str | None = None
    egress: str | None = None

    def __post_init__(self) -> None:
        if not self.chain:
            raise ValueError(f"{self.ns_id}: chain must be non-empty")
        if self.max_rtt_us <= 0:
            raise ValueError(f"{self.ns_id}: max_rtt_us must be > 0")
        if self.k < 1:
            raise ValueError(f"{self.ns_id}: k must be >= 1")


@dataclass(frozen=True)
class DemandEntry:
    channel_count: int
    per_channel_mbps: float


@dataclass
class DemandProfile:
    """Aggregate traffic the surveillance deployment offers the slice."""

    entries: list[DemandEntry]
    ptz_max_rtt_ms: float = 10.0

    def __post_init__(self) -> None:
        for e in self.entries:
            if e.channel_count < 0 or e.per_channel_mbps < 0:
                raise ValueError("demand entries must be non-negative")
        if self.ptz_max_rtt_ms <= 0:
            raise ValueError("ptz_max_rtt_ms must be > 0")


def aggregate_bandwidth_mbps(d: DemandProfile) -> float:
    """Total offered load in Mb/s: sum of channel_count * per_channel rate."""
    return float(sum(e.channel_count * e.per_channel_mbps for e in d.entries))


def check_ptz_bound(measured_rtt_ms: float, d: DemandProfile) -> bool:
    """Pan-tilt-zoom control loop check; the bound itself is inclusive."""
    return measured_rtt_ms <= d.ptz_max_rtt_ms
