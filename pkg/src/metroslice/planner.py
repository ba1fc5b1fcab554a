"""Latency-aware VNF placement.

Builds an RTT-weighted graph over the VIM-bearing nodes, enumerates
service-chain candidates ordered by total RTT cost, and places the first
candidate that is feasible (at most one VNF of a slice per VIM). A
request is blocked when no VIM is eligible for some VNF, when no
candidate is feasible, or when the cheapest feasible candidate exceeds
the slice's RTT requisite.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum

import networkx as nx

from .model import NsRequest, Topology, VimStatus

log = logging.getLogger(__name__)


class BlockReason(str, Enum):
    NO_ELIGIBLE_VIM = "NoEligibleVim"
    NO_VALID_SC = "NoValidSC"
    RTT_EXCEEDED = "RttExceeded"


@dataclass(frozen=True)
class ServiceChainCandidate:
    """One assignment of the chain's VNFs to VIMs, with its RTT cost."""

    vim_ids: tuple[str, ...]
    cost_us: float

    def to_record(self) -> dict:
        return {"vim_ids": list(self.vim_ids), "cost_us": self.cost_us}


@dataclass(frozen=True)
class PlacementDecision:
    candidate: ServiceChainCandidate | None
    block_reason: BlockReason | None
    ranked: tuple[ServiceChainCandidate, ...] = ()

    @property
    def placed(self) -> bool:
        return self.candidate is not None

    def to_record(self) -> dict:
        return {
            "placed": self.placed,
            "candidate": self.candidate.to_record() if self.candidate else None,
            "block_reason": self.block_reason.value if self.block_reason else None,
        }


class RttGraph:
    """Symmetric round-trip latency between terminals of interest.

    Terminals are the VIM-bearing nodes plus any configured ingress and
    egress. Missing entries mean the pair is unreachable.
    """

    def __init__(self, weights: dict[tuple[str, str], float]):
        self._w = weights

    def weight_us(self, u: str, v: str) -> float | None:
        if u == v:
            return 0.0
        return self._w.get((u, v), self._w.get((v, u)))


def build_rtt_graph(
    topology: Topology,
    terminal_nodes: list[str],
) -> RttGraph:
    """All-pairs round-trip latency over the transport topology.

    One-way latency of a path is the sum of link propagation delays plus
    the fixed latency of every intermediate node; terminal nodes do not
    charge their own fixed latency. Edge weight is twice the one-way
    minimum.
    """
    g = nx.Graph()
    for n in topology.nodes:
        g.add_node(n.node_id)
    for l in topology.links:
        a, z = l.endpoints
        lat = l.length_km * topology.prop_const_us_per_km
        if g.has_edge(a, z) and lat >= g[a][z]["latency_us"]:
            continue
        g.add_edge(a, z, latency_us=lat)

    fixed = {n.node_id: n.fixed_latency_us for n in topology.nodes}
    weights: dict[tuple[str, str], float] = {}
    # Charge the fixed latency of the node being entered, then refund the
    # destination's own charge: what remains is links + intermediate nodes.
    weight_fn = lambda a, b, d: d["latency_us"] + fixed[b]
    for i, u in enumerate(terminal_nodes):
        dist = nx.single_source_dijkstra_path_length(g, u, weight=weight_fn)
        for v in terminal_nodes[i + 1:]:
            if v in dist:
                one_way = dist[v] - fixed[v]
                weights[(u, v)] = 2.0 * one_way
    return RttGraph(weights)


def filter_vims(
    req: NsRequest, vims: list[VimStatus]
) -> dict[str, list[str]]:
    """Map each VNF id to the VIMs that can host it, ids sorted.

    Eligibility is inclusive on resource boundaries and requires the
    VNF's type tag among the VIM's instantiable types.
    """
    return {
        vnf.vnf_id: sorted(v.vim_id for v in vims if v.can_host(vnf))
        for vnf in req.chain
    }


def rank_service_chains(
    req: NsRequest,
    graph: RttGraph,
    eligibility: dict[str, list[str]],
    vim_node: dict[str, str],
    ingress: str | None = None,
    egress: str | None = None,
) -> list[ServiceChainCandidate]:
    """Up to req.k candidates by ascending cost, ties on the vim-id tuple.

    Cost is the sum of RTT weights between consecutive VNFs' VIM nodes,
    plus the ingress and egress access legs when configured. Feasibility
    (one VNF per VIM) is deliberately not applied here; the placement
    walk does that.
    """
    per_vnf = [eligibility[vnf.vnf_id] for vnf in req.chain]
    if any(not opts for opts in per_vnf):
        return []

    candidates: list[ServiceChainCandidate] = []
    for combo in itertools.product(*per_vnf):
        cost = 0.0
        nodes = [vim_node[v] for v in combo]
        legs = list(zip(nodes, nodes[1:]))
        if ingress is not None:
            legs.insert(0, (ingress, nodes[0]))
        if egress is not None:
            legs.append((nodes[-1], egress))
        for a, b in legs:
            w = graph.weight_us(a, b)
            if w is None:
                cost = None
                break
            cost += w
        if cost is None:
            continue
        candidates.append(ServiceChainCandidate(vim_ids=combo, cost_us=cost))
    candidates.sort(key=lambda c: (c.cost_us, c.vim_ids))
    return candidates[: req.k]


def place(
    req: NsRequest,
    topology: Topology,
    vims: list[VimStatus],
) -> PlacementDecision:
    """Select and commit a service chain for the request.

    On success the chosen VIMs' idle resources are decremented; a blocked
    request leaves every VIM untouched.
    """
    eligibility = filter_vims(req, vims)
    empty = [v for v, opts in eligibility.items() if not opts]
    if empty:
        log.info("%s blocked: no eligible VIM for %s", req.ns_id, empty)
        return PlacementDecision(None, BlockReason.NO_ELIGIBLE_VIM)

    useful_vims = sorted({v for opts in eligibility.values() for v in opts})
    vim_node = {v: topology.node_for_vim(v).node_id for v in useful_vims}
    terminals = sorted(set(vim_node.values()))
    for extra in (req.ingress, req.egress):
        if extra is not None and extra not in terminals:
            terminals.append(extra)
    graph = build_rtt_graph(topology, terminals)

    ranked = tuple(
        rank_service_chains(
            req, graph, eligibility, vim_node, req.ingress, req.egress
        )
    )
    chosen = next(
        (c for c in ranked if len(set(c.vim_ids)) == len(c.vim_ids)), None
    )
    if chosen is None:
        return PlacementDecision(None, BlockReason.NO_VALID_SC, ranked)
    if chosen.cost_us > req.max_rtt_us:
        log.info(
            "%s blocked: best chain %.1f us exceeds requisite %.1f us",
            req.ns_id, chosen.cost_us, req.max_rtt_us,
        )
        return PlacementDecision(None, BlockReason.RTT_EXCEEDED, ranked)

    by_id = {v.vim_id: v for v in vims}
    for vnf, vim_id in zip(req.chain, chosen.vim_ids):
        by_id[vim_id].allocate(vnf)
    log.info("%s placed on %s (%.1f us)", req.ns_id, chosen.vim_ids, chosen.cost_us)
    return PlacementDecision(chosen, None, ranked)
