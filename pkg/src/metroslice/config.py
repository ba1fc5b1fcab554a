"""Scenario and topology file loading.

Topology files carry exactly these top-level keys:

    prop_const_us_per_km: float
    nodes[]:  {id, kind, fixed_latency_us?, vim?}
    links[]:  {id, endpoints: [a, z], length_km, kind?}
    vims[]:   {vim_id, cpu_idle, mem_idle, storage_idle,
               instantiable_vnf_types[]}
    demand:   {entries[]: {channel_count, per_channel_mbps},
               ptz_max_rtt_ms}

A scenario file references a topology and a slice request file and adds
timing, probe, optical, dataplane, degradation, and calibration-row
settings. Parse problems raise ConfigError with the offending file and
key path in the message.
"""

from __future__ import annotations

import copy
import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dataplane import DegradationScenario, ElementParams
from .mda import DetectorConfig, MdaController
from .model import (
    DemandEntry,
    DemandProfile,
    Link,
    LinkKind,
    Node,
    NodeKind,
    NsRequest,
    Topology,
    VimStatus,
    VnfDescriptor,
    validate_topology,
)
from .optical import DEFAULT_SLOT_M, OlsController, Sip, Transponder, VirtualClock
from .orchestrator import TimingConfig, World
from .probe import BertType, TrainConfig


class ConfigError(Exception):
    pass


def default_scenario_path() -> Path:
    return Path(
        importlib.resources.files("metroslice.data").joinpath("scenario.yaml")
    )


def _load_yaml(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: file not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


class _Ctx:
    """Tracks the key path while digging through a parsed document."""

    def __init__(self, path: Path, data: dict):
        self.file = path
        self.data = data

    def get(self, mapping, key, expect, where, required=True, default=None):
        if key not in mapping:
            if required:
                raise ConfigError(f"{self.file}: missing key {where}{key}")
            return default
        value = mapping[key]
        if expect is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, expect):
            raise ConfigError(
                f"{self.file}: {where}{key}: expected {expect.__name__}, "
                f"got {type(value).__name__}"
            )
        return value


def load_topology(path: str | Path) -> tuple[Topology, DemandProfile]:
    path = Path(path)
    ctx = _Ctx(path, _load_yaml(path))
    data = ctx.data

    vims: dict[str, VimStatus] = {}
    for i, raw in enumerate(ctx.get(data, "vims", list, "")):
        where = f"vims[{i}]."
        try:
            vim = VimStatus(
                vim_id=ctx.get(raw, "vim_id", str, where),
                cpu_idle=ctx.get(raw, "cpu_idle", int, where),
                mem_idle=ctx.get(raw, "mem_idle", int, where),
                storage_idle=ctx.get(raw, "storage_idle", int, where),
                instantiable_vnf_types=frozenset(
                    ctx.get(raw, "instantiable_vnf_types", list, where)
                ),
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: vims[{i}]: {exc}") from exc
        if vim.vim_id in vims:
            raise ConfigError(f"{path}: vims[{i}]: duplicate id {vim.vim_id}")
        vims[vim.vim_id] = vim

    nodes = []
    for i, raw in enumerate(ctx.get(data, "nodes", list, "")):
        where = f"nodes[{i}]."
        kind_raw = ctx.get(raw, "kind", str, where)
        try:
            kind = NodeKind(kind_raw)
        except ValueError:
            raise ConfigError(
                f"{path}: nodes[{i}].kind: unknown kind {kind_raw!r}"
            ) from None
        vim = None
        if "vim" in raw:
            vim_id = ctx.get(raw, "vim", str, where)
            if vim_id not in vims:
                raise ConfigError(
                    f"{path}: nodes[{i}].vim: unknown VIM {vim_id!r}"
                )
            vim = vims[vim_id]
        nodes.append(
            Node(
                node_id=ctx.get(raw, "id", str, where),
                kind=kind,
                fixed_latency_us=ctx.get(
                    raw, "fixed_latency_us", float, where,
                    required=False, default=0.0,
                ),
                vim=vim,
            )
        )

    links = []
    for i, raw in enumerate(ctx.get(data, "links", list, "")):
        where = f"links[{i}]."
        endpoints = ctx.get(raw, "endpoints", list, where)
        if len(endpoints) != 2:
            raise ConfigError(
                f"{path}: links[{i}].endpoints: need exactly two node ids"
            )
        kind_raw = ctx.get(raw, "kind", str, where, required=False,
                           default=LinkKind.FIBER.value)
        try:
            kind = LinkKind(kind_raw)
        except ValueError:
            raise ConfigError(
                f"{path}: links[{i}].kind: unknown kind {kind_raw!r}"
            ) from None
        links.append(
            Link(
                link_id=ctx.get(raw, "id", str, where),
                endpoints=(endpoints[0], endpoints[1]),
                length_km=ctx.get(raw, "length_km", float, where),
                kind=kind,
            )
        )

    demand_raw = ctx.get(data, "demand", dict, "")
    entries = []
    for i, raw in enumerate(ctx.get(demand_raw, "entries", list, "demand.")):
        where = f"demand.entries[{i}]."
        entries.append(
            DemandEntry(
                channel_count=ctx.get(raw, "channel_count", int, where),
                per_channel_mbps=ctx.get(raw, "per_channel_mbps", float, where),
            )
        )
    try:
        demand = DemandProfile(
            entries=entries,
            ptz_max_rtt_ms=ctx.get(demand_raw, "ptz_max_rtt_ms", float,
                                   "demand."),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: demand: {exc}") from exc

    topology = Topology(
        nodes=nodes,
        links=links,
        prop_const_us_per_km=ctx.get(data, "prop_const_us_per_km", float, ""),
    )
    violations = validate_topology(topology)
    if violations:
        summary = "; ".join(f"{v.code}: {v.detail}" for v in violations)
        raise ConfigError(f"{path}: invalid topology: {summary}")
    return topology, demand


def load_ns_request(path: str | Path) -> NsRequest:
    path = Path(path)
    ctx = _Ctx(path, _load_yaml(path))
    data = ctx.data
    chain = []
    for i, raw in enumerate(ctx.get(data, "vnfs", list, "")):
        where = f"vnfs[{i}]."
        try:
            chain.append(
                VnfDescriptor(
                    vnf_id=ctx.get(raw, "vnf_id", str, where),
                    type_tag=ctx.get(raw, "type_tag", str, where),
                    cpu_req=ctx.get(raw, "cpu_req", int, where),
                    mem_req=ctx.get(raw, "mem_req", int, where),
                    storage_req=ctx.get(raw, "storage_req", int, where),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: vnfs[{i}]: {exc}") from exc
    try:
        return NsRequest(
            ns_id=ctx.get(data, "ns_id", str, ""),
            chain=chain,
            max_rtt_us=ctx.get(data, "max_rtt_us", float, ""),
            k=ctx.get(data, "k", int, "", required=False, default=10),
            ingress=ctx.get(data, "ingress", str, "", required=False),
            egress=ctx.get(data, "egress", str, "", required=False),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class CalibrationRow:
    """One measurement row: an element sequence and a patched fibre length."""

    label: str
    length_km: float
    path_nodes: tuple[str, ...]


@dataclass
class Scenario:
    topology: Topology
    demand: DemandProfile
    request: NsRequest
    timing: TimingConfig
    probe_cfg: TrainConfig
    trains_per_row: int
    degradation: DegradationScenario
    detector: DetectorConfig
    rows: list[CalibrationRow]
    element_overrides: dict[str, ElementParams]
    probe_endpoints: tuple[str, str]
    sip_tunability: tuple[int, int]
    tp_tunability: tuple[int, int]
    slot_floor_n: int
    slot_m: int
    abstract_ols: bool
    tx_power_dbm: float
    seed: int


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    ctx = _Ctx(path, _load_yaml(path))
    data = ctx.data

    topo_file = path.parent / ctx.get(data, "topology", str, "")
    req_file = path.parent / ctx.get(data, "ns_request", str, "")
    topology, demand = load_topology(topo_file)
    request = load_ns_request(req_file)

    t = ctx.get(data, "timing", dict, "", required=False, default={})
    try:
        timing = TimingConfig(
            vnf_instantiation_s=ctx.get(t, "vnf_instantiation_s", float,
                                        "timing.", False, 40.0),
            media_channel_s=ctx.get(t, "media_channel_s", float,
                                    "timing.", False, 5.0),
            tp_config_s=ctx.get(t, "tp_config_s", float, "timing.", False, 2.0),
            laser_warmup_s=ctx.get(t, "laser_warmup_s", float,
                                   "timing.", False, 125.0),
            packet_config_s=ctx.get(t, "packet_config_s", float,
                                    "timing.", False, 2.0),
            orchestration_overhead_s=ctx.get(
                t, "orchestration_overhead_s", float, "timing.", False, 3.0),
            parallel_transponders=ctx.get(
                t, "parallel_transponders", bool, "timing.", False, True),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: timing: {exc}") from exc

    p = ctx.get(data, "probe", dict, "", required=False, default={})
    bert_raw = ctx.get(p, "bert_type", str, "probe.", False, "Prbs31")
    try:
        bert = BertType(bert_raw)
    except ValueError:
        raise ConfigError(
            f"{path}: probe.bert_type: unknown type {bert_raw!r}"
        ) from None
    try:
        probe_cfg = TrainConfig(
            count=ctx.get(p, "count", int, "probe.", False, 1_000_000),
            ip_payload_bytes=ctx.get(p, "ip_payload_bytes", int,
                                     "probe.", False, 1456),
            vlan_id=ctx.get(p, "vlan_id", int, "probe.", False, 100),
            bert_type=bert,
            timeout_ms=ctx.get(p, "timeout_ms", int, "probe.", False, 10_000),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: probe: {exc}") from exc
    trains_per_row = ctx.get(p, "trains_per_row", int, "probe.", False, 10)

    d = ctx.get(data, "degradation", dict, "", required=False, default={})
    try:
        degradation = DegradationScenario(
            ramp_db_per_s=ctx.get(d, "ramp_db_per_s", float,
                                  "degradation.", False, 0.25),
            duration_s=ctx.get(d, "duration_s", float,
                               "degradation.", False, 100.0),
            snr0_db=ctx.get(d, "snr0_db", float, "degradation.", False, 23.0),
            sample_period_s=ctx.get(d, "sample_period_s", float,
                                    "degradation.", False, 1.0),
            ramp_start_s=ctx.get(d, "ramp_start_s", float,
                                 "degradation.", False, 10.0),
        )
        detector = DetectorConfig(
            delta_db=ctx.get(d, "delta_db", float, "degradation.", False, 0.5),
            consecutive=ctx.get(d, "consecutive", int,
                                "degradation.", False, 3),
            fec_limit_ber=ctx.get(d, "fec_limit_ber", float,
                                  "degradation.", False, 2.0e-2),
            baseline_window=ctx.get(d, "baseline_window", int,
                                    "degradation.", False, 10),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: degradation: {exc}") from exc

    dp = ctx.get(data, "dataplane", dict, "", required=False, default={})
    overrides = {}
    for node_id, raw in ctx.get(dp, "element_overrides", dict, "dataplane.",
                                False, {}).items():
        where = f"dataplane.element_overrides.{node_id}."
        overrides[node_id] = ElementParams(
            loss_prob=ctx.get(raw, "loss_prob", float, where, False, 0.0),
            jitter_std_ns=ctx.get(raw, "jitter_std_ns", float, where,
                                  False, 0.0),
        )

    o = ctx.get(data, "optical", dict, "", required=False, default={})
    sip_tun = ctx.get(o, "sip_tunability_n", list, "optical.",
                      False, [-256, 256])
    tp_tun = ctx.get(o, "tp_tunability_n", list, "optical.",
                     False, [-256, 256])
    for name, rng in (("sip_tunability_n", sip_tun), ("tp_tunability_n", tp_tun)):
        if len(rng) != 2 or rng[0] > rng[1]:
            raise ConfigError(f"{path}: optical.{name}: expected [min, max]")

    rows = []
    for i, raw in enumerate(ctx.get(data, "calibration_rows", list, "",
                                    required=False, default=[])):
        where = f"calibration_rows[{i}]."
        nodes = ctx.get(raw, "path", list, where)
        for nid in nodes:
            if not topology.has_node(nid):
                raise ConfigError(
                    f"{path}: calibration_rows[{i}].path: unknown node {nid!r}"
                )
        rows.append(
            CalibrationRow(
                label=ctx.get(raw, "label", str, where),
                length_km=ctx.get(raw, "length_km", float, where),
                path_nodes=tuple(nodes),
            )
        )

    endpoints = ctx.get(data, "probe_endpoints", list, "")
    if len(endpoints) != 2 or not all(topology.has_node(e) for e in endpoints):
        raise ConfigError(
            f"{path}: probe_endpoints: expected two known node ids"
        )

    return Scenario(
        topology=topology,
        demand=demand,
        request=request,
        timing=timing,
        probe_cfg=probe_cfg,
        trains_per_row=trains_per_row,
        degradation=degradation,
        detector=detector,
        rows=rows,
        element_overrides=overrides,
        probe_endpoints=(endpoints[0], endpoints[1]),
        sip_tunability=(sip_tun[0], sip_tun[1]),
        tp_tunability=(tp_tun[0], tp_tun[1]),
        slot_floor_n=ctx.get(o, "slot_floor_n", int, "optical.", False, 0),
        slot_m=ctx.get(o, "slot_m", int, "optical.", False, DEFAULT_SLOT_M),
        abstract_ols=ctx.get(o, "abstract_view", bool, "optical.", False,
                             False),
        tx_power_dbm=ctx.get(o, "tx_power_dbm", float, "optical.", False, 0.0),
        seed=ctx.get(data, "seed", int, "", required=False, default=0),
    )


def build_world(scenario: Scenario, seed: int | None = None) -> World:
    """Instantiate the mutable runtime state for one scenario run.

    The topology (and with it every VIM resource snapshot) is copied, so
    worlds built from one scenario never share allocation state.
    """
    topology = copy.deepcopy(scenario.topology)
    roadms = sorted(
        n.node_id for n in topology.nodes if n.kind is NodeKind.ROADM
    )
    if len(roadms) < 2:
        raise ConfigError("scenario needs at least two ROADMs for the circuit")
    tun = frozenset(
        range(scenario.sip_tunability[0], scenario.sip_tunability[1] + 1)
    )
    tp_tun = frozenset(
        range(scenario.tp_tunability[0], scenario.tp_tunability[1] + 1)
    )
    # One transponder per slice endpoint, attached to the ROADMs nearest
    # the probe endpoints (first and second in id order by convention).
    sips = [
        Sip(sip_id="sip-a", node_id=roadms[0], port="client-1", tunability=tun),
        Sip(sip_id="sip-z", node_id=roadms[1], port="client-1", tunability=tun),
    ]
    transponders = {
        "tp-a": Transponder(tp_id="tp-a", tunable_n=tp_tun),
        "tp-z": Transponder(tp_id="tp-z", tunable_n=tp_tun),
    }
    sip_of_tp = {"tp-a": "sip-a", "tp-z": "sip-z"}
    ols = OlsController(topology, sips,
                        abstract_view=scenario.abstract_ols)
    return World(
        topology=topology,
        vims=[n.vim for n in topology.vim_nodes()],
        ols=ols,
        transponders=transponders,
        sip_of_tp=sip_of_tp,
        mda=MdaController(VirtualClock()),
        demand=scenario.demand,
        timing=scenario.timing,
        probe_cfg=scenario.probe_cfg,
        element_overrides=scenario.element_overrides,
        probe_endpoints=scenario.probe_endpoints,
        slot_floor_n=scenario.slot_floor_n,
        slot_m=scenario.slot_m,
        tx_power_dbm=scenario.tx_power_dbm,
        seed=scenario.seed if seed is None else seed,
    )
