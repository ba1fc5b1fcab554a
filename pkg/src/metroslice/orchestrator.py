"""Slice orchestration workflows over a virtual clock.

WF1 instantiates a network slice: placement, NFVO admission, then the VNF
branch and the connectivity branch (packet configuration, media channel,
transponders) running in parallel. WF2 commissions the slice with probe
trains and records verdicts in the MDA. All timing is simulated; KPIs are
derived from event timestamps only.

KPI-1: optical connectivity provisioning (media channel to lasers ready).
KPI-2: end-to-end connectivity (packet plus optical).
KPI-3: complete slice setup including VNF instantiation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .dataplane import ElementParams, PathModel, path_from_topology
from .mda import MdaController, MeasurementRecord
from .model import (
    DemandProfile,
    NsRequest,
    Topology,
    VimStatus,
    check_ptz_bound,
)
from .optical import (
    DEFAULT_SLOT_M,
    OlsController,
    OpticalError,
    Transponder,
    VirtualClock,
    configure_transponder,
)
from .planner import PlacementDecision, place
from .probe import SimulatedProbe, TrainConfig

log = logging.getLogger(__name__)


class OrchestratorError(Exception):
    pass


class WorkflowError(OrchestratorError):
    """Provisioning failed; already-created media channels were rolled back."""


class IncompleteLog(OrchestratorError):
    pass


@dataclass(frozen=True)
class TimingConfig:
    """Virtual durations of the provisioning phases, in seconds."""

    vnf_instantiation_s: float = 40.0
    media_channel_s: float = 5.0
    tp_config_s: float = 2.0
    laser_warmup_s: float = 125.0
    packet_config_s: float = 2.0
    orchestration_overhead_s: float = 3.0
    parallel_transponders: bool = True

    def __post_init__(self) -> None:
        for name in (
            "vnf_instantiation_s",
            "media_channel_s",
            "tp_config_s",
            "laser_warmup_s",
            "packet_config_s",
            "orchestration_overhead_s",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class WorkflowEvent:
    seq: int
    t_virtual_s: float
    actor: str
    label: str
    detail: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "seq": self.seq,
            "t_virtual_s": self.t_virtual_s,
            "actor": self.actor,
            "label": self.label,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class KpiReport:
    kpi1_s: float
    kpi2_s: float
    kpi3_s: float
    excl_transponder_s: float
    phases: dict

    def to_record(self) -> dict:
        return {
            "kpi1_s": self.kpi1_s,
            "kpi2_s": self.kpi2_s,
            "kpi3_s": self.kpi3_s,
            "excl_transponder_s": self.excl_transponder_s,
            "phases": self.phases,
        }


@dataclass
class World:
    """Everything the orchestrator acts on."""

    topology: Topology
    vims: list[VimStatus]
    ols: OlsController
    transponders: dict[str, Transponder]
    sip_of_tp: dict[str, str]
    mda: MdaController
    demand: DemandProfile
    timing: TimingConfig = TimingConfig()
    probe_cfg: TrainConfig = TrainConfig(count=1_000_000)
    element_overrides: dict[str, ElementParams] = field(default_factory=dict)
    probe_endpoints: tuple[str, str] | None = None
    slot_floor_n: int = 0
    slot_m: int = DEFAULT_SLOT_M
    tx_power_dbm: float = 0.0
    seed: int = 0


class _EventLog:
    def __init__(self) -> None:
        self._staged: list[tuple[float, str, str, dict]] = []

    def add(self, t_s: float, actor: str, label: str, **detail) -> None:
        self._staged.append((t_s, actor, label, detail))

    def finish(self) -> list[WorkflowEvent]:
        # Stable by timestamp: simultaneous events keep insertion order, so
        # the interleaving of parallel branches is reproducible.
        ordered = sorted(self._staged, key=lambda e: e[0])
        return [
            WorkflowEvent(seq=i + 1, t_virtual_s=t, actor=actor, label=label,
                          detail=detail)
            for i, (t, actor, label, detail) in enumerate(ordered)
        ]


def run_wf1(
    req: NsRequest, world: World
) -> tuple[PlacementDecision, KpiReport | None, list[WorkflowEvent]]:
    """Instantiate a slice. Blocked requests return a three-event log and
    no KPI report; provisioning errors roll back created media channels."""
    timing = world.timing
    events = _EventLog()
    t0 = 0.0
    events.add(t0, "planner", "m01_retrieve_ns_descriptors", ns_id=req.ns_id)
    events.add(
        t0, "planner", "m02_retrieve_vim_status",
        vims=[v.vim_id for v in world.vims],
    )

    decision = place(req, world.topology, world.vims)
    if not decision.placed:
        events.add(
            t0, "planner", "m03_placement_blocked",
            reason=decision.block_reason.value,
        )
        return decision, None, events.finish()
    events.add(
        t0, "planner", "m03_ns_instantiation_request",
        placement=decision.candidate.to_record(),
    )

    t_admitted = t0 + timing.orchestration_overhead_s
    events.add(
        t_admitted, "nfvo", "m04_vnf_instantiation_dispatch",
        vims=list(decision.candidate.vim_ids),
    )

    # VNF branch: all VNFs instantiate in parallel on their VIMs.
    t_vnfs_done = t_admitted + timing.vnf_instantiation_s
    events.add(
        t_vnfs_done, "vim", "vnfs_instantiated",
        vnfs=[v.vnf_id for v in req.chain],
    )

    # Connectivity branch: packet first, then the optical segment.
    t_conn_start = t_admitted
    events.add(t_conn_start, "parent-controller", "m05_connectivity_request",
               ns_id=req.ns_id)
    events.add(t_conn_start, "packet-controller", "m06_packet_config_request",
               vlan_id=world.probe_cfg.vlan_id)
    t_packet_done = t_conn_start + timing.packet_config_s
    events.add(t_packet_done, "packet-controller", "packet_configured")

    t_optical_start = t_packet_done
    created_mc = None
    try:
        sips, view = world.ols.get_context()
        events.add(
            t_optical_start, "parent-controller", "m07_get_tapi_context",
            sips=[s.sip_id for s in sips], nodes=list(view.nodes),
        )
        active = world.ols.get_active_connections()
        events.add(
            t_optical_start, "parent-controller", "m08_get_active_media_channels",
            mc_ids=[c.mc_id for c in active],
        )
        tp_ids = sorted(world.transponders)
        if len(tp_ids) < 2:
            raise WorkflowError("need two transponders for the slice circuit")
        a_tp, z_tp = tp_ids[0], tp_ids[1]
        events.add(
            t_optical_start, "parent-controller", "m09_create_media_channel",
            a_sip=world.sip_of_tp[a_tp], z_sip=world.sip_of_tp[z_tp],
        )
        created_mc = world.ols.create_media_channel(
            world.sip_of_tp[a_tp],
            world.sip_of_tp[z_tp],
            floor_n=world.slot_floor_n,
            m=world.slot_m,
        )
        t_mc_done = t_optical_start + timing.media_channel_s
        events.add(
            t_mc_done, "ols-controller", "media_channel_provisioned",
            mc=created_mc.to_record(),
        )

        events.add(t_mc_done, "parent-controller", "m10_configure_transponders",
                   tp_ids=[a_tp, z_tp])
        ready_times = []
        t_tp_cursor = t_mc_done
        for tp_id in (a_tp, z_tp):
            clock = VirtualClock(t_tp_cursor)
            tp = configure_transponder(
                world.transponders[tp_id],
                created_mc.slot,
                world.tx_power_dbm,
                clock,
                config_duration_s=timing.tp_config_s,
                laser_warmup_s=timing.laser_warmup_s,
            )
            ready_times.append(tp.ready_at_s)
            if not timing.parallel_transponders:
                t_tp_cursor = clock.now_s
        t_tp_done = (
            t_mc_done + timing.tp_config_s
            if timing.parallel_transponders
            else t_tp_cursor
        )
        events.add(t_tp_done, "transponder", "transponders_configured",
                   tp_ids=[a_tp, z_tp])
    except OpticalError as exc:
        if created_mc is not None:
            world.ols.delete_media_channel(created_mc.mc_id)
        raise WorkflowError(f"optical provisioning failed: {exc}") from exc

    t_optical_ready = max(ready_times)
    events.add(t_optical_ready, "transponder", "lasers_ready",
               tp_ids=[a_tp, z_tp])
    events.add(t_optical_ready, "parent-controller", "connectivity_ready",
               mc_id=created_mc.mc_id)

    t_ns_ready = max(t_vnfs_done, t_optical_ready)
    events.add(t_ns_ready, "nfvo", "ns_ready", ns_id=req.ns_id)

    log_events = events.finish()
    report = derive_kpis(log_events)
    return decision, report, log_events


def derive_kpis(events: list[WorkflowEvent]) -> KpiReport:
    """Compute the KPI report purely from workflow event timestamps."""
    t = {}
    for e in events:
        t.setdefault(e.label, e.t_virtual_s)
    required = (
        "m01_retrieve_ns_descriptors",
        "m04_vnf_instantiation_dispatch",
        "m05_connectivity_request",
        "m06_packet_config_request",
        "packet_configured",
        "m07_get_tapi_context",
        "m09_create_media_channel",
        "media_channel_provisioned",
        "m10_configure_transponders",
        "transponders_configured",
        "lasers_ready",
        "connectivity_ready",
        "vnfs_instantiated",
        "ns_ready",
    )
    missing = [label for label in required if label not in t]
    if missing:
        raise IncompleteLog(f"missing workflow markers: {missing}")

    phases = {
        "orchestration_overhead": t["m04_vnf_instantiation_dispatch"]
        - t["m01_retrieve_ns_descriptors"],
        "vnf_instantiation": t["vnfs_instantiated"]
        - t["m04_vnf_instantiation_dispatch"],
        "packet_config": t["packet_configured"] - t["m06_packet_config_request"],
        "media_channel": t["media_channel_provisioned"]
        - t["m09_create_media_channel"],
        "transponder_config": t["transponders_configured"]
        - t["m10_configure_transponders"],
        "laser_warmup": t["lasers_ready"] - t["transponders_configured"],
    }
    kpi1 = t["lasers_ready"] - t["m07_get_tapi_context"]
    kpi2 = t["connectivity_ready"] - t["m05_connectivity_request"]
    kpi3 = t["ns_ready"] - t["m01_retrieve_ns_descriptors"]
    # The transponder-free setup figure is the serial sum of the remaining
    # phases, not a timeline difference: it answers "how long would setup
    # take if transponders were free", independent of branch overlap.
    excl_tp = (
        phases["orchestration_overhead"]
        + phases["vnf_instantiation"]
        + phases["packet_config"]
        + phases["media_channel"]
    )
    return KpiReport(
        kpi1_s=kpi1,
        kpi2_s=kpi2,
        kpi3_s=kpi3,
        excl_transponder_s=excl_tp,
        phases=phases,
    )


def build_circuit_path(world: World) -> PathModel:
    """Dataplane model of the slice circuit between the probe endpoints."""
    if world.probe_endpoints is None:
        raise OrchestratorError("world has no probe endpoints configured")
    src, dst = world.probe_endpoints
    return path_from_topology(
        world.topology, src, dst, overrides=world.element_overrides
    )


def run_wf2(
    world: World,
    circuit_ids: list[str],
    max_rtt_us: float,
    start_t_s: float = 0.0,
    probes: dict | None = None,
) -> tuple[list[MeasurementRecord], list[WorkflowEvent]]:
    """Commission provisioned circuits with probe trains.

    Returns the measurement records plus the commissioning events. The
    slice passes when every circuit passes; the PTZ control-loop bound
    from the demand profile is checked against the measured RTT.
    """
    events = _EventLog()
    world.mda.clock.now_s = max(world.mda.clock.now_s, start_t_s)
    events.add(world.mda.clock.now_s, "nfvo", "m11_commissioning_request",
               circuits=list(circuit_ids))
    records = []
    for i, circuit_id in enumerate(circuit_ids):
        probe = None if probes is None else probes.get(circuit_id)
        if probe is None:
            probe = SimulatedProbe(build_circuit_path(world),
                                   seed=world.seed + i)
        events.add(world.mda.clock.now_s, "mda", "m12_probe_measurement",
                   circuit_id=circuit_id)
        rec = world.mda.measure_circuit(
            circuit_id,
            world.probe_cfg.vlan_id,
            max_rtt_us=max_rtt_us,
            probe=probe,
            cfg=world.probe_cfg,
        )
        records.append(rec)
        events.add(
            rec.t_virtual_s, "mda", "measurement_recorded",
            circuit_id=circuit_id, verdict=rec.verdict,
            rtt_us=rec.stats.rtt_us, loss_rate=rec.stats.loss_rate,
        )
    all_pass = all(r.verdict == "pass" for r in records)
    label = "commissioning_passed" if all_pass else "commissioning_failed"
    events.add(world.mda.clock.now_s, "nfvo", label,
               circuits=list(circuit_ids))
    if records and records[0].stats.rtt_us is not None:
        rtt_ms = records[0].stats.rtt_us / 1000.0
        events.add(
            world.mda.clock.now_s, "vms", "ptz_bound_checked",
            measured_rtt_ms=rtt_ms,
            bound_ms=world.demand.ptz_max_rtt_ms,
            ok=check_ptz_bound(rtt_ms, world.demand),
        )
    return records, events.finish()


def merge_logs(*logs: list[WorkflowEvent]) -> list[WorkflowEvent]:
    """Concatenate workflow logs into one consistently numbered sequence."""
    merged = []
    seq = 0
    for events in logs:
        for e in events:
            seq += 1
            merged.append(
                WorkflowEvent(seq=seq, t_virtual_s=e.t_virtual_s,
                              actor=e.actor, label=e.label, detail=e.detail)
            )
    return merged
