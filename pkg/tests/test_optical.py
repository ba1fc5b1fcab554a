"""Optical layer: flexgrid slots, OLS provisioning, transponder bring-up."""

import random

import pytest

from metroslice.model import Link, LinkKind, Node, NodeKind, Topology
from metroslice.optical import (
    CONFIG_STEPS,
    FrequencySlot,
    FrequencyOutOfRange,
    InvalidPhase,
    NoRoute,
    OlsController,
    OpticalError,
    Sip,
    SlotOutOfTunability,
    SpectrumCollision,
    Transponder,
    TransponderPhase,
    UnknownChannel,
    VirtualClock,
    configure_transponder,
)


class TestFrequencySlot:
    def test_center_frequency(self):
        assert FrequencySlot(0).center_thz == pytest.approx(193.1)
        assert FrequencySlot(8).center_thz == pytest.approx(193.15)
        assert FrequencySlot(-256).center_thz == pytest.approx(191.5)
        assert FrequencySlot(256).center_thz == pytest.approx(194.7)

    def test_width_and_interval(self):
        s = FrequencySlot(8, m=4)
        assert s.width_ghz == 50.0
        assert s.interval == (4, 12)
        assert FrequencySlot(0, m=1).width_ghz == 12.5

    def test_m_must_be_positive(self):
        with pytest.raises(ValueError):
            FrequencySlot(0, m=0)

    def test_adjacent_slots_touch_without_overlap(self):
        a = FrequencySlot(0, m=4)
        assert not a.overlaps(FrequencySlot(8, m=4))
        assert a.overlaps(FrequencySlot(7, m=4))
        assert not a.overlaps(FrequencySlot(-8, m=4))

    def test_overlap_matches_interval_oracle(self):
        # Overlap means the occupied intervals share more than an endpoint.
        rng = random.Random(13)
        for _ in range(2000):
            s1 = FrequencySlot(rng.randint(-50, 50), rng.randint(1, 8))
            s2 = FrequencySlot(rng.randint(-50, 50), rng.randint(1, 8))
            lo = max(s1.interval[0], s2.interval[0])
            hi = min(s1.interval[1], s2.interval[1])
            assert s1.overlaps(s2) == (hi > lo)
            assert s1.overlaps(s2) == s2.overlaps(s1)


def _ring_controller(abstract=False, tunability=frozenset()):
    nodes = [
        Node("r1", NodeKind.ROADM, 3.275),
        Node("r2", NodeKind.ROADM, 3.275),
        Node("r3", NodeKind.ROADM, 3.275),
    ]
    links = [
        Link("f-12", ("r1", "r2"), 80.0),
        Link("f-13", ("r1", "r3"), 60.0),
        Link("f-23", ("r2", "r3"), 60.0),
    ]
    sips = [
        Sip("sip-1", "r1", "p1", tunability),
        Sip("sip-2", "r2", "p1", tunability),
        Sip("sip-3", "r3", "p1", tunability),
    ]
    return OlsController(Topology(nodes=nodes, links=links), sips, abstract_view=abstract)


class TestOlsProvisioning:
    def test_first_fit_packs_adjacent_slots(self, world):
        mcs = [world.ols.create_media_channel("sip-a", "sip-z") for _ in range(3)]
        assert [mc.slot.n for mc in mcs] == [0, 8, 16]
        assert all(mc.slot.m == 4 for mc in mcs)
        assert mcs[0].route == ("fib-12",)

    def test_first_fit_respects_floor(self):
        ols = _ring_controller()
        mc = ols.create_media_channel("sip-1", "sip-2", floor_n=10)
        assert mc.slot.n == 10

    def test_explicit_slot_collision(self, world):
        world.ols.create_media_channel("sip-a", "sip-z")  # takes n=0
        with pytest.raises(SpectrumCollision):
            world.ols.create_media_channel("sip-a", "sip-z", slot=FrequencySlot(4))
        # Touching at the interval edge is allowed.
        mc = world.ols.create_media_channel("sip-a", "sip-z", slot=FrequencySlot(8))
        assert mc.slot.n == 8

    def test_disjoint_routes_share_spectrum(self):
        ols = _ring_controller()
        a = ols.create_media_channel("sip-1", "sip-2", slot=FrequencySlot(0))
        b = ols.create_media_channel("sip-1", "sip-3", slot=FrequencySlot(0))
        assert a.route != b.route
        assert a.slot.n == b.slot.n == 0

    def test_tunability_restricts_explicit_and_first_fit(self, world):
        with pytest.raises(SlotOutOfTunability):
            world.ols.create_media_channel("sip-a", "sip-z", slot=FrequencySlot(300))
        ols = _ring_controller(tunability=frozenset({0}))
        assert ols.create_media_channel("sip-1", "sip-2").slot.n == 0
        with pytest.raises(SpectrumCollision):
            ols.create_media_channel("sip-1", "sip-2")

    def test_delete_frees_spectrum(self, world):
        mc = world.ols.create_media_channel("sip-a", "sip-z")
        world.ols.delete_media_channel(mc.mc_id)
        assert world.ols.get_active_connections() == []
        again = world.ols.create_media_channel("sip-a", "sip-z")
        assert again.slot.n == 0

    def test_double_delete_and_unknown(self, world):
        mc = world.ols.create_media_channel("sip-a", "sip-z")
        world.ols.delete_media_channel(mc.mc_id)
        with pytest.raises(UnknownChannel):
            world.ols.delete_media_channel(mc.mc_id)
        with pytest.raises(UnknownChannel):
            world.ols.delete_media_channel("mc-9999")

    def test_unknown_sip(self, world):
        with pytest.raises(OpticalError):
            world.ols.create_media_channel("sip-a", "sip-ghost")

    def test_sip_must_sit_on_roadm(self):
        t = Topology(nodes=[Node("r1", NodeKind.ROADM), Node("sw", NodeKind.AGG_SWITCH)],
                     links=[])
        with pytest.raises(OpticalError):
            OlsController(t, [Sip("s", "sw", "p1")])

    def test_same_node_sips_have_empty_route(self):
        nodes = [Node("r1", NodeKind.ROADM)]
        ols = OlsController(
            Topology(nodes=nodes, links=[]),
            [Sip("a", "r1", "p1"), Sip("b", "r1", "p2")],
        )
        assert ols.create_media_channel("a", "b").route == ()

    def test_no_route(self):
        nodes = [Node("r1", NodeKind.ROADM), Node("r2", NodeKind.ROADM)]
        ols = OlsController(
            Topology(nodes=nodes, links=[]),
            [Sip("a", "r1", "p1"), Sip("b", "r2", "p1")],
        )
        with pytest.raises(NoRoute):
            ols.create_media_channel("a", "b")

    def test_route_prefers_lexicographic_link_ids_on_ties(self):
        # Two 2-hop routes between r1 and r2; the one whose link-id
        # sequence sorts first must win, reproducibly.
        nodes = [Node(n, NodeKind.ROADM) for n in ("r1", "r2", "ra", "rb")]
        links = [
            Link("l-a1", ("r1", "ra"), 10.0),
            Link("l-a2", ("ra", "r2"), 10.0),
            Link("l-a0", ("r1", "rb"), 10.0),
            Link("l-b2", ("rb", "r2"), 10.0),
        ]
        ols = OlsController(
            Topology(nodes=nodes, links=links),
            [Sip("a", "r1", "p1"), Sip("b", "r2", "p1")],
        )
        for _ in range(3):
            assert ols._route("r1", "r2") == ("l-a0", "l-b2")

    def test_context_views(self, scenario, world):
        sips, view = world.ols.get_context()
        assert [s.sip_id for s in sips] == ["sip-a", "sip-z"]
        assert not view.abstract
        assert view.nodes == ("roadm-1", "roadm-2", "roadm-3")
        assert view.links == ("fib-12", "fib-13", "fib-23")
        abstract = OlsController(scenario.topology, list(sips), abstract_view=True)
        _, av = abstract.get_context()
        assert av.nodes == ("ols",) and av.links == () and av.abstract

    def test_random_ops_never_violate_spectrum(self):
        # Short randomized soak; the acceptance suite runs the long one.
        rng = random.Random(99)
        ols = _ring_controller()
        live = []
        pairs = [("sip-1", "sip-2"), ("sip-1", "sip-3"), ("sip-2", "sip-3")]
        for _ in range(300):
            if live and rng.random() < 0.4:
                ols.delete_media_channel(live.pop(rng.randrange(len(live))).mc_id)
            else:
                a, z = rng.choice(pairs)
                try:
                    live.append(ols.create_media_channel(
                        a, z, m=rng.choice([2, 4]), floor_n=rng.choice([0, 4])))
                except SpectrumCollision:
                    continue
            active = ols.get_active_connections()
            by_link = {}
            for mc in active:
                for link in mc.route:
                    by_link.setdefault(link, []).append(mc.slot)
            for slots in by_link.values():
                iv = sorted(s.interval for s in slots)
                for (lo1, hi1), (lo2, hi2) in zip(iv, iv[1:]):
                    assert hi1 <= lo2, "overlapping slots on one link"


class TestTransponder:
    def test_five_step_bring_up(self):
        clock = VirtualClock(10.0)
        tp = configure_transponder(
            Transponder("tp-x"), FrequencySlot(0), tx_power_dbm=-1.5, clock=clock
        )
        assert [e.name for e in tp.step_log] == [name for name, _ in CONFIG_STEPS]
        assert [e.phase for e in tp.step_log] == [ph for _, ph in CONFIG_STEPS]
        # 2 s of config spread over 5 steps, started at t=10.
        assert [e.t_s for e in tp.step_log] == pytest.approx([10.4, 10.8, 11.2, 11.6, 12.0])
        assert clock.now_s == pytest.approx(12.0)
        assert tp.phase is TransponderPhase.ASSIGNED
        assert tp.ready_at_s == pytest.approx(137.0)
        assert not tp.traffic_ready(136.9)
        assert tp.traffic_ready(137.0)
        assert tp.och == FrequencySlot(0)
        assert tp.tx_power_dbm == -1.5

    def test_logical_channel_tree(self):
        tp = configure_transponder(
            Transponder("tp-x"), FrequencySlot(8), 0.0, VirtualClock()
        )
        line = tp.logical_channels["line"]
        # Client ODU4 into line ODU4, ODU4 into OTU4, OTU4 onto the carrier.
        assert line["mapping"] == [
            ["tp-x-line-odu4", "tp-x-line-otu4"],
            ["tp-x-line-otu4", "tp-x-line-och"],
        ]
        assert tp.logical_channels["transceiver"] == "tp-x-xcvr"
        assert tp.logical_channels["client"] == {"odu4": "tp-x-client-odu4"}
        assert tp.logical_channels["assignment"] == ["tp-x-client-odu4", "tp-x-line-odu4"]

    def test_zero_warmup_ready_after_config(self):
        clock = VirtualClock()
        tp = configure_transponder(
            Transponder("tp-x"), FrequencySlot(0), 0.0, clock, laser_warmup_s=0.0
        )
        assert tp.ready_at_s == pytest.approx(2.0)
        assert tp.traffic_ready(clock.now_s)

    def test_reconfigure_is_invalid(self):
        clock = VirtualClock()
        tp = configure_transponder(Transponder("tp-x"), FrequencySlot(0), 0.0, clock)
        with pytest.raises(InvalidPhase):
            configure_transponder(tp, FrequencySlot(8), 0.0, clock)

    def test_frequency_out_of_range_leaves_blank(self):
        clock = VirtualClock(5.0)
        tp = Transponder("tp-x", tunable_n=frozenset({0, 8}))
        with pytest.raises(FrequencyOutOfRange):
            configure_transponder(tp, FrequencySlot(16), 0.0, clock)
        assert tp.phase is TransponderPhase.BLANK
        assert clock.now_s == 5.0
        assert tp.step_log == []

    def test_clock_rejects_negative_advance(self):
        with pytest.raises(ValueError):
            VirtualClock().advance(-1.0)
