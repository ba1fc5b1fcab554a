"""Dataplane simulator: delay arithmetic, loss/jitter statistics, BER curve."""

import math

import numpy as np
import pytest
from scipy.stats import norm

from metroslice.dataplane import (
    CLOCK_TICK_NS,
    DEFAULT_ELEMENT_PARAMS,
    DegradationScenario,
    ElementParams,
    NoPath,
    PathElement,
    PathModel,
    ber_from_snr_db,
    element_for_node,
    evolve_quality,
    one_way_delay_us,
    path_from_nodes,
    path_from_topology,
    quantize_ns,
    serialization_delay_ns,
    transmit_train,
)
from metroslice.model import Link, Node, NodeKind, Topology


def _elem(eid="e", lat=0.0, loss=0.0, jit=0.0):
    return PathElement(element_id=eid, fixed_latency_us=lat, loss_prob=loss, jitter_std_ns=jit)


class TestDelayArithmetic:
    def test_bare_fibre_80km(self):
        p = PathModel(elements=(), length_km=80.0)
        assert one_way_delay_us(p) == pytest.approx(80.0 * 4.899, rel=1e-12)

    def test_empty_path_is_zero(self):
        assert one_way_delay_us(PathModel(elements=(), length_km=0.0)) == 0.0

    def test_fixed_latency_sums_with_propagation(self):
        p = PathModel(elements=(_elem(lat=1.5), _elem(lat=2.5)), length_km=10.0)
        assert one_way_delay_us(p) == pytest.approx(4.0 + 48.99, rel=1e-12)

    def test_calibration_path_fixed_budget(self, scenario):
        # probe + switch + 2 ROADMs + switch + probe, one way:
        # 0.21 + 0.315 + 3.275 + 3.275 + 0.315 + 0.21 = 7.6 us.
        row = next(r for r in scenario.rows if r.label == "optical-80km")
        p = path_from_nodes(scenario.topology, row.path_nodes, row.length_km)
        fixed = sum(e.fixed_latency_us for e in p.elements)
        assert fixed == pytest.approx(7.6, rel=1e-12)
        assert one_way_delay_us(p) == pytest.approx(7.6 + 80.0 * 4.899, rel=1e-12)

    def test_delay_additivity(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(1, 8))
            elems = tuple(_elem(f"e{i}", lat=float(rng.uniform(0, 5))) for i in range(n))
            km = float(rng.uniform(0, 100))
            cut = int(rng.integers(0, n + 1))
            kcut = float(rng.uniform(0, km))
            whole = one_way_delay_us(PathModel(elems, km))
            left = one_way_delay_us(PathModel(elems[:cut], kcut))
            right = one_way_delay_us(PathModel(elems[cut:], km - kcut))
            assert whole == pytest.approx(left + right, rel=1e-12)

    def test_serialization_delay(self):
        # 1498 wire bytes at 100 Gb/s
        assert serialization_delay_ns(1498) == pytest.approx(119.84, rel=1e-12)
        assert serialization_delay_ns(1498, line_rate_gbps=10.0) == pytest.approx(1198.4, rel=1e-12)


class TestValidation:
    def test_loss_prob_range(self):
        _elem(loss=0.0)
        _elem(loss=1.0)  # certain loss is a legal configuration
        with pytest.raises(ValueError):
            _elem(loss=1.0000001)
        with pytest.raises(ValueError):
            _elem(loss=-0.1)

    def test_negative_latency_and_jitter(self):
        with pytest.raises(ValueError):
            _elem(lat=-1.0)
        with pytest.raises(ValueError):
            _elem(jit=-1.0)

    def test_negative_length(self):
        with pytest.raises(ValueError):
            PathModel(elements=(), length_km=-1.0)

    def test_reversed_keeps_length(self):
        p = PathModel((_elem("a"), _elem("b")), length_km=5.0)
        r = p.reversed()
        assert [e.element_id for e in r.elements] == ["b", "a"]
        assert r.length_km == 5.0


class TestLossAndJitterComposition:
    def test_loss_prob_product_rule(self):
        p = PathModel((_elem(loss=0.1), _elem(loss=0.2)), 0.0)
        assert p.loss_prob() == pytest.approx(1.0 - 0.9 * 0.8, rel=1e-12)

    def test_jitter_root_sum_square(self):
        p = PathModel((_elem(jit=3.0), _elem(jit=4.0)), 0.0)
        assert p.jitter_std_ns() == pytest.approx(5.0, rel=1e-12)


class TestTransmitTrain:
    def test_deterministic_path_exact_arrival(self):
        p = PathModel((_elem(lat=2.0),), length_km=1.0)
        tx = np.array([0.0, 1000.0, 2000.0])
        res = transmit_train(p, tx, rng=0)
        assert res.delivered.all()
        expected = quantize_ns(tx + one_way_delay_us(p) * 1000.0)
        np.testing.assert_array_equal(res.rx_ns, expected)

    def test_certain_loss_drops_everything(self):
        p = PathModel((_elem(loss=1.0),), 0.0)
        res = transmit_train(p, np.zeros(1000), rng=1)
        assert not res.delivered.any()

    def test_loss_count_matches_binomial(self):
        # Two lossy elements so the product rule is exercised end to end.
        p = PathModel((_elem("a", loss=1e-4), _elem("b", loss=1e-4)), 0.0)
        n = 1_000_000
        res = transmit_train(p, np.zeros(n), rng=12345)
        lost = n - int(res.delivered.sum())
        # mean ~ 200, std ~ 14.1; +/- 4 sigma
        assert 140 <= lost <= 260

    def test_seed_reproducibility(self):
        p = PathModel((_elem(loss=0.01, jit=2.0),), 3.0)
        tx = np.arange(0.0, 1e6, 100.0)
        a = transmit_train(p, tx, rng=77)
        b = transmit_train(p, tx, rng=77)
        np.testing.assert_array_equal(a.rx_ns, b.rx_ns)
        np.testing.assert_array_equal(a.delivered, b.delivered)
        c = transmit_train(p, tx, rng=78)
        assert not np.array_equal(a.rx_ns, c.rx_ns)

    def test_arrivals_on_capture_clock_lattice(self):
        p = PathModel((_elem(jit=2.5),), 4.0)
        res = transmit_train(p, np.arange(0.0, 1e5, 37.0), rng=5)
        steps = res.rx_ns / CLOCK_TICK_NS
        assert np.all(np.abs(steps - np.rint(steps)) < 1e-6)

    def test_measured_jitter_matches_rss_plus_quantization(self):
        # std of arrivals = rss(element jitter) + tick**2/12 variance.
        p = PathModel((_elem("a", jit=3.0), _elem("b", jit=4.0)), 0.0)
        n = 200_000
        res = transmit_train(p, np.zeros(n), rng=42)
        expected = math.sqrt(25.0 + CLOCK_TICK_NS**2 / 12.0)
        assert float(np.std(res.rx_ns)) == pytest.approx(expected, rel=0.02)


class TestQuantize:
    def test_scalar_and_array(self):
        assert float(quantize_ns(4.6)) == pytest.approx(3.1, rel=1e-12)
        assert float(quantize_ns(4.66)) == pytest.approx(6.2, rel=1e-12)
        out = quantize_ns(np.array([0.0, 3.1, 100.0]))
        np.testing.assert_allclose(out, [0.0, 3.1, 99.2], rtol=1e-12)

    def test_custom_tick(self):
        assert float(quantize_ns(7.0, tick_ns=2.0)) == 8.0


class TestBerCurve:
    def test_matches_gaussian_tail_oracle(self):
        # ber(snr) = Q(sqrt(snr_lin)), checked against scipy.stats.norm.
        grid = np.linspace(-10.0, 14.0, 60)
        ours = ber_from_snr_db(grid)
        oracle = norm.sf(np.sqrt(np.power(10.0, grid / 10.0)))
        np.testing.assert_allclose(ours, oracle, rtol=1e-9)

    def test_monotone_decreasing_and_bounded(self):
        grid = np.linspace(-30.0, 30.0, 400)
        b = ber_from_snr_db(grid)
        assert np.all(np.diff(b) < 0)
        assert np.all(b > 0) and np.all(b < 0.5)

    def test_fec_threshold_neighbourhood(self):
        # The 2e-2 pre-FEC limit sits near 6.25 dB on this curve.
        assert 1.99e-2 < float(ber_from_snr_db(6.2509)) < 2.01e-2
        assert float(ber_from_snr_db(6.25)) > 2.0e-2
        assert float(ber_from_snr_db(6.26)) < 2.0e-2

    def test_vanishing_snr_approaches_half(self):
        assert 0.49 < float(ber_from_snr_db(-60.0)) < 0.5


class TestEvolveQuality:
    def test_default_scenario_samples(self, scenario):
        series = evolve_quality(scenario.degradation)
        assert len(series) == 101
        assert series[0].t_s == 0.0 and series[-1].t_s == 100.0
        # Steady hold before the ramp starts at t=10.
        for q in series[:11]:
            assert q.snr_db == pytest.approx(23.0)
        t40 = next(q for q in series if q.t_s == 40.0)
        assert t40.snr_db == pytest.approx(23.0 - 0.25 * 30.0, rel=1e-12)

    def test_zero_ramp_is_flat(self):
        s = DegradationScenario(ramp_db_per_s=0.0, duration_s=20.0, snr0_db=20.0)
        assert all(q.snr_db == 20.0 for q in evolve_quality(s))

    def test_ber_column_consistent(self):
        s = DegradationScenario(ramp_db_per_s=0.5, duration_s=30.0, snr0_db=23.0)
        for q in evolve_quality(s):
            assert q.prefec_ber == pytest.approx(float(ber_from_snr_db(q.snr_db)), rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            DegradationScenario(ramp_db_per_s=-0.1, duration_s=1.0)
        with pytest.raises(ValueError):
            DegradationScenario(ramp_db_per_s=0.1, duration_s=1.0, sample_period_s=0.0)


class TestPathFromTopology:
    def test_default_route_uses_direct_span(self, scenario):
        # 80 km direct beats 120 km via the third ROADM once the extra
        # ROADM transit latency is counted.
        p = path_from_topology(scenario.topology, "probe-a", "probe-b")
        ids = [e.element_id for e in p.elements]
        assert ids == ["probe-a", "sw-amen", "roadm-1", "roadm-2", "sw-mcen", "probe-b"]
        assert p.length_km == pytest.approx(80.0016, rel=1e-12)

    def test_roadm_to_roadm(self, scenario):
        p = path_from_topology(scenario.topology, "roadm-1", "roadm-2")
        assert [e.element_id for e in p.elements] == ["roadm-1", "roadm-2"]
        assert p.length_km == pytest.approx(80.0)

    def test_disconnected_raises(self):
        t = Topology(
            nodes=[Node("a", NodeKind.ROADM), Node("b", NodeKind.ROADM)],
            links=[],
        )
        with pytest.raises(NoPath):
            path_from_topology(t, "a", "b")

    def test_overrides_apply(self, scenario):
        ov = {"probe-a": ElementParams(loss_prob=0.5, jitter_std_ns=0.0)}
        p = path_from_topology(scenario.topology, "probe-a", "probe-b", overrides=ov)
        probe = next(e for e in p.elements if e.element_id == "probe-a")
        assert probe.loss_prob == 0.5

    def test_element_defaults_by_kind(self, scenario):
        t = scenario.topology
        probe = element_for_node(t, "probe-a")
        assert (probe.loss_prob, probe.jitter_std_ns) == (0.0, 2.0)
        sw = element_for_node(t, "sw-amen")
        assert (sw.loss_prob, sw.jitter_std_ns) == (2.0e-7, 1.5)
        rd = element_for_node(t, "roadm-1")
        assert (rd.loss_prob, rd.jitter_std_ns) == (2.0e-7, 2.5)
        assert set(DEFAULT_ELEMENT_PARAMS) >= {NodeKind.PROBE_ENDPOINT, NodeKind.AGG_SWITCH, NodeKind.ROADM}
