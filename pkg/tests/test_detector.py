import numpy as np
import pytest
from hypothesis import given, strategies as st

from capdrop.analysis.detector import (
    DetectorRecord,
    EstimationError,
    density_to_occupancy,
    estimate_capacity_drop,
    near_stationary_windows,
    occupancy_to_density,
    read_detector_csv,
    virtual_detector,
    write_detector_csv,
)
from capdrop.sim import RecordSpec, preset_bottleneck_breakdown, run

from synthetic import occupancy_for, plateau_series


class TestUnits:
    def test_g_factor_chain(self):
        # 10% occupancy over a 22 ft effective length: 0.1/22 veh/ft = 24 veh/mi
        assert occupancy_to_density(0.1, 22.0, unit="foot") == pytest.approx(0.1 / 22)
        assert occupancy_to_density(0.1, 22.0, unit="mile") == pytest.approx(24.0)
        assert occupancy_to_density(0.1, 22.0, unit="si") == pytest.approx(0.1 / 22 / 0.3048)

    def test_lanes_scale(self):
        assert occupancy_to_density(0.1, 22.0, lanes=4, unit="mile") == pytest.approx(96.0)

    @given(occ=st.floats(0.0, 1.0), g=st.floats(10.0, 30.0), lanes=st.integers(1, 5))
    def test_round_trip(self, occ, g, lanes):
        k = occupancy_to_density(occ, g, lanes)
        assert density_to_occupancy(k, g, lanes) == pytest.approx(occ, rel=1e-12, abs=1e-15)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            occupancy_to_density(0.1, 0.0)
        with pytest.raises(ValueError):
            occupancy_to_density(0.1, 22.0, unit="furlong")


class TestRecords:
    @pytest.mark.parametrize("kw", [dict(flow=-1.0), dict(occupancy=1.5), dict(role="offramp")])
    def test_validation(self, kw):
        base = dict(timestamp=0.0, flow=100.0, occupancy=0.1)
        base.update(kw)
        with pytest.raises(ValueError):
            DetectorRecord(**base)

    def test_csv_round_trip(self, tmp_path):
        records = plateau_series()[:10]
        path = tmp_path / "det.csv"
        write_detector_csv(path, reversed(records))
        assert read_detector_csv(path) == records

    def test_csv_missing_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("timestamp,flow_vph\n0,100\n")
        with pytest.raises(ValueError, match="missing columns"):
            read_detector_csv(path)


class TestEstimator:
    def test_synthetic_plateaus(self):
        est = estimate_capacity_drop(plateau_series(), lanes=4)
        assert est.q_free_max == pytest.approx(9500.0)
        assert est.q_queue == pytest.approx(8000.0)
        assert est.delta == pytest.approx(1 - 8000 / 9500, abs=1e-12)
        assert est.delta == pytest.approx(0.158, abs=0.005)

    def test_noise_free_is_exact(self):
        est = estimate_capacity_drop(plateau_series(q_free=7000.0, q_queue=6300.0), lanes=4)
        assert est.delta == pytest.approx(0.1, rel=1e-12)

    def test_noisy_plateaus(self):
        est = estimate_capacity_drop(plateau_series(noise=0.01, seed=3), lanes=4)
        assert est.delta == pytest.approx(0.158, abs=0.02)

    def test_constant_free_flow_fails(self):
        occ = occupancy_for(5000, 65, 4)
        records = [DetectorRecord(30.0 * i, 5000.0, occ) for i in range(200)]
        with pytest.raises(EstimationError) as info:
            estimate_capacity_drop(records, lanes=4)
        assert info.value.counts["queued"] == 0
        assert info.value.counts["stationary"] > 0

    def test_station_filter(self):
        records = plateau_series() + [DetectorRecord(15.0, 100.0, 0.5, "onramp", "R1")]
        records.sort(key=lambda r: r.timestamp)
        est = estimate_capacity_drop(records, lanes=4, station_id="S1")
        assert est.delta == pytest.approx(1 - 8000 / 9500)

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError, match="sorted"):
            estimate_capacity_drop(list(reversed(plateau_series())), lanes=4)

    def test_windows_reject_transitions(self):
        t = np.arange(1, 41) * 30.0
        flow = np.where(t <= 600, 1000.0, 2000.0)
        occ = np.full(40, 0.1)
        ends, mf, _ = near_stationary_windows(t, flow, occ, window=300.0)
        assert np.all((mf == 1000.0) | (mf == 2000.0))
        assert ends.size < 40


class TestVirtualDetector:
    def test_shape_and_units(self):
        corridor, k0, j = preset_bottleneck_breakdown(level_duration=120.0, upstream_length=1400.0)
        rec = run(corridor, k0, 300.0, RecordSpec(snapshot_every=1, tags={"det": j}))
        det = virtual_detector(rec, corridor, j, "det", aggregation=30.0)
        # bins hold a whole number of steps, so they last 129 steps of 7/30 s
        assert len(det) == 9
        assert np.diff([r.timestamp for r in det]) == pytest.approx(np.full(8, 129 * 7 / 30))
        # first level: 70% of the downstream capacity, free flow
        assert det[2].flow == pytest.approx(0.7 * 90 / 49 * 3600, rel=1e-9)
        k = occupancy_to_density(det[2].occupancy, 22.0, lanes=4)
        assert k == pytest.approx(0.7 * 90 / 49 / 30, rel=1e-9)

    def test_needs_every_snapshot(self):
        corridor, k0, j = preset_bottleneck_breakdown(upstream_length=1400.0)
        rec = run(corridor, k0, 30.0, RecordSpec(snapshot_every=2, tags={"det": j}))
        with pytest.raises(ValueError):
            virtual_detector(rec, corridor, j, "det")
