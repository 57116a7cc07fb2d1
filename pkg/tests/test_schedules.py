import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinsink import schedules as sch


class TestEvaluation:
    def test_constant(self):
        s = sch.ConstantSchedule(3.5)
        assert s.value(0.0) == 3.5
        assert s.value(17.2) == 3.5

    def test_sawtooth_quarter_period(self):
        s = sch.SawtoothSchedule(0.0, 10.0, 1.0)
        assert np.isclose(s.value(0.25), 2.5)
        assert np.isclose(s.value(1.25), 2.5)  # periodic wrap

    def test_piecewise_right_continuous_at_jump(self):
        s = sch.PiecewiseLinearSchedule([0.0, 1.0, 1.0, 2.0], [0.0, 1.0, 5.0, 6.0])
        assert np.isclose(s.value(1.0), 5.0)
        assert np.isclose(s.value(0.5), 0.5)
        assert np.isclose(s.value(1.5), 5.5)

    def test_piecewise_constant_extension(self):
        s = sch.PiecewiseLinearSchedule([1.0, 2.0], [4.0, 8.0])
        assert s.value(0.0) == 4.0
        assert s.value(3.0) == 8.0

    @given(st.floats(min_value=0, max_value=50, allow_nan=False))
    @settings(max_examples=30, deadline=None)
    def test_integrals_match_breakpoint_trapezoid(self, t):
        # trapezoid on a reset-aligned grid is exact for piecewise-linear input
        for s, resets in [
            (sch.ConstantSchedule(2.3), []),
            (sch.SawtoothSchedule(-3.0, 5.0, 4.0), np.arange(0.0, 51.0, 4.0)),
            (sch.PiecewiseLinearSchedule([0.0, 2.0, 7.0], [1.0, -2.0, 4.0]), [2.0, 7.0]),
        ]:
            knots = np.unique(np.concatenate([[0.0, t], [r for r in resets if 0.0 < r < t]]))
            eps = 1e-9
            ref = 0.0
            for a, b in zip(knots[:-1], knots[1:]):
                grid = np.linspace(a + eps, b - eps, 64)
                vals = np.array([s.value(x) for x in grid])
                ref += np.trapezoid(vals, grid)
            assert np.isclose(s.integral(t), ref, atol=1e-5 * max(1.0, t))

    def test_sawtooth_average_is_band_midpoint(self):
        s = sch.SawtoothSchedule(-7.0, 3.0, 5.0)
        avg = (s.integral(5.0) - s.integral(0.0)) / 5.0
        assert abs(avg - (-2.0)) < 1e-12

    def test_invalid_period(self):
        with pytest.raises(ValueError):
            sch.SawtoothSchedule(0, 1, 0.0)


class TestGroundStateProtocol:
    def test_static_multi_even_spacing(self):
        p = sch.ground_state_protocol((-10.0, 10.0), 0.0, 100.0, mode="static-multi", n_aux=2)
        vals = [s.constant for s in p.sources]
        assert np.allclose(vals, [-10 + 10 / 3, -10 + 20 / 3])
        sink_vals = [s.constant for s in p.sinks]
        assert np.allclose(sink_vals, [10 / 3, 20 / 3])

    def test_raster_band_edges(self):
        # edges are attained up to the sampling resolution of the ramp
        p = sch.ground_state_protocol((-10.0, 6.0), -2.0, 100.0)
        t = np.linspace(0, 100, 40001)
        res_src = 8.0 * (t[1] - t[0]) / 10.0
        src = np.array([p.sources[0].value(x) for x in t])
        assert np.isclose(src.min(), -10.0, atol=res_src)
        assert np.isclose(src.max(), -2.0, atol=2 * res_src)
        snk = np.array([p.sinks[0].value(x) for x in t])
        assert np.isclose(snk.min(), -2.0, atol=res_src)
        assert np.isclose(snk.max(), 6.0, atol=2 * res_src)

    def test_default_raster_period(self):
        p = sch.ground_state_protocol((-1.0, 1.0), 0.0, 250.0)
        assert p.sources[0].period == 25.0

    def test_omega_c_outside_range_rejected(self):
        with pytest.raises(ValueError):
            sch.ground_state_protocol((-1.0, 1.0), 2.0, 10.0)

    def test_bands_disjoint_and_cover(self):
        p = sch.ground_state_protocol((-4.0, 9.0), 1.5, 10.0)
        (lo, c) = p.source_band
        (c2, hi) = p.sink_bands[0]
        assert c == c2 and lo == -4.0 and hi == 9.0

    def test_band_swap_equals_highest_state_protocol(self):
        args = ((-5.0, 5.0), 1.0, 50.0, "raster-single", 1, None)
        ground = sch.ground_state_protocol(*args)
        highest = sch.highest_state_protocol(*args)
        assert highest.sources == ground.sinks
        assert highest.sinks == ground.sources


class TestExcitedWindowProtocol:
    def test_bands(self):
        p = sch.excited_window_protocol(-2.0, 3.0, (-10.0, 10.0), 100.0)
        assert p.source_band == (-2.0, 3.0)
        assert p.sink_bands == [(-10.0, -2.0), (3.0, 10.0)]
        assert len(p.sinks) == 2

    def test_full_range_window_degenerates(self):
        p = sch.excited_window_protocol(-10.0, 10.0, (-10.0, 10.0), 100.0)
        assert p.sinks == []
        assert "degenerate" in p.note

    def test_window_at_top_equals_highest_state_layout(self):
        p = sch.excited_window_protocol(5.0, 10.0, (-10.0, 10.0), 100.0)
        assert p.sink_bands == [(-10.0, 5.0)]
        assert p.source_band == (5.0, 10.0)

    def test_inverted_window_rejected(self):
        with pytest.raises(ValueError):
            sch.excited_window_protocol(3.0, -1.0, (-10.0, 10.0), 1.0)


class TestCsvRoundtrip:
    @pytest.mark.parametrize(
        "schedule",
        [
            sch.ConstantSchedule(4.2),
            sch.SawtoothSchedule(-3.0, 7.0, 11.0),
            sch.PiecewiseLinearSchedule([0.0, 3.0, 9.0], [1.0, -1.0, 0.5]),
        ],
    )
    def test_bit_exact_replay(self, schedule):
        text = sch.schedule_to_csv(schedule, 40.0)
        replay = sch.schedule_from_csv(io.StringIO(text))
        for t in np.linspace(0.0, 40.0, 1713):
            assert replay.value(t) == pytest.approx(schedule.value(t), abs=1e-12)

    def test_file_roundtrip(self, tmp_path):
        s = sch.SawtoothSchedule(0.0, 1.0, 3.0)
        path = tmp_path / "sched.csv"
        sch.schedule_to_csv(s, 10.0, path)
        replay = sch.schedule_from_csv(path)
        t = np.linspace(0, 10, 777)
        a = np.array([s.value(x) for x in t])
        b = np.array([replay.value(x) for x in t])
        assert np.abs(a - b).max() < 1e-12
