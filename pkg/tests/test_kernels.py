"""The jitted kernels and their numpy fallbacks must agree bit for bit."""

import numpy as np
import pytest

from beambank import _accel


requires_numba = pytest.mark.skipif(
    not _accel.USE_NUMBA, reason="numba unavailable or disabled by BEAMBANK_PURE_NUMPY"
)


class TestAddPulses:
    @requires_numba
    def test_routes_agree_exactly(self, rng):
        for _ in range(20):
            n = int(rng.integers(200, 5000))
            count = int(rng.integers(1, 60))
            delays = rng.uniform(-50.0, n + 50.0, size=count)
            amps = rng.normal(size=count)
            a = np.zeros(n)
            b = np.zeros(n)
            _accel.add_pulses_numpy(a, delays, amps)
            _accel.add_pulses_numba(b, delays, amps)
            np.testing.assert_array_equal(a, b)

    def test_integer_delay_single_tap(self):
        out = np.zeros(100)
        _accel.add_pulses(out, np.array([40.0]), np.array([2.5]))
        assert out[40] == 2.5
        # off-center taps carry only sin(pi*k) round-off, ~1e-18
        assert np.flatnonzero(np.abs(out) > 1e-15).tolist() == [40]

    def test_edge_clipping(self):
        # a pulse centered before the buffer only writes its visible tail
        out = np.zeros(30)
        _accel.add_pulses(out, np.array([-10.0]), np.array([1.0]))
        assert np.all(np.isfinite(out))

    def test_fractional_delay_interpolates(self):
        out = np.zeros(200)
        _accel.add_pulses(out, np.array([100.5]), np.array([1.0]))
        # symmetric around the half-sample center
        np.testing.assert_allclose(out[100], out[101], atol=1e-15)
        assert 0.5 < out[100] < 0.7


class TestOverlapAdd:
    @requires_numba
    def test_routes_agree_exactly_at_half_hop(self, rng):
        # two contributions per sample: addition commutes, so the phase-group
        # route and the sequential loop match bit for bit
        for _ in range(10):
            n_fft = int(rng.choice([64, 128, 512]))
            hop = n_fft // 2
            frames = rng.normal(size=(int(rng.integers(1, 40)), n_fft))
            out_len = (frames.shape[0] - 1) * hop + n_fft
            a = np.zeros(out_len)
            b = np.zeros(out_len)
            _accel.overlap_add_numpy(frames, hop, a)
            _accel.overlap_add_numba(frames, hop, b)
            np.testing.assert_array_equal(a, b)

    @requires_numba
    def test_routes_agree_to_roundoff_at_quarter_hop(self, rng):
        # four contributions per sample accumulate in different orders;
        # only associativity round-off may differ
        n_fft, hop = 128, 32
        frames = rng.normal(size=(25, n_fft))
        out_len = (frames.shape[0] - 1) * hop + n_fft
        a = np.zeros(out_len)
        b = np.zeros(out_len)
        _accel.overlap_add_numpy(frames, hop, a)
        _accel.overlap_add_numba(frames, hop, b)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)

    def test_single_frame_copies(self, rng):
        frame = rng.normal(size=(1, 64))
        out = np.zeros(64)
        _accel.overlap_add(frame, 32, out)
        np.testing.assert_array_equal(out, frame[0])
