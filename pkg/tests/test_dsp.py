"""STFT analysis/synthesis, bank filtering, streaming, and wav IO."""

import math

import numpy as np
import pytest

from beambank.beamformer import design_bank
from beambank.dsp import (
    BlockProcessor,
    Spectrogram,
    apply_bank,
    istft,
    read_wav,
    sqrt_hann,
    stft,
    write_wav,
)
from beambank.errors import DataError
from beambank.geometry import DirectionSpec, steering_vector

MOUTH = DirectionSpec(azimuth=0.0, elevation=-0.6435011087932844, range_m=0.1)


class TestWindow:
    def test_sqrt_hann_squares_to_hann(self):
        n = 512
        w = sqrt_hann(n)
        hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
        np.testing.assert_allclose(w**2, hann, atol=1e-12)

    def test_half_overlap_adds_to_one(self):
        n = 512
        w2 = sqrt_hann(n) ** 2
        assert np.all(np.abs(w2[: n // 2] + w2[n // 2 :] - 1.0) < 1e-12)


class TestStftRoundTrip:
    @pytest.mark.parametrize("n_samples", [1000, 4096, 16000, 16001])
    def test_rms_error_below_1e6(self, rng, n_samples):
        audio = rng.standard_normal((3, n_samples))
        spec = stft(audio, fs=16000, n_fft=512)
        back = istft(spec, num_samples=n_samples)
        assert back.shape == audio.shape
        rms = math.sqrt(float(np.mean((back - audio) ** 2)))
        assert rms <= 1e-6

    def test_mono_input_accepted(self, rng):
        audio = rng.standard_normal(8000)
        spec = stft(audio, fs=16000, n_fft=512)
        back = istft(spec, num_samples=8000)
        assert back.shape == (1, 8000)
        np.testing.assert_allclose(back[0], audio, atol=1e-9)

    def test_shapes(self, rng):
        spec = stft(rng.standard_normal((2, 5000)), fs=16000, n_fft=512)
        assert spec.frequencies.shape[0] == 257
        assert spec.data.shape[0] == 2
        assert spec.data.shape[2] == 257

    def test_hop_must_divide_n_fft(self, rng):
        with pytest.raises(DataError):
            stft(rng.standard_normal(4000), fs=16000, n_fft=512, hop=300)


def _plane_wave(geometry, azimuth, f0, fs, n_samples, sound_speed=343.0):
    d = DirectionSpec(azimuth=azimuth, elevation=0.0)
    u = d.unit_vector()
    tau = -(geometry.mics @ u) / sound_speed
    n = np.arange(n_samples)
    return np.stack([np.cos(2 * np.pi * f0 * (n / fs - tm)) for tm in tau])


class TestApplyBank:
    def _bank(self, glasses5):
        directions = [
            DirectionSpec(azimuth=0.0, elevation=0.0),
            DirectionSpec(azimuth=math.pi / 2, elevation=0.0),
            MOUTH,
        ]
        return design_bank(glasses5, directions, method="delay_and_sum", fs=16000, n_fft=512)

    def test_output_has_one_channel_per_direction(self, glasses5, rng):
        bank = self._bank(glasses5)
        spec = stft(rng.standard_normal((5, 6000)), fs=16000, n_fft=512)
        out = apply_bank(spec, bank)
        assert out.data.shape[0] == 3
        assert out.data.shape[1:] == spec.data.shape[1:]

    def test_distortionless_passthrough_of_look_wave(self, glasses5):
        """A 1000 Hz plane wave from the look direction comes out of the
        steered beam at the same level, within 0.1 dB."""
        bank = self._bank(glasses5)
        fs, f0 = 16000, 1000.0
        x = _plane_wave(glasses5, 0.0, f0, fs, 4 * fs)
        spec = stft(x, fs=fs, n_fft=512)
        y = istft(apply_bank(spec, bank), num_samples=x.shape[1])
        mid = slice(fs, 3 * fs)
        out_rms = np.sqrt(np.mean(y[0, mid] ** 2))
        in_rms = 1.0 / math.sqrt(2.0)  # unit-amplitude cosine
        assert abs(20 * math.log10(out_rms / in_rms)) < 0.1

    def test_off_look_wave_matches_analytic_response(self, glasses5):
        bank = self._bank(glasses5)
        fs, f0 = 16000, 1000.0
        az = math.radians(137.0)
        x = _plane_wave(glasses5, az, f0, fs, 4 * fs)
        spec = stft(x, fs=fs, n_fft=512)
        y = istft(apply_bank(spec, bank), num_samples=x.shape[1])
        fi = int(np.argmin(np.abs(bank.frequencies - f0)))
        g = steering_vector(glasses5, DirectionSpec(azimuth=az), f0).entries
        expected = abs(np.vdot(bank.weights[0, fi], g))
        mid = slice(fs, 3 * fs)
        out_rms = np.sqrt(np.mean(y[0, mid] ** 2))
        measured = out_rms * math.sqrt(2.0)
        assert abs(20 * math.log10(measured / expected)) < 0.1

    def test_channel_count_mismatch_rejected(self, glasses5, rng):
        bank = self._bank(glasses5)
        spec = stft(rng.standard_normal((3, 4000)), fs=16000, n_fft=512)
        with pytest.raises(DataError):
            apply_bank(spec, bank)


class TestBlockProcessor:
    def _stream(self, bank, audio, rng=None):
        proc = BlockProcessor(bank)
        chunks = []
        cursor = 0
        while cursor < audio.shape[1]:
            step = audio.shape[1] if rng is None else int(rng.integers(50, 1500))
            chunks.append(proc.push(audio[:, cursor : cursor + step]))
            cursor += step
        chunks.append(proc.flush())
        return np.concatenate(chunks, axis=1)

    def test_output_independent_of_chunking(self, glasses5, rng):
        directions = [DirectionSpec(azimuth=0.0, elevation=0.0), MOUTH]
        bank = design_bank(glasses5, directions, method="delay_and_sum", fs=16000, n_fft=512)
        audio = rng.standard_normal((5, 20480))
        one_shot = self._stream(bank, audio)
        chunked = self._stream(bank, audio, rng)
        assert one_shot.shape == (2, 20480)
        np.testing.assert_allclose(chunked, one_shot, atol=1e-12)

    def test_interior_matches_offline(self, glasses5, rng):
        """Away from the ramp-in/out edges the streamed output reproduces the
        offline filter bank exactly."""
        directions = [DirectionSpec(azimuth=0.0, elevation=0.0), MOUTH]
        bank = design_bank(glasses5, directions, method="delay_and_sum", fs=16000, n_fft=512)
        audio = rng.standard_normal((5, 20480))
        offline = istft(apply_bank(stft(audio, fs=16000, n_fft=512), bank), num_samples=20480)
        streamed = self._stream(bank, audio, rng)
        core = slice(512, 20480 - 512)
        np.testing.assert_allclose(streamed[:, core], offline[:, core], atol=1e-10)


class TestWavIo:
    def test_float_roundtrip_bit_exact(self, rng, tmp_path):
        audio = rng.standard_normal((2, 1234)).astype(np.float32).astype(float)
        path = tmp_path / "f32.wav"
        write_wav(path, audio, 16000)
        back, fs = read_wav(path)
        assert fs == 16000
        np.testing.assert_array_equal(back, audio)

    def test_pcm16_quantizes(self, rng, tmp_path):
        audio = np.clip(0.5 * rng.standard_normal(2000), -1, 1)
        path = tmp_path / "p16.wav"
        write_wav(path, audio, 16000, pcm16=True)
        back, _ = read_wav(path)
        np.testing.assert_allclose(back[0], audio, atol=1.0 / 32767)

    def test_expected_fs_mismatch(self, rng, tmp_path):
        path = tmp_path / "a.wav"
        write_wav(path, rng.standard_normal(100), 8000)
        with pytest.raises(DataError):
            read_wav(path, expected_fs=16000)
