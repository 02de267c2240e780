"""STFT analysis/synthesis and beamformer-bank application.

Square-root Hann on both sides (WOLA) so analysis*synthesis windows sum
to one at 50% overlap; signals are center-padded by half a window so the
first frame is centered on sample 0. Banks are applied per bin:
out[k, t, f] = h_k(f)^H x(t, f).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile

from ._accel import overlap_add
from .errors import DataError, GridMismatchError

DEFAULT_FS = 16000
DEFAULT_N_FFT = 512
DEFAULT_HOP = 256
# OLA gain below this fraction of the peak is treated as unrecoverable
_EDGE_THRESHOLD = 1e-8


def sqrt_hann(n_fft: int) -> np.ndarray:
    """Square root of the periodic Hann window: sin(pi n / N)."""
    return np.sin(np.pi * np.arange(n_fft) / n_fft)


@dataclass
class Spectrogram:
    """Complex STFT data, shaped (channels, frames, bins)."""

    data: np.ndarray
    fs: int
    n_fft: int
    hop: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 3:
            raise DataError("spectrogram data must be (channels, frames, bins)")
        if self.data.shape[2] != self.n_fft // 2 + 1:
            raise DataError(
                f"{self.data.shape[2]} bins inconsistent with n_fft {self.n_fft}"
            )
        if self.hop <= 0 or self.n_fft % self.hop != 0:
            raise DataError(f"hop {self.hop} must divide n_fft {self.n_fft}")

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.n_fft, 1.0 / self.fs)

    @property
    def frame_rate(self) -> float:
        return self.fs / self.hop


def _as_2d(audio) -> np.ndarray:
    audio = np.asarray(audio, dtype=float)
    if audio.ndim == 1:
        return audio[None, :]
    if audio.ndim == 2:
        return audio
    raise DataError("audio must be 1-D or (channels, samples)")


def stft(
    audio,
    fs: int = DEFAULT_FS,
    n_fft: int = DEFAULT_N_FFT,
    hop: int = DEFAULT_HOP,
) -> Spectrogram:
    """Square-root-Hann analysis STFT of (channels, samples) audio."""
    x = _as_2d(audio)
    if x.shape[1] < n_fft:
        raise DataError(f"need at least n_fft = {n_fft} samples, got {x.shape[1]}")
    if n_fft % hop != 0:
        raise DataError(f"hop {hop} must divide n_fft {n_fft}")
    pad = n_fft // 2
    window = sqrt_hann(n_fft)
    padded = np.pad(x, ((0, 0), (pad, pad)))
    frames = np.lib.stride_tricks.sliding_window_view(padded, n_fft, axis=1)[:, ::hop, :]
    data = np.fft.rfft(frames * window, axis=2)
    return Spectrogram(data=data, fs=int(fs), n_fft=int(n_fft), hop=int(hop))


def istft(spec: Spectrogram, num_samples: int | None = None) -> np.ndarray:
    """Square-root-Hann synthesis by weighted overlap-add; inverts stft.

    ``num_samples`` trims/limits the output length (default: the full
    span implied by the frame count).
    """
    frames = np.fft.irfft(spec.data, n=spec.n_fft, axis=2)
    window = sqrt_hann(spec.n_fft)
    frames = frames * window
    n_frames = spec.num_frames
    pad = spec.n_fft // 2
    total = (n_frames - 1) * spec.hop + spec.n_fft
    out = np.zeros((spec.num_channels, total))
    for ch in range(spec.num_channels):
        buf = np.zeros(total)
        overlap_add(np.ascontiguousarray(frames[ch]), spec.hop, buf)
        out[ch] = buf
    wsum = np.zeros(total)
    tile = np.tile(window * window, (n_frames, 1))
    overlap_add(tile, spec.hop, wsum)
    good = wsum > _EDGE_THRESHOLD * wsum.max()
    out[:, good] /= wsum[good]
    out[:, ~good] = 0.0

    full = out[:, pad:]
    span = (n_frames - 1) * spec.hop
    if num_samples is None:
        num_samples = span
    if num_samples > full.shape[1]:
        full = np.pad(full, ((0, 0), (0, num_samples - full.shape[1])))
    return full[:, :num_samples]


def apply_bank(spec: Spectrogram, bank) -> Spectrogram:
    """Steer a multichannel spectrogram through every bank direction:
    out[k, t, f] = h_k(f)^H x(t, f)."""
    if spec.num_channels != bank.num_mics:
        raise GridMismatchError(
            f"spectrogram has {spec.num_channels} channels, bank expects {bank.num_mics}"
        )
    if spec.fs != bank.fs or spec.n_fft != bank.n_fft:
        raise GridMismatchError(
            f"spectrogram grid (fs={spec.fs}, n_fft={spec.n_fft}) does not match "
            f"bank grid (fs={bank.fs}, n_fft={bank.n_fft})"
        )
    data = np.einsum("kfm,mtf->ktf", bank.weights.conj(), spec.data)
    return Spectrogram(data=data, fs=spec.fs, n_fft=spec.n_fft, hop=spec.hop)


class BlockProcessor:
    """Streaming bank application with one-window lookahead.

    Push arbitrary sample blocks; steered samples come back once their
    full window context has arrived (latency at most n_fft samples).
    Concatenated push/flush output has exactly the pushed length. The
    first half window ramps in from silence, as in any streamed WOLA
    chain without center padding.
    """

    def __init__(self, bank, hop: int | None = None):
        hop = bank.n_fft // 2 if hop is None else hop
        if hop <= 0 or bank.n_fft % hop != 0:
            raise DataError(f"hop {hop} must divide n_fft {bank.n_fft}")
        self.bank = bank
        self.n_fft = bank.n_fft
        self.hop = hop
        self.window = sqrt_hann(self.n_fft)
        # steady-state WOLA gain of the squared window at this hop
        depth = 3 * (self.n_fft // hop)
        wsum = np.zeros((depth - 1) * hop + self.n_fft)
        overlap_add(np.tile(self.window**2, (depth, 1)), hop, wsum)
        mid = wsum[self.n_fft : 2 * self.n_fft]
        if np.max(np.abs(mid - mid[0])) > 1e-10 * mid[0]:
            raise DataError(f"window/hop pair is not constant-overlap-add (hop {hop})")
        self.cola = float(mid[0])
        self._pending = np.zeros((bank.num_mics, 0))
        self._carry = np.zeros((bank.num_directions, self.n_fft - hop))
        self._in_count = 0
        self._out_count = 0

    def push(self, block) -> np.ndarray:
        """Feed (channels, samples); return finalized steered samples."""
        block = _as_2d(block)
        if block.shape[0] != self.bank.num_mics:
            raise DataError(
                f"block has {block.shape[0]} channels, bank expects {self.bank.num_mics}"
            )
        self._pending = np.concatenate([self._pending, block], axis=1)
        self._in_count += block.shape[1]
        out = self._drain()
        self._out_count += out.shape[1]
        return out

    def flush(self) -> np.ndarray:
        """Emit the remaining samples, zero-padding the final windows."""
        owed = self._in_count - self._out_count
        if owed == 0:
            return np.zeros((self.bank.num_directions, 0))
        self._pending = np.pad(self._pending, ((0, 0), (0, self.n_fft)))
        out = self._drain()[:, :owed]
        self._out_count += out.shape[1]
        self._pending = np.zeros((self.bank.num_mics, 0))
        self._carry = np.zeros((self.bank.num_directions, self.n_fft - self.hop))
        return out

    def _drain(self) -> np.ndarray:
        n_fft, hop = self.n_fft, self.hop
        available = self._pending.shape[1]
        n_frames = (available - n_fft) // hop + 1 if available >= n_fft else 0
        if n_frames <= 0:
            return np.zeros((self.bank.num_directions, 0))
        used = (n_frames - 1) * hop + n_fft
        frames = np.lib.stride_tricks.sliding_window_view(
            self._pending[:, :used], n_fft, axis=1
        )[:, ::hop, :]
        spec_data = np.fft.rfft(frames * self.window, axis=2)
        steered = np.einsum("kfm,mtf->ktf", self.bank.weights.conj(), spec_data)
        synth = np.fft.irfft(steered, n=n_fft, axis=2) * self.window
        buf = np.zeros((self.bank.num_directions, used))
        for k in range(self.bank.num_directions):
            overlap_add(np.ascontiguousarray(synth[k]), hop, buf[k])
        buf[:, : n_fft - hop] += self._carry
        emit = n_frames * hop
        self._carry = buf[:, emit:].copy()
        self._pending = self._pending[:, emit:]
        return buf[:, :emit] / self.cola


def read_wav(path, expected_fs: int | None = None) -> tuple[np.ndarray, int]:
    """Read a WAV file as (channels, samples) float64 in [-1, 1].

    PCM16 is scaled by 1/32768; float32 passes through. A sample-rate
    mismatch with ``expected_fs`` is an error; there is no resampling.
    """
    try:
        fs, data = scipy.io.wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"cannot read WAV {path}: {exc}") from exc
    if expected_fs is not None and fs != expected_fs:
        raise DataError(
            f"{path}: sample rate {fs} != configured {expected_fs}; resampling unsupported"
        )
    if data.dtype == np.int16:
        audio = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        audio = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        audio = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported WAV sample format {data.dtype}")
    if audio.ndim == 1:
        audio = audio[None, :]
    else:
        audio = audio.T
    return np.ascontiguousarray(audio), int(fs)


def write_wav(path, audio, fs: int, pcm16: bool = False) -> None:
    """Write (channels, samples) audio as float32 WAV (or PCM16)."""
    x = _as_2d(audio).T
    if x.shape[1] == 1:
        x = x[:, 0]
    if pcm16:
        clipped = np.clip(x, -1.0, 32767.0 / 32768.0)
        scipy.io.wavfile.write(path, int(fs), (clipped * 32768.0).round().astype(np.int16))
    else:
        scipy.io.wavfile.write(path, int(fs), x.astype(np.float32))
