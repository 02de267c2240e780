"""Log-Mel features over steered channels, corpus statistics, and the
direction-indexed feature tensor format.

Mel scale is the HTK form 2595*log10(1 + f/700); filters are triangular
with unit peak on the power spectrum; the log is natural with a 1e-10
floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParseError
from .dsp import Spectrogram

NUM_MEL = 80
LOG_FLOOR = 1e-10
VARIANCE_FLOOR = 1e-8

FEATURE_MAGIC = "beambank-feat-v1"


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(num_filters: int, n_fft: int, fs: int) -> np.ndarray:
    """Triangular unit-peak filters, (num_filters, n_fft/2 + 1), spanning
    0 to fs/2 on the mel scale."""
    edges_mel = np.linspace(hz_to_mel(0.0), hz_to_mel(fs / 2.0), num_filters + 2)
    edges_hz = mel_to_hz(edges_mel)
    bins = np.fft.rfftfreq(n_fft, 1.0 / fs)
    bank = np.zeros((num_filters, bins.shape[0]))
    for i in range(num_filters):
        lo, center, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bins - lo) / (center - lo)
        falling = (hi - bins) / (hi - center)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return bank


def mel_center_frequencies(num_filters: int, fs: int) -> np.ndarray:
    edges_mel = np.linspace(hz_to_mel(0.0), hz_to_mel(fs / 2.0), num_filters + 2)
    return mel_to_hz(edges_mel[1:-1])


def log_mel(channel: np.ndarray, fs: int, num_filters: int = NUM_MEL) -> np.ndarray:
    """Natural-log mel energies of one channel's STFT, (frames, bins) ->
    (frames, num_filters)."""
    channel = np.asarray(channel)
    if channel.ndim != 2:
        raise DataError("log_mel expects (frames, bins)")
    n_fft = 2 * (channel.shape[1] - 1)
    bank = mel_filterbank(num_filters, n_fft, fs)
    power = np.abs(channel) ** 2
    return np.log(np.maximum(power @ bank.T, LOG_FLOOR))


@dataclass
class FeatureTensor:
    """Direction-indexed features, (frames, directions, mel) float32."""

    data: np.ndarray
    frame_rate: float
    direction_labels: list[str]

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise DataError("feature tensor must be (frames, directions, mel)")
        if self.data.shape[1] != len(self.direction_labels):
            raise DataError(
                f"{self.data.shape[1]} direction slots vs "
                f"{len(self.direction_labels)} labels"
            )
        if self.data.size and not np.all(np.isfinite(self.data)):
            raise DataError("feature tensor has non-finite values")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def num_directions(self) -> int:
        return self.data.shape[1]


def featurize_bank_output(spec: Spectrogram, direction_labels, num_filters: int = NUM_MEL) -> FeatureTensor:
    """Log-mel of every steered channel, stacked on the direction axis."""
    labels = list(direction_labels)
    if spec.num_channels != len(labels):
        raise DataError(f"{spec.num_channels} channels vs {len(labels)} direction labels")
    mels = np.stack(
        [log_mel(spec.data[k], spec.fs, num_filters) for k in range(spec.num_channels)], axis=1
    )
    return FeatureTensor(
        data=mels.astype(np.float32),
        frame_rate=spec.frame_rate,
        direction_labels=labels,
    )


@dataclass
class CorpusStats:
    """Streaming per-coefficient mean/variance, (directions, mel)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def empty(cls, num_directions: int, num_mel: int = NUM_MEL) -> "CorpusStats":
        return cls(
            count=0,
            mean=np.zeros((num_directions, num_mel)),
            m2=np.zeros((num_directions, num_mel)),
        )

    def add(self, tensor: FeatureTensor) -> "CorpusStats":
        """Accumulate frames (Welford update on batch statistics)."""
        x = tensor.data.astype(np.float64)
        if x.shape[1:] != self.mean.shape:
            raise DataError(f"tensor shape {x.shape[1:]} vs stats shape {self.mean.shape}")
        n_b = x.shape[0]
        if n_b == 0:
            return self
        mean_b = x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        return self._merge_moments(n_b, mean_b, m2_b)

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        """Combine two partial accumulations (parallel/Chan merge)."""
        if other.mean.shape != self.mean.shape:
            raise DataError("stats shapes differ")
        return self._merge_moments(other.count, other.mean, other.m2)

    def _merge_moments(self, n_b: int, mean_b, m2_b) -> "CorpusStats":
        if n_b == 0:
            return self
        n_a = self.count
        n = n_a + n_b
        delta = mean_b - self.mean
        mean = self.mean + delta * (n_b / n)
        m2 = self.m2 + m2_b + delta**2 * (n_a * n_b / n)
        return CorpusStats(count=n, mean=mean, m2=m2)

    @property
    def variance(self) -> np.ndarray:
        if self.count < 1:
            raise DataError("no frames accumulated")
        return self.m2 / self.count


def accumulate_stats(tensors) -> CorpusStats:
    """Corpus statistics over an iterable of FeatureTensor."""
    stats = None
    for tensor in tensors:
        if stats is None:
            stats = CorpusStats.empty(tensor.num_directions, tensor.data.shape[2])
        stats = stats.add(tensor)
    if stats is None or stats.count < 1:
        raise DataError("no frames to accumulate")
    return stats


def normalize(tensor: FeatureTensor, stats: CorpusStats) -> FeatureTensor:
    """(x - mean) / sqrt(var + 1e-8), per direction and coefficient."""
    if tensor.data.shape[1:] != stats.mean.shape:
        raise DataError(f"tensor shape {tensor.data.shape[1:]} vs stats shape {stats.mean.shape}")
    scale = np.sqrt(stats.variance + VARIANCE_FLOOR)
    data = (tensor.data.astype(np.float64) - stats.mean) / scale
    return FeatureTensor(
        data=data.astype(np.float32),
        frame_rate=tensor.frame_rate,
        direction_labels=list(tensor.direction_labels),
    )


def denormalize(tensor: FeatureTensor, stats: CorpusStats) -> FeatureTensor:
    """Inverse of :func:`normalize` given the same stats."""
    if tensor.data.shape[1:] != stats.mean.shape:
        raise DataError(f"tensor shape {tensor.data.shape[1:]} vs stats shape {stats.mean.shape}")
    scale = np.sqrt(stats.variance + VARIANCE_FLOOR)
    data = tensor.data.astype(np.float64) * scale + stats.mean
    return FeatureTensor(
        data=data.astype(np.float32),
        frame_rate=tensor.frame_rate,
        direction_labels=list(tensor.direction_labels),
    )


def stack_frames(features: np.ndarray, factor: int = 6) -> np.ndarray:
    """Concatenate each run of ``factor`` consecutive frame vectors,
    zero-padding the tail: (frames, dim) -> (ceil(frames/factor), factor*dim).

    Offered on raw features; downstream stacks typically apply this after
    their own frame-rate reduction.
    """
    features = np.asarray(features)
    if features.ndim != 2:
        raise DataError("stack_frames expects (frames, dim)")
    if factor < 1:
        raise DataError("stack factor must be >= 1")
    n, d = features.shape
    steps = -(-n // factor)
    padded = np.zeros((steps * factor, d), dtype=features.dtype)
    padded[:n] = features
    return padded.reshape(steps, factor * d)


def export_features(tensor: FeatureTensor, path) -> None:
    """Write a tensor: one JSON header line, then little-endian float32
    payload in (frame, direction, mel) order; exact round trip."""
    header = {
        "magic": FEATURE_MAGIC,
        "shape": list(tensor.data.shape),
        "frame_rate": tensor.frame_rate,
        "direction_labels": list(tensor.direction_labels),
        "mel_convention": "htk-2595log10, power spectrum, natural log, floor 1e-10",
    }
    payload = np.ascontiguousarray(tensor.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())


def import_features(path) -> FeatureTensor:
    """Read a tensor written by :func:`export_features`."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        blob = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: bad feature header: {exc}") from exc
    if header.get("magic") != FEATURE_MAGIC:
        raise ParseError(f"{path}: not a feature file (missing magic)")
    try:
        shape = tuple(int(v) for v in header["shape"])
        labels = [str(v) for v in header["direction_labels"]]
        frame_rate = float(header["frame_rate"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad feature header field: {exc}") from exc
    data = np.frombuffer(blob, dtype="<f4")
    if data.shape[0] != int(np.prod(shape)):
        raise ParseError(
            f"{path}: payload holds {data.shape[0]} values, header implies {int(np.prod(shape))}"
        )
    return FeatureTensor(
        data=data.reshape(shape).copy(), frame_rate=frame_rate, direction_labels=labels
    )


def save_stats(stats: CorpusStats, path) -> None:
    """Write corpus statistics as JSON (mean/variance per direction)."""
    doc = {
        "magic": "beambank-stats-v1",
        "count": stats.count,
        "mean": stats.mean.tolist(),
        "variance": stats.variance.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_stats(path) -> CorpusStats:
    """Read statistics written by :func:`save_stats`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    try:
        count = int(doc["count"])
        mean = np.asarray(doc["mean"], dtype=float)
        variance = np.asarray(doc["variance"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad stats field: {exc}") from exc
    if np.any(variance < 0) or count < 1:
        raise ParseError(f"{path}: invalid stats (count {count})")
    return CorpusStats(count=count, mean=mean, m2=variance * count)
