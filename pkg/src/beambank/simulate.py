"""Shoebox room simulation and conversation-scene composition.

Rooms are simulated with the image-source method: mirror images of the
source up to a reflection-order cap, each contributing an attenuated,
fractionally delayed 81-tap windowed-sinc pulse. Scenes place a wearer
(self), a conversation partner in the frontal sector, and optionally an
out-of-sector bystander, then mix noise at an integer-dB SNR measured
against the self+other mixture only.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal

from ._accel import HALF_TAPS, add_pulses
from .errors import DataError, ParseError
from .geometry import SOUND_SPEED, ArrayGeometry

ROOM_DIMS_LOW = np.array([5.0, 5.0, 2.0])
ROOM_DIMS_HIGH = np.array([10.0, 10.0, 6.0])
ABSORPTION_RANGE = (0.2, 0.6)
DEFAULT_MAX_ORDER = 6

WALL_MARGIN = 0.5
PARTNER_SECTOR = math.radians(60.0)
PARTNER_DISTANCE_RANGE = (1.2, 1.8)
BYSTANDER_DISTANCE_RANGE = (1.2, 2.5)
SNR_GRID = range(-5, 31)
OVERLAP_CHOICES = (None, 0.0, 0.5)
SELF_OTHER_OVERLAP = 0.1
BYSTANDER_GAP_S = 0.2

# mouth position in the device frame: in front of and below the array
MOUTH_OFFSET = np.array([0.08, 0.0, -0.06])

ACTIVITY_FLOOR = 1e-8
MAX_DECORRELATION_DELAY_S = 2e-3
MANIFEST_SCHEMA = "beambank-scene-v1"


@dataclass(frozen=True)
class RoomSpec:
    """A shoebox room: dimensions, wall reflection losses, image order cap.

    ``absorption`` is a scalar or six per-wall values ordered
    (x=0, y=0, z=0, x=Lx, y=Ly, z=Lz); walls reflect with coefficient
    sqrt(1 - absorption).
    """

    dimensions: np.ndarray
    absorption: float | tuple = 0.4
    max_order: int = DEFAULT_MAX_ORDER

    def __post_init__(self):
        dims = np.asarray(self.dimensions, dtype=float)
        if dims.shape != (3,) or not np.all(dims > 0):
            raise DataError("room dimensions must be 3 positive lengths")
        dims.setflags(write=False)
        object.__setattr__(self, "dimensions", dims)
        alpha = np.asarray(self.absorption, dtype=float)
        if alpha.ndim == 0:
            alpha = np.full(6, float(alpha))
        if alpha.shape != (6,) or np.any(alpha <= 0) or np.any(alpha > 1):
            raise DataError("absorption must be a scalar or 6 per-wall values in (0, 1]")
        alpha.setflags(write=False)
        object.__setattr__(self, "absorption", alpha)
        if self.max_order < 0:
            raise DataError("max reflection order must be >= 0")

    def reflection_coefficients(self) -> np.ndarray:
        """(2, 3) wall reflection coefficients: row 0 the walls through the
        origin, row 1 the opposite walls; columns are the x/y/z axes."""
        return np.sqrt(1.0 - np.asarray(self.absorption).reshape(2, 3))


@dataclass(frozen=True)
class RIR:
    """Multi-microphone impulse responses from one source."""

    source_id: str
    taps: np.ndarray
    fs: int

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=float)
        if taps.ndim != 2:
            raise DataError("RIR taps must be (mics, samples)")
        if not np.all(np.isfinite(taps)):
            raise DataError(f"RIR '{self.source_id}' has non-finite taps")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)


def _image_sources(room: RoomSpec, source: np.ndarray, max_order: int):
    """All image positions and amplitudes up to the reflection-order cap.

    Images are (1-2p) * (source + 2 r L) over p in {0,1}^3 and integer
    r; the order of an image is sum(|r+p| + |r|), its amplitude the
    product of per-wall reflection coefficients raised to the hit counts.
    """
    beta = room.reflection_coefficients()
    dims = room.dimensions
    half = max_order // 2 + 1
    r_axis = np.arange(-half, half + 1)
    r = np.array(list(itertools.product(r_axis, r_axis, r_axis)))
    positions = []
    amplitudes = []
    for p in itertools.product((0, 1), repeat=3):
        p = np.array(p)
        order = np.sum(np.abs(r + p) + np.abs(r), axis=1)
        keep = r[order <= max_order]
        if keep.size == 0:
            continue
        positions.append((1 - 2 * p) * (source + 2.0 * keep * dims))
        amplitudes.append(
            np.prod(beta[0] ** np.abs(keep + p) * beta[1] ** np.abs(keep), axis=1)
        )
    return np.concatenate(positions), np.concatenate(amplitudes)


def _check_inside(room: RoomSpec, point: np.ndarray, label: str):
    if np.any(point <= 0) or np.any(point >= room.dimensions):
        raise DataError(f"{label} at {point.tolist()} is outside the room {room.dimensions.tolist()}")


def generate_rir_ism(
    room: RoomSpec,
    source,
    mics,
    fs: int,
    sound_speed: float = SOUND_SPEED,
    max_order: int | None = None,
    source_id: str = "source",
) -> RIR:
    """Image-source room impulse responses from one source to each mic.

    The direct path contributes amplitude 1/(4 pi d); each pulse is an
    81-tap windowed sinc centered on the fractional arrival time, so an
    integer-delay direct path is a single exact impulse.
    """
    source = np.asarray(source, dtype=float)
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    _check_inside(room, source, "source")
    for i, mic in enumerate(mics):
        _check_inside(room, mic, f"microphone {i}")
    order = room.max_order if max_order is None else max_order
    images, gains = _image_sources(room, source, order)

    max_dist = float(
        np.max(np.linalg.norm(images[None, :, :] - mics[:, None, :], axis=2))
    )
    length = int(math.ceil(max_dist / sound_speed * fs)) + HALF_TAPS + 2
    taps = np.zeros((mics.shape[0], length))
    for m, mic in enumerate(mics):
        dist = np.linalg.norm(images - mic[None, :], axis=1)
        delays = dist / sound_speed * fs
        amps = gains / (4.0 * math.pi * dist)
        add_pulses(taps[m], delays, amps)
    return RIR(source_id=source_id, taps=taps, fs=int(fs))


def sample_room(rng: np.random.Generator) -> RoomSpec:
    """Uniform room draw: dimensions in [5,5,2]..[10,10,6] m, scalar
    absorption in [0.2, 0.6], order cap 6."""
    dims = rng.uniform(ROOM_DIMS_LOW, ROOM_DIMS_HIGH)
    alpha = float(rng.uniform(*ABSORPTION_RANGE))
    return RoomSpec(dimensions=dims, absorption=alpha, max_order=DEFAULT_MAX_ORDER)


@dataclass(frozen=True)
class SceneSpec:
    """Placement, overlap, and SNR recipe for one conversation scene."""

    room: RoomSpec
    geometry_id: str
    wearer_position: np.ndarray
    wearer_yaw: float
    partner_azimuth: float
    partner_distance: float
    bystander_azimuth: float | None
    bystander_distance: float | None
    overlap_ratio: float | None
    snr_db: int
    seed: int

    def __post_init__(self):
        pos = np.asarray(self.wearer_position, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "wearer_position", pos)
        if abs(self.partner_azimuth) > PARTNER_SECTOR + 1e-12:
            raise DataError(
                f"partner azimuth {math.degrees(self.partner_azimuth):.1f} deg outside the "
                f"+-{math.degrees(PARTNER_SECTOR):.0f} deg sector"
            )
        has_bystander = self.bystander_azimuth is not None
        if has_bystander != (self.overlap_ratio is not None) or has_bystander != (
            self.bystander_distance is not None
        ):
            raise DataError("bystander azimuth, distance, and overlap must be set together")
        if has_bystander:
            if abs(self.bystander_azimuth) <= PARTNER_SECTOR:
                raise DataError(
                    f"bystander azimuth {math.degrees(self.bystander_azimuth):.1f} deg is "
                    "inside the partner sector"
                )
            if self.overlap_ratio not in (0.0, 0.5):
                raise DataError(f"overlap ratio {self.overlap_ratio} not in {{0.0, 0.5}}")
        if not -5 <= int(self.snr_db) <= 30 or int(self.snr_db) != self.snr_db:
            raise DataError(f"snr {self.snr_db} must be an integer in [-5, 30]")

    @property
    def has_bystander(self) -> bool:
        return self.bystander_azimuth is not None


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _source_position(spec: SceneSpec, azimuth: float, distance: float) -> np.ndarray:
    offset = distance * np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
    return spec.wearer_position + _yaw_matrix(spec.wearer_yaw) @ offset


def scene_positions(spec: SceneSpec, geometry: ArrayGeometry) -> dict:
    """Room-frame positions: mics, mouth, partner, optional bystander."""
    rot = _yaw_matrix(spec.wearer_yaw)
    out = {
        "mics": spec.wearer_position + geometry.mics @ rot.T,
        "mouth": spec.wearer_position + rot @ MOUTH_OFFSET,
        "partner": _source_position(spec, spec.partner_azimuth, spec.partner_distance),
    }
    if spec.has_bystander:
        out["bystander"] = _source_position(
            spec, spec.bystander_azimuth, spec.bystander_distance
        )
    return out


def sample_scene(rng: np.random.Generator, geometry_catalog) -> SceneSpec:
    """Draw a scene honoring the placement rules by rejection sampling.

    ``geometry_catalog`` is a sequence of ArrayGeometry or of
    (ArrayGeometry, proportion) pairs. Partner azimuth is uniform in the
    +-60 deg sector at 1.2-1.8 m; the bystander, when present, is uniform
    outside the sector; every source ends up >= 0.5 m from all walls.
    """
    geometries, weights = _normalize_catalog(geometry_catalog)
    room = sample_room(rng)
    geometry = geometries[rng.choice(len(geometries), p=weights)]
    for _ in range(1000):
        margin = WALL_MARGIN + 0.6
        low = np.array([margin, margin, 1.0])
        high = np.array(
            [room.dimensions[0] - margin, room.dimensions[1] - margin,
             min(1.5, room.dimensions[2] - 0.6)]
        )
        if np.any(high <= low):
            room = sample_room(rng)
            continue
        wearer = rng.uniform(low, high)
        yaw = float(rng.uniform(-math.pi, math.pi))
        partner_az = float(rng.uniform(-PARTNER_SECTOR, PARTNER_SECTOR))
        partner_dist = float(rng.uniform(*PARTNER_DISTANCE_RANGE))
        overlap = OVERLAP_CHOICES[rng.integers(len(OVERLAP_CHOICES))]
        if overlap is None:
            bystander_az = None
            bystander_dist = None
        else:
            raw = rng.uniform(math.degrees(PARTNER_SECTOR), 360.0 - math.degrees(PARTNER_SECTOR))
            deg = raw if raw <= 180.0 else raw - 360.0
            bystander_az = math.radians(deg)
            bystander_dist = float(rng.uniform(*BYSTANDER_DISTANCE_RANGE))
        snr = int(rng.integers(SNR_GRID.start, SNR_GRID.stop))
        seed = int(rng.integers(0, 2**31 - 1))
        spec = SceneSpec(
            room=room,
            geometry_id=geometry.id,
            wearer_position=wearer,
            wearer_yaw=yaw,
            partner_azimuth=partner_az,
            partner_distance=partner_dist,
            bystander_azimuth=bystander_az,
            bystander_distance=bystander_dist,
            overlap_ratio=overlap,
            snr_db=snr,
            seed=seed,
        )
        if _placement_ok(spec, geometry):
            return spec
    raise DataError("could not place a valid scene in 1000 attempts")


def _normalize_catalog(geometry_catalog):
    entries = list(geometry_catalog)
    if not entries:
        raise DataError("geometry catalog is empty")
    if isinstance(entries[0], tuple):
        geometries = [g for g, _ in entries]
        weights = np.array([w for _, w in entries], dtype=float)
        if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
            raise DataError(f"catalog proportions must be >= 0 and sum to 1, got {weights.tolist()}")
    else:
        geometries = entries
        weights = np.full(len(entries), 1.0 / len(entries))
    return geometries, weights


def _placement_ok(spec: SceneSpec, geometry: ArrayGeometry) -> bool:
    pos = scene_positions(spec, geometry)
    points = [pos["mouth"], pos["partner"]]
    if spec.has_bystander:
        points.append(pos["bystander"])
    points.extend(pos["mics"])
    dims = spec.room.dimensions
    for p in points:
        if np.any(p < WALL_MARGIN) or np.any(p > dims - WALL_MARGIN):
            return False
    return True


@dataclass(frozen=True)
class Clip:
    """A mono utterance with its transcript."""

    samples: np.ndarray
    transcript: str

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise DataError("clip audio must be mono (1-D)")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.transcript.strip():
            raise DataError("clip transcript is empty")


@dataclass(frozen=True)
class Segment:
    start: int
    end: int
    speaker: str
    transcript: str


@dataclass
class SceneManifest:
    """Everything needed to interpret one rendered scene."""

    schema: str
    fs: int
    num_samples: int
    geometry_id: str
    segments: list[Segment]
    reference: str
    scene: dict
    audio_path: str | None = None

    def validate(self):
        for seg in self.segments:
            if seg.start < 0 or seg.end <= seg.start or seg.end > self.num_samples:
                raise DataError(
                    f"segment [{seg.start}, {seg.end}) outside audio of {self.num_samples} samples"
                )
        starts = [s.start for s in self.segments]
        if starts != sorted(starts):
            raise DataError("segments must be ordered by start sample")

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "fs": self.fs,
            "num_samples": self.num_samples,
            "geometry_id": self.geometry_id,
            "segments": [
                {"start": s.start, "end": s.end, "speaker": s.speaker, "transcript": s.transcript}
                for s in self.segments
            ],
            "reference": self.reference,
            "scene": self.scene,
            "audio_path": self.audio_path,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneManifest":
        try:
            manifest = cls(
                schema=doc["schema"],
                fs=int(doc["fs"]),
                num_samples=int(doc["num_samples"]),
                geometry_id=str(doc["geometry_id"]),
                segments=[
                    Segment(int(s["start"]), int(s["end"]), str(s["speaker"]), str(s["transcript"]))
                    for s in doc["segments"]
                ],
                reference=str(doc["reference"]),
                scene=doc["scene"],
                audio_path=doc.get("audio_path"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad scene manifest: {exc}") from exc
        manifest.validate()
        return manifest


def scene_to_dict(spec: SceneSpec) -> dict:
    return {
        "room": {
            "dimensions": spec.room.dimensions.tolist(),
            "absorption": np.asarray(spec.room.absorption).tolist(),
            "max_order": spec.room.max_order,
        },
        "geometry_id": spec.geometry_id,
        "wearer_position": spec.wearer_position.tolist(),
        "wearer_yaw": spec.wearer_yaw,
        "partner_azimuth": spec.partner_azimuth,
        "partner_distance": spec.partner_distance,
        "bystander_azimuth": spec.bystander_azimuth,
        "bystander_distance": spec.bystander_distance,
        "overlap_ratio": spec.overlap_ratio,
        "snr_db": spec.snr_db,
        "seed": spec.seed,
    }


def scene_from_dict(doc: dict) -> SceneSpec:
    try:
        room = RoomSpec(
            dimensions=np.asarray(doc["room"]["dimensions"], dtype=float),
            absorption=tuple(doc["room"]["absorption"]),
            max_order=int(doc["room"]["max_order"]),
        )
        return SceneSpec(
            room=room,
            geometry_id=str(doc["geometry_id"]),
            wearer_position=np.asarray(doc["wearer_position"], dtype=float),
            wearer_yaw=float(doc["wearer_yaw"]),
            partner_azimuth=float(doc["partner_azimuth"]),
            partner_distance=float(doc["partner_distance"]),
            bystander_azimuth=None
            if doc["bystander_azimuth"] is None
            else float(doc["bystander_azimuth"]),
            bystander_distance=None
            if doc["bystander_distance"] is None
            else float(doc["bystander_distance"]),
            overlap_ratio=None if doc["overlap_ratio"] is None else float(doc["overlap_ratio"]),
            snr_db=int(doc["snr_db"]),
            seed=int(doc["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad scene spec: {exc}") from exc


@dataclass
class ComposedScene:
    """Rendered scene audio plus the noise-scaling reference mixture."""

    audio: np.ndarray
    main_mix: np.ndarray
    manifest: SceneManifest


def _convolve_place(total: np.ndarray, clip: np.ndarray, rir: RIR, onset: int):
    wet = scipy.signal.fftconvolve(clip[None, :], rir.taps, axes=1)
    end = min(onset + wet.shape[1], total.shape[1])
    total[:, onset:end] += wet[:, : end - onset]


def compose_scene(
    spec: SceneSpec,
    geometry: ArrayGeometry,
    self_clip: Clip,
    other_clip: Clip,
    bystander_clip: Clip | None,
    fs: int,
    sound_speed: float = SOUND_SPEED,
    self_other_overlap: float = SELF_OTHER_OVERLAP,
) -> ComposedScene:
    """Render a conversation: self through the near-field mouth path
    (direct + first-order reflections), partner and bystander through the
    room's full-order paths.

    The partner starts so self and other overlap by ``self_other_overlap``
    of the shorter clip. The bystander onset realizes the spec's overlap
    ratio against the contiguous self+other span: a 0.5 ratio bystander
    straddles the span's end, a 0.0 ratio bystander starts after a short
    gap; over-long bystander clips are tail-trimmed to keep the ratio
    realizable.
    """
    if spec.has_bystander != (bystander_clip is not None):
        raise DataError("bystander clip presence must match the scene spec")
    for name, clip in (("self", self_clip), ("other", other_clip), ("bystander", bystander_clip)):
        if clip is not None and clip.samples.shape[0] < fs:
            raise DataError(f"{name} clip shorter than 1 s")

    pos = scene_positions(spec, geometry)
    dims_ok = _placement_ok(spec, geometry)
    if not dims_ok:
        raise DataError("scene placement violates wall margins")

    rir_self = generate_rir_ism(
        spec.room, pos["mouth"], pos["mics"], fs, sound_speed, max_order=1, source_id="self"
    )
    rir_other = generate_rir_ism(
        spec.room, pos["partner"], pos["mics"], fs, sound_speed, source_id="other"
    )

    n_self = self_clip.samples.shape[0]
    n_other = other_clip.samples.shape[0]
    onset_other = max(0, n_self - int(round(self_other_overlap * min(n_self, n_other))))
    main_end = onset_other + n_other

    segments = [
        Segment(0, n_self, "self", self_clip.transcript.strip()),
        Segment(onset_other, main_end, "other", other_clip.transcript.strip()),
    ]

    bystander_samples = None
    onset_bystander = 0
    if spec.has_bystander:
        bystander_samples = bystander_clip.samples
        if bystander_samples.shape[0] > main_end:
            bystander_samples = bystander_samples[:main_end]
        n_by = bystander_samples.shape[0]
        if spec.overlap_ratio == 0.0:
            onset_bystander = main_end + int(round(BYSTANDER_GAP_S * fs))
        else:
            onset_bystander = main_end - int(round(spec.overlap_ratio * n_by))
        segments.append(
            Segment(
                onset_bystander,
                onset_bystander + n_by,
                "bystander",
                bystander_clip.transcript.strip(),
            )
        )

    tail = rir_other.taps.shape[1]
    if spec.has_bystander:
        rir_by = generate_rir_ism(
            spec.room, pos["bystander"], pos["mics"], fs, sound_speed, source_id="bystander"
        )
        tail = max(tail, rir_by.taps.shape[1])
    total_len = max(s.end for s in segments) + tail
    m = geometry.num_mics

    main_mix = np.zeros((m, total_len))
    _convolve_place(main_mix, self_clip.samples, rir_self, 0)
    _convolve_place(main_mix, other_clip.samples, rir_other, onset_other)
    audio = main_mix.copy()
    if spec.has_bystander:
        _convolve_place(audio, bystander_samples, rir_by, onset_bystander)

    ordered = sorted(segments, key=lambda s: s.start)
    reference = " ".join(
        f"<{seg.speaker}> {seg.transcript}" for seg in ordered if seg.speaker != "bystander"
    )
    manifest = SceneManifest(
        schema=MANIFEST_SCHEMA,
        fs=fs,
        num_samples=total_len,
        geometry_id=spec.geometry_id,
        segments=ordered,
        reference=reference,
        scene=scene_to_dict(spec),
    )
    manifest.validate()
    return ComposedScene(audio=audio, main_mix=main_mix, manifest=manifest)


def _active_span(reference: np.ndarray) -> slice:
    envelope = np.max(np.abs(reference), axis=0)
    peak = envelope.max()
    if peak <= 0:
        raise DataError("silent reference mixture")
    active = np.flatnonzero(envelope > ACTIVITY_FLOOR * peak)
    return slice(int(active[0]), int(active[-1]) + 1)


def mix_noise(
    scene_audio: np.ndarray,
    noise: np.ndarray,
    snr_db: float,
    reference: np.ndarray,
    rng: np.random.Generator,
    fs: int,
    loop: bool = True,
) -> np.ndarray:
    """Add noise scaled for the requested SNR against ``reference`` (the
    self+other mixture), measured over the reference's active span.

    Mono noise is replicated across channels with per-channel random
    integer delays up to 2 ms to break perfect coherence. Short noise is
    looped (or rejected when loop=False).
    """
    scene_audio = np.atleast_2d(np.asarray(scene_audio, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    noise = np.atleast_2d(np.asarray(noise, dtype=float))
    m, n_samples = scene_audio.shape

    max_delay = int(round(MAX_DECORRELATION_DELAY_S * fs))
    if noise.shape[0] == 1:
        delays = rng.integers(0, max_delay + 1, size=m)
        needed = n_samples + int(delays.max())
        mono = noise[0]
        if mono.shape[0] < needed:
            if not loop:
                raise DataError(
                    f"noise of {mono.shape[0]} samples shorter than scene ({needed}) with loop=False"
                )
            reps = int(math.ceil(needed / mono.shape[0]))
            mono = np.tile(mono, reps)
        channels = np.stack([mono[d : d + n_samples] for d in delays])
    else:
        if noise.shape[0] != m:
            raise DataError(f"noise has {noise.shape[0]} channels, scene has {m}")
        if noise.shape[1] < n_samples:
            if not loop:
                raise DataError("noise shorter than scene with loop=False")
            reps = int(math.ceil(n_samples / noise.shape[1]))
            noise = np.tile(noise, (1, reps))
        channels = noise[:, :n_samples]

    span = _active_span(reference)
    p_ref = float(np.mean(reference[:, span] ** 2))
    p_noise = float(np.mean(channels[:, span] ** 2))
    if p_noise <= 0:
        raise DataError("noise is silent over the scene's active span")
    scale = math.sqrt(p_ref / (p_noise * 10.0 ** (snr_db / 10.0)))
    return scene_audio + scale * channels


@dataclass(frozen=True)
class ClipSource:
    """A directory of (wav, txt) utterance pairs, ordered by file name."""

    wavs: tuple
    texts: tuple

    @classmethod
    def from_directory(cls, path) -> "ClipSource":
        root = Path(path)
        wavs = sorted(root.glob("*.wav"))
        pairs = [(w, w.with_suffix(".txt")) for w in wavs]
        pairs = [(w, t) for w, t in pairs if t.exists()]
        if not pairs:
            raise DataError(f"no (wav, txt) pairs under {root}")
        return cls(
            wavs=tuple(str(w) for w, _ in pairs), texts=tuple(str(t) for _, t in pairs)
        )

    def __len__(self) -> int:
        return len(self.wavs)

    def load(self, index: int, fs: int) -> Clip:
        from .dsp import read_wav

        audio, _ = read_wav(self.wavs[index], expected_fs=fs)
        transcript = Path(self.texts[index]).read_text(encoding="utf-8").strip()
        return Clip(samples=audio[0], transcript=transcript)


@dataclass(frozen=True)
class NoiseSource:
    """A directory of noise wav files, ordered by file name."""

    wavs: tuple

    @classmethod
    def from_directory(cls, path) -> "NoiseSource":
        root = Path(path)
        wavs = sorted(root.glob("*.wav"))
        if not wavs:
            raise DataError(f"no wav files under {root}")
        return cls(wavs=tuple(str(w) for w in wavs))

    def __len__(self) -> int:
        return len(self.wavs)

    def load(self, index: int, fs: int) -> np.ndarray:
        from .dsp import read_wav

        audio, _ = read_wav(self.wavs[index], expected_fs=fs)
        return audio


def render_scene(
    spec: SceneSpec,
    geometry: ArrayGeometry,
    clips: ClipSource,
    noise: NoiseSource | None,
    fs: int,
    sound_speed: float = SOUND_SPEED,
) -> ComposedScene:
    """Pick clips and noise deterministically from the spec's seed, compose,
    and mix. The returned manifest still lacks an audio path."""
    rng = np.random.default_rng(spec.seed)
    picks = rng.choice(len(clips), size=min(3, len(clips)), replace=len(clips) < 3)
    self_clip = clips.load(int(picks[0]), fs)
    other_clip = clips.load(int(picks[1 % len(picks)]), fs)
    bystander_clip = None
    if spec.has_bystander:
        bystander_clip = clips.load(int(picks[2 % len(picks)]), fs)
    composed = compose_scene(
        spec, geometry, self_clip, other_clip, bystander_clip, fs, sound_speed
    )
    if noise is not None and len(noise) > 0:
        noise_audio = noise.load(int(rng.integers(len(noise))), fs)
        composed.audio = mix_noise(
            composed.audio, noise_audio, spec.snr_db, composed.main_mix, rng, fs
        )
    return composed


def _render_one(args) -> dict:
    index, spec_doc, geometry_mics, geometry_id, clip_dirs, noise_dirs, fs, out_dir = args
    from .dsp import write_wav

    spec = scene_from_dict(spec_doc)
    geometry = ArrayGeometry(id=geometry_id, mics=np.asarray(geometry_mics))
    clips = ClipSource(wavs=clip_dirs[0], texts=clip_dirs[1])
    noise = None if noise_dirs is None else NoiseSource(wavs=noise_dirs)
    composed = render_scene(spec, geometry, clips, noise, fs)
    audio_name = f"scene_{index:05d}.wav"
    write_wav(Path(out_dir) / audio_name, composed.audio, fs)
    composed.manifest.audio_path = audio_name
    row = composed.manifest.to_dict()
    row["index"] = index
    return row


def build_dataset(
    catalog,
    clips: ClipSource,
    noise: NoiseSource | None,
    count: int,
    out_dir,
    seed: int = 0,
    fs: int = 16000,
    workers: int = 1,
) -> Path:
    """Render ``count`` scenes and write audio plus a JSON-lines manifest.

    Geometries are assigned by the catalog proportions; every scene is a
    pure function of (config, seed, index), so the manifest is
    reproducible for any worker count. Returns the manifest path.
    """
    geometries, weights = _normalize_catalog(catalog)
    if count < 1:
        raise DataError("dataset count must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {g.id: g for g in geometries}

    specs = []
    root = np.random.SeedSequence(seed)
    children = root.spawn(count)
    for i in range(count):
        rng = np.random.default_rng(children[i])
        gi = int(rng.choice(len(geometries), p=weights))
        spec = sample_scene(rng, [geometries[gi]])
        specs.append(spec)

    jobs = [
        (
            i,
            scene_to_dict(spec),
            by_id[spec.geometry_id].mics.tolist(),
            spec.geometry_id,
            (clips.wavs, clips.texts),
            None if noise is None else noise.wavs,
            fs,
            str(out_dir),
        )
        for i, spec in enumerate(specs)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_render_one, jobs))
    else:
        rows = [_render_one(job) for job in jobs]

    rows.sort(key=lambda r: r["index"])
    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest_path
