"""Per-frequency noise covariance models.

The design covariance is a diffuse-field term plus weighted outer products
of steering vectors toward unwanted point sources. Point weights trade
null depth against the rest of the objective; they are soft preferences,
not hard constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DataError
from .geometry import SOUND_SPEED, ArrayGeometry, AtfSet, DirectionSpec, steering_vector

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-9
REGULARIZATION_SCALE = 1e-6


@dataclass(frozen=True)
class PointNoiseSpec:
    """A directional noise source: steering direction, weight, and PSD.

    ``psd`` is a constant or a callable of frequency in Hz; the callable
    form is the per-frequency override hook.
    """

    direction: DirectionSpec
    weight: float = 10.0
    psd: float | Callable[[float], float] = 1.0

    def __post_init__(self):
        if not self.weight >= 0:
            raise DataError(f"point-noise weight {self.weight} must be >= 0")
        if not callable(self.psd) and not self.psd > 0:
            raise DataError(f"point-noise psd {self.psd} must be > 0")

    def psd_at(self, frequency: float) -> float:
        value = self.psd(frequency) if callable(self.psd) else self.psd
        if not value > 0:
            raise DataError(f"psd at {frequency} Hz is {value}, must be > 0")
        return float(value)


@dataclass(frozen=True)
class NoiseCovariance:
    """Hermitian PSD covariance matrix at one frequency."""

    frequency: float
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataError("covariance must be a square matrix")
        scale = max(1.0, float(np.abs(np.trace(m))))
        herm_err = float(np.max(np.abs(m - m.conj().T)))
        if herm_err > HERMITIAN_TOL * scale:
            raise DataError(f"covariance not Hermitian (max asymmetry {herm_err:.3e})")
        min_eig = float(np.linalg.eigvalsh(m).min())
        if min_eig < -PSD_TOL * scale:
            raise DataError(f"covariance not PSD (min eigenvalue {min_eig:.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def num_mics(self) -> int:
        return self.matrix.shape[0]


def diffuse_covariance_sinc(
    geometry: ArrayGeometry, frequency: float, sound_speed: float = SOUND_SPEED
) -> NoiseCovariance:
    """Spherically isotropic diffuse field: coherence sinc(omega*d/c) between
    microphones at distance d, unit diagonal."""
    if frequency < 0:
        raise DataError("frequency must be non-negative")
    diffs = geometry.mics[:, None, :] - geometry.mics[None, :, :]
    dist = np.linalg.norm(diffs, axis=-1)
    # np.sinc(t) = sin(pi t)/(pi t); we need sin(x)/x with x = omega d / c
    matrix = np.sinc(2.0 * frequency * dist / sound_speed)
    return NoiseCovariance(frequency=float(frequency), matrix=matrix.astype(complex))


def diffuse_covariance_from_atfs(atfs: AtfSet, frequency: float) -> NoiseCovariance:
    """Empirical isotropic covariance: average of g g^H over the set's
    directions, trace-normalized to M.

    A meaningful isotropic estimate needs a dense direction grid (8 or
    more); fewer directions are accepted and yield the literal average.
    """
    fi = atfs.frequency_index(frequency)
    vecs = atfs.vectors[:, fi, :]
    if vecs.shape[0] < 1:
        raise DataError("ATF set has no directions")
    matrix = vecs.T @ vecs.conj() / vecs.shape[0]
    trace = float(np.trace(matrix).real)
    if not trace > 0:
        raise DataError("ATF average has non-positive trace")
    matrix *= atfs.num_mics / trace
    matrix = 0.5 * (matrix + matrix.conj().T)
    return NoiseCovariance(frequency=float(frequency), matrix=matrix)


def composite_covariance(
    diffuse: NoiseCovariance,
    points: list[PointNoiseSpec],
    geometry: ArrayGeometry,
    sound_speed: float = SOUND_SPEED,
) -> NoiseCovariance:
    """Diffuse covariance plus sum of psd*weight*g g^H over point noises.

    Point steering vectors use the analytic free-field/point model.
    """
    if diffuse.num_mics != geometry.num_mics:
        raise DataError(
            f"covariance is {diffuse.num_mics}-channel, geometry has {geometry.num_mics}"
        )
    matrix = np.array(diffuse.matrix, dtype=complex)
    f = diffuse.frequency
    for spec in points:
        g = steering_vector(geometry, spec.direction, f, sound_speed).entries
        matrix += (spec.weight * spec.psd_at(f)) * np.outer(g, g.conj())
    return NoiseCovariance(frequency=f, matrix=matrix)


def regularization_level(cov: NoiseCovariance) -> float:
    """The diagonal-loading floor used before inversion: 1e-6 * trace / M."""
    return REGULARIZATION_SCALE * float(np.trace(cov.matrix).real) / cov.num_mics


def regularize(cov: NoiseCovariance) -> NoiseCovariance:
    """Add the loading floor to near-singular covariances.

    Loading is skipped when the smallest eigenvalue already clears half
    the floor, which makes the operation idempotent: once loaded, a
    second call returns the input unchanged.
    """
    delta = regularization_level(cov)
    min_eig = float(np.linalg.eigvalsh(cov.matrix).min())
    if min_eig >= 0.5 * delta:
        return cov
    matrix = cov.matrix + delta * np.eye(cov.num_mics)
    return NoiseCovariance(frequency=cov.frequency, matrix=matrix)
