"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The jitted path is the default whenever numba imports. Setting the
environment variable ``BEAMBANK_PURE_NUMPY=1`` before import forces the
vectorized numpy fallback (useful for debugging and on platforms without
numba). ``benchmarks/bench_kernels.py`` times both paths side by side.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "BEAMBANK_PURE_NUMPY"

USE_NUMBA = os.environ.get(_ENV_FLAG, "").strip().lower() not in {"1", "true", "yes"}
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - exercised only without numba
        USE_NUMBA = False

#: taps on each side of the pulse center; total kernel length is 2*HALF_TAPS+1
HALF_TAPS = 40
NUM_TAPS = 2 * HALF_TAPS + 1


def add_pulses_numpy(out: np.ndarray, delays: np.ndarray, amps: np.ndarray) -> None:
    """Scatter-add windowed-sinc pulses into ``out`` (in place).

    Each pulse is ``amps[e] * sinc(n - delays[e]) * hann(n - delays[e])``
    over the 81 integer taps nearest the (fractional) delay. Taps falling
    outside the buffer are dropped.
    """
    if delays.size == 0:
        return
    centers = np.rint(delays).astype(np.int64)
    offsets = np.arange(-HALF_TAPS, HALF_TAPS + 1)
    n = centers[:, None] + offsets[None, :]
    t = n - delays[:, None]
    vals = amps[:, None] * np.sinc(t) * 0.5 * (1.0 + np.cos(2.0 * np.pi * t / NUM_TAPS))
    mask = (n >= 0) & (n < out.shape[0])
    np.add.at(out, n[mask], vals[mask])


if USE_NUMBA:

    @njit(cache=True)
    def add_pulses_numba(out, delays, amps):  # pragma: no cover - jitted
        length = out.shape[0]
        for e in range(delays.shape[0]):
            tau = delays[e]
            a = amps[e]
            # window hits exactly zero at |t| = 40.5, so the half-integer
            # rounding convention cannot change the result
            center = int(math.floor(tau + 0.5))
            for k in range(-HALF_TAPS, HALF_TAPS + 1):
                n = center + k
                if n < 0 or n >= length:
                    continue
                t = n - tau
                if t == 0.0:
                    s = 1.0
                else:
                    x = math.pi * t
                    s = math.sin(x) / x
                w = 0.5 * (1.0 + math.cos(2.0 * math.pi * t / NUM_TAPS))
                out[n] += a * s * w

else:
    add_pulses_numba = None


def add_pulses(out: np.ndarray, delays: np.ndarray, amps: np.ndarray) -> None:
    """Dispatch to the jitted kernel or the numpy fallback."""
    if USE_NUMBA:
        add_pulses_numba(out, np.ascontiguousarray(delays), np.ascontiguousarray(amps))
    else:
        add_pulses_numpy(out, delays, amps)


def overlap_add_numpy(frames: np.ndarray, hop: int, out: np.ndarray) -> None:
    """Overlap-add ``frames`` (T, n_fft) into ``out`` at stride ``hop``.

    Requires hop to divide n_fft; frames within one phase group then tile
    without overlap so each group reduces to a reshaped += .
    """
    n_frames, n_fft = frames.shape
    phases = n_fft // hop
    for p in range(phases):
        sub = frames[p::phases]
        if sub.shape[0] == 0:
            continue
        start = p * hop
        view = out[start:start + sub.shape[0] * n_fft]
        view.reshape(sub.shape[0], n_fft)[:] += sub


if USE_NUMBA:

    @njit(cache=True)
    def overlap_add_numba(frames, hop, out):  # pragma: no cover - jitted
        n_frames, n_fft = frames.shape
        for t in range(n_frames):
            s = t * hop
            for i in range(n_fft):
                out[s + i] += frames[t, i]

else:
    overlap_add_numba = None


def overlap_add(frames: np.ndarray, hop: int, out: np.ndarray) -> None:
    """Dispatch to the jitted kernel or the numpy fallback."""
    if USE_NUMBA:
        overlap_add_numba(np.ascontiguousarray(frames), hop, out)
    else:
        overlap_add_numpy(frames, hop, out)
