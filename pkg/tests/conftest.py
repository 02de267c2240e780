"""Shared fixtures: reference arrays, seeded RNGs, and tiny speech/noise corpora."""

import numpy as np
import pytest

from beambank.dsp import write_wav
from beambank.geometry import reference_glasses, reference_glasses_5


@pytest.fixture(scope="session")
def glasses7():
    return reference_glasses()


@pytest.fixture(scope="session")
def glasses5():
    return reference_glasses_5()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def _tone_burst(rng, fs, seconds, f0):
    n = int(seconds * fs)
    t = np.arange(n) / fs
    envelope = np.minimum(1.0, np.minimum(t, t[::-1]) * 20.0)
    return 0.1 * envelope * np.sin(2 * np.pi * f0 * t) + 0.01 * rng.standard_normal(n)


@pytest.fixture(scope="session")
def corpus_dirs(tmp_path_factory):
    """A clips directory of (wav, txt) pairs and a noise directory, 16 kHz."""
    root = tmp_path_factory.mktemp("corpus")
    clips = root / "clips"
    noise = root / "noise"
    clips.mkdir()
    noise.mkdir()
    fs = 16000
    rng = np.random.default_rng(99)
    texts = ["hello there", "how are you", "fine thanks", "see you soon"]
    for i, text in enumerate(texts):
        audio = _tone_burst(rng, fs, 1.2 + 0.3 * i, 300.0 + 100.0 * i)
        write_wav(clips / f"utt{i}.wav", audio, fs)
        (clips / f"utt{i}.txt").write_text(text, encoding="utf-8")
    for i in range(2):
        write_wav(noise / f"noise{i}.wav", 0.05 * rng.standard_normal(fs * 2), fs)
    return clips, noise
