"""Deterministic speech-like test signals.

A source-filter model: a glottal pulse train with a drifting pitch, shaped
by three formant resonators per vowel, alternating with noise bursts and
pauses. It is not speech, but it is sparse in time-frequency and strongly
non-stationary, which is what the dereverberation statistics depend on.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidInputError

# (F1, F2, F3) in Hz for a handful of vowels
_VOWELS = np.array([
    (730, 1090, 2440),
    (270, 2290, 3010),
    (530, 1840, 2480),
    (570, 840, 2410),
    (300, 870, 2240),
    (660, 1720, 2410),
    (490, 1350, 1690),
])
_BANDWIDTHS = (80.0, 120.0, 160.0)


def _resonator(x, freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    a = [1.0, -2 * r * np.cos(2 * np.pi * freq / fs), r * r]
    return lfilter([1.0 - r], a, x)


def _voiced(n, fs, rng):
    f0 = rng.uniform(95, 210) * np.linspace(1.0, rng.uniform(0.8, 1.2), n)
    phase = np.cumsum(f0 / fs)
    pulses = np.diff(np.floor(phase), prepend=0.0)
    excitation = lfilter([1.0], [1.0, -0.95], pulses)  # glottal tilt
    out = np.zeros(n)
    formants = _VOWELS[rng.integers(len(_VOWELS))] * rng.uniform(0.9, 1.1)
    for f, bw in zip(formants, _BANDWIDTHS):
        out += _resonator(excitation, f, bw, fs)
    return out


def _unvoiced(n, fs, rng):
    noise = rng.standard_normal(n)
    centre = rng.uniform(2500, 6000)
    return 0.3 * _resonator(noise, centre, 1500.0, fs)


def synthetic_speech(duration: float, fs: int = 16000, seed: int = 0) -> np.ndarray:
    """Speech-like signal of ``duration`` seconds, peak-normalised to 0.5."""
    total = int(round(duration * fs))
    if total <= 0:
        raise InvalidInputError(f"speech must be non-empty, got {duration} s")
    rng = np.random.default_rng(seed)
    out = np.zeros(total)
    t = int(0.1 * fs)
    while t < total:
        n = int(rng.uniform(0.08, 0.3) * fs)
        seg = _unvoiced(n, fs, rng) if rng.random() < 0.25 else _voiced(n, fs, rng)
        env = np.sin(np.pi * np.arange(n) / n) ** 2
        seg = seg * env / (np.max(np.abs(seg)) + 1e-12) * rng.uniform(0.3, 1.0)
        end = min(total, t + n)
        out[t:end] += seg[:end - t]
        t = end
        # short gaps inside words, longer ones between them
        gap = rng.uniform(0.01, 0.05) if rng.random() < 0.7 else rng.uniform(0.15, 0.45)
        t += int(gap * fs)
    return 0.5 * out / (np.max(np.abs(out)) + 1e-12)
