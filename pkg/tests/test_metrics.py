import numpy as np
import pytest
from scipy.signal import butter, sosfilt

from mdwpe.errors import InvalidInputError
from mdwpe.metrics import (
    cepstral_distance,
    constants,
    evaluate,
    fwssnr,
    improvement,
    levinson,
    lpc_cepstrum,
    mel_filterbank,
)
from mdwpe.signals import synthetic_speech

FS = 16000


@pytest.fixture(scope="module")
def speech():
    return synthetic_speech(3.0, seed=1)


def test_fwssnr_identity_hits_ceiling(speech):
    assert fwssnr(speech, speech, FS) == pytest.approx(35.0)


def test_fwssnr_noise_and_sign(speech):
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(speech.size)
    noise *= np.linalg.norm(speech) / np.linalg.norm(noise)
    v = fwssnr(speech, speech + noise, FS)
    assert -10 < v < 35
    flipped = fwssnr(speech, -speech, FS)
    assert np.isfinite(flipped)
    assert flipped == pytest.approx(35.0)


def test_fwssnr_monotone_in_noise(speech):
    rng = np.random.default_rng(1)
    noise = rng.standard_normal(speech.size)
    noise *= np.linalg.norm(speech) / np.linalg.norm(noise)
    values = [fwssnr(speech, speech + g * noise, FS) for g in (0.01, 0.1, 1.0)]
    assert values[0] > values[1] > values[2]


def test_cd_identity_and_gain(speech):
    assert cepstral_distance(speech, speech, FS) == 0.0
    for gain in (0.5, 2.0, 1e-3):
        assert cepstral_distance(speech, gain * speech, FS) == pytest.approx(0.0, abs=1e-9)


def test_cd_lowpass(speech):
    lp = sosfilt(butter(6, 1000, fs=FS, output="sos"), speech)
    assert cepstral_distance(speech, lp, FS) > 1.0


def test_length_mismatch(speech):
    with pytest.raises(InvalidInputError):
        fwssnr(speech, speech[:-1], FS)
    with pytest.raises(InvalidInputError):
        cepstral_distance(speech, speech[:-1], FS)
    with pytest.raises(InvalidInputError):
        fwssnr(np.ones(100), np.ones(100), FS)


def test_improvement(speech):
    rng = np.random.default_rng(2)
    degraded = speech + 0.3 * np.std(speech) * rng.standard_normal(speech.size)
    for metric in ("fwssnr", "cd"):
        assert improvement(metric, speech, degraded, degraded, FS) == 0.0
        assert improvement(metric, speech, speech, degraded, FS) > 0
    with pytest.raises(InvalidInputError):
        improvement("pesq", speech, speech, speech, FS)


def test_levinson_against_solve():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(4000)
    x = np.convolve(x, [1, 0.6, -0.3, 0.1])[:4000]
    r = np.array([np.dot(x[: len(x) - k], x[k:]) for k in range(6)])
    a, err, refl = levinson(r, 5)
    from scipy.linalg import solve_toeplitz

    np.testing.assert_allclose(a[1:], -solve_toeplitz(r[:5], r[1:6]), rtol=1e-10)
    assert err > 0 and np.all(np.abs(refl) < 1)


def test_lpc_cepstrum_single_pole():
    # 1 / (1 - a z^-1) has cepstrum a^n / n
    a = 0.7
    c = lpc_cepstrum(np.array([1.0, -a]), 6)
    np.testing.assert_allclose(c, [a ** n / n for n in range(1, 7)], rtol=1e-12)


def test_mel_filterbank_shape():
    fb = mel_filterbank(23, 512, FS)
    assert fb.shape == (23, 257)
    assert np.all(fb >= 0) and np.all(fb.max(axis=1) > 0.5)


def test_report_lists_constants(speech):
    rep = evaluate(speech, speech, FS)
    assert rep.fwssnr == pytest.approx(35.0)
    assert rep.cd == 0.0
    assert rep.constants == constants()
    assert rep.constants["fwssnr_max_db"] == 35.0 and rep.constants["num_bands"] == 23
