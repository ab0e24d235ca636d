import numpy as np
import pytest

from mdwpe.delay_comp import fractional_delay_fft
from mdwpe.errors import InvalidInputError
from mdwpe.room import desk_scenario, oracle_tdoas, render_scene
from mdwpe.signals import synthetic_speech
from mdwpe.tdoa import estimate_all_tdoas, gcc_phat_function, gcc_phat_pair

RNG = np.random.default_rng(0)
NOISE = RNG.standard_normal(16000)


def test_identical_signals():
    est = gcc_phat_pair(NOISE, NOISE)
    assert est.tdoa == pytest.approx(0.0, abs=0.01)
    assert est.confidence >= 1


def test_integer_shift():
    x_m = np.concatenate([np.zeros(50), NOISE[:-50]])
    assert gcc_phat_pair(NOISE, x_m).tdoa == pytest.approx(50.0, abs=0.5)


def test_fractional_shift():
    x_m = fractional_delay_fft(NOISE, -23.25)
    assert gcc_phat_pair(NOISE, x_m).tdoa == pytest.approx(-23.25, abs=0.5)


def test_antisymmetric_and_gain_invariant():
    x_m = fractional_delay_fft(NOISE, 17.6)
    fwd = gcc_phat_pair(NOISE, x_m).tdoa
    assert gcc_phat_pair(x_m, NOISE).tdoa == pytest.approx(-fwd, abs=1e-6)
    assert gcc_phat_pair(NOISE, 3.0 * x_m).tdoa == pytest.approx(fwd, abs=1e-9)


def test_lag_axis():
    cc = gcc_phat_function(NOISE, NOISE, frame=256, shift=128)
    assert len(cc) == 256
    assert int(np.argmax(cc)) == 256 // 2 - 1


def test_short_and_silent_signals():
    with pytest.raises(InvalidInputError):
        gcc_phat_pair(np.ones(100), np.ones(100))
    with pytest.raises(InvalidInputError):
        gcc_phat_pair(np.zeros(5000), np.zeros(5000))
    # leading silence is skipped rather than diluting the average
    x = np.concatenate([np.zeros(8192), NOISE])
    y = np.concatenate([np.zeros(8192), np.roll(NOISE, 7)])
    assert gcc_phat_pair(x, y).tdoa == pytest.approx(7.0, abs=0.5)


def test_estimate_all():
    est = estimate_all_tdoas(np.stack([NOISE, NOISE]))
    assert [e.tdoa for e in est] == pytest.approx([0.0, 0.0], abs=0.01)
    assert est[0].tdoa == 0.0 and est[0].confidence == float("inf")
    est = estimate_all_tdoas(np.stack([NOISE, NOISE, NOISE]), ref_index=1)
    assert est[1].tdoa == 0.0
    with pytest.raises(InvalidInputError, match="need >= 2 channels"):
        estimate_all_tdoas(NOISE[None])
    with pytest.raises(InvalidInputError, match="microphone 1"):
        estimate_all_tdoas(np.zeros((2, 100)))


@pytest.fixture(scope="module")
def speech():
    return synthetic_speech(10.0, seed=0)


@pytest.mark.parametrize("position", range(6))
def test_anechoic_desk_within_one_sample(speech, position):
    sc = desk_scenario(0.5, position, max_order=0)
    audio = render_scene(sc, speech).audio
    est = np.array([e.tdoa for e in estimate_all_tdoas(audio)])
    assert np.max(np.abs(est - oracle_tdoas(sc))) <= 1.0


@pytest.mark.slow
def test_reverberant_desk_robustness(speech):
    errors = []
    for position in range(6):
        sc = desk_scenario(0.5, position)
        audio = render_scene(sc, speech).audio
        est = np.array([e.tdoa for e in estimate_all_tdoas(audio)])
        errors.extend(np.abs(est - oracle_tdoas(sc))[1:])
    # counted per (position, microphone) pair
    assert np.mean(np.array(errors) <= 4.0) >= 0.9
