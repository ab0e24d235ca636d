import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.io import wavfile

from mdwpe.errors import InvalidConfigError, InvalidInputError
from mdwpe.experiment import ExperimentSpec
from mdwpe.io import load_scenario, read_tdoa_file, read_wav, save_scenario, write_tdoa_file, write_wav
from mdwpe.room import Scenario, desk_scenario


def test_wav_float_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (3, 1000)).astype(np.float32).astype(np.float64)
    write_wav(tmp_path / "a.wav", x, 16000)
    y, fs = read_wav(tmp_path / "a.wav")
    assert fs == 16000
    np.testing.assert_array_equal(x, y)
    fs, raw = wavfile.read(tmp_path / "a.wav")
    assert raw.dtype == np.float32


def test_wav_int16_accepted(tmp_path):
    wavfile.write(tmp_path / "b.wav", 16000, np.array([0, 16384, -32768], dtype=np.int16))
    y, _ = read_wav(tmp_path / "b.wav")
    np.testing.assert_array_equal(y, [[0.0, 0.5, -1.0]])


def test_wav_rejects_bad_audio(tmp_path):
    with pytest.raises(InvalidInputError):
        write_wav(tmp_path / "e.wav", np.zeros(0), 16000)
    with pytest.raises(InvalidInputError):
        write_wav(tmp_path / "n.wav", np.array([0.0, np.nan]), 16000)
    assert list(tmp_path.iterdir()) == []
    (tmp_path / "junk.wav").write_bytes(b"not a wav")
    with pytest.raises(InvalidInputError, match="junk.wav"):
        read_wav(tmp_path / "junk.wav")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5000, 5000, allow_nan=False), min_size=1, max_size=8))
def test_tdoa_file_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("tdoa") / "t.txt"
    tdoas = np.array([0.0] + values)
    write_tdoa_file(path, tdoas)
    np.testing.assert_array_equal(read_tdoa_file(path, len(tdoas)), tdoas)


@pytest.mark.parametrize(
    "text, match",
    [
        ("0\t0.0\n1\tabc\n", "expected"),
        ("0\t0.0\n0\t1.0\n", "duplicate"),
        ("0\t0.0\n2\t1.0\n", "0..M-1"),
        ("0\t1.5\n1\t0.0\n", "must have TDOA 0"),
        ("0\t0.0\n1\tinf\n", "non-finite"),
        ("", "no line for reference"),
    ],
)
def test_tdoa_file_validation(tmp_path, text, match):
    path = tmp_path / "t.txt"
    path.write_text(text)
    with pytest.raises(InvalidInputError, match=match):
        read_tdoa_file(path)


def test_tdoa_file_channel_count(tmp_path):
    write_tdoa_file(tmp_path / "t.txt", [0.0, 3.0])
    with pytest.raises(InvalidInputError, match="2 entries for 4"):
        read_tdoa_file(tmp_path / "t.txt", 4)
    np.testing.assert_array_equal(read_tdoa_file(tmp_path / "t.txt", 2), [0.0, 3.0])
    with pytest.raises(InvalidInputError):
        read_tdoa_file(tmp_path / "t.txt", 2, ref_index=1)


def test_comments_and_blank_lines_skipped(tmp_path):
    (tmp_path / "t.txt").write_text("# estimated\n0\t0.0\n\n1\t-2.5\n")
    np.testing.assert_array_equal(read_tdoa_file(tmp_path / "t.txt"), [0.0, -2.5])


@pytest.mark.parametrize(
    "scenario",
    [
        desk_scenario(0.5, 3),
        Scenario((6.0, 5.0, 3.0), ((1.0, 1.0, 1.0), (2.0, 1.0, 1.1)), (3.0, 2.5, 1.5), 0.3,
                 fs=8000, sound_speed=340.0, max_order=4, rir_length=0.25),
    ],
)
def test_scenario_round_trip(tmp_path, scenario):
    save_scenario(tmp_path / "s.ini", scenario)
    assert load_scenario(tmp_path / "s.ini") == scenario


def test_scenario_config_errors(tmp_path):
    path = tmp_path / "s.ini"
    path.write_text("[scenario]\nroom_dims_m = 8, 8\n")
    with pytest.raises(InvalidConfigError, match="sections"):
        load_scenario(path)
    save_scenario(path, desk_scenario())
    path.write_text(path.read_text().replace("t60_ms = 500.0", "t60_ms = fast"))
    with pytest.raises(InvalidConfigError, match="t60_ms"):
        load_scenario(path)
    path.write_text(path.read_text().replace("t60_ms = fast", "t60_ms = 500").replace("mic1_", "mic7_"))
    with pytest.raises(InvalidConfigError, match="numbered"):
        load_scenario(path)
    with pytest.raises(InvalidConfigError):
        load_scenario(tmp_path / "missing.ini")


def test_scenario_config_has_units_in_keys(tmp_path):
    save_scenario(tmp_path / "s.ini", desk_scenario())
    text = (tmp_path / "s.ini").read_text()
    for key in ("room_dims_m", "t60_ms", "sample_rate_hz", "mic0_position_m"):
        assert key in text


def test_experiment_spec_round_trip(tmp_path):
    specs = [
        ExperimentSpec(),
        ExperimentSpec(t60s_ms=(500.0, 750.0), modes=("MI", "MD-NINT"), tdoa_sources=("oracle", "estimated"),
                       taps=6, sparsity=0.0, seed=7, speech_seconds=2.5, output_dir=str(tmp_path / "x"),
                       source_positions=((2.0, 3.0, 1.5),)),
    ]
    for spec in specs:
        assert ExperimentSpec.from_ini(spec.to_ini()) == spec
        (tmp_path / "e.ini").write_text(spec.to_ini())
        assert ExperimentSpec.load(tmp_path / "e.ini") == spec


def test_experiment_spec_validation(tmp_path):
    with pytest.raises(InvalidConfigError):
        ExperimentSpec(modes=())
    with pytest.raises(InvalidConfigError):
        ExperimentSpec(modes=("MD-FOO",))
    with pytest.raises(InvalidConfigError):
        ExperimentSpec(tdoa_sources=("file",))
    with pytest.raises(InvalidConfigError, match="does not exist"):
        ExperimentSpec(speech_path=str(tmp_path / "nope.wav"))
    with pytest.raises(InvalidConfigError):
        ExperimentSpec(ref_index=4)
    with pytest.raises(InvalidConfigError, match="iterations"):
        ExperimentSpec.from_ini(ExperimentSpec().to_ini().replace("iterations = 5", "iterations = five"))
