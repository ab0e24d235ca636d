import csv
import logging

import numpy as np
import pytest
from click.testing import CliRunner

from mdwpe.cli import main
from mdwpe.io import read_tdoa_file, read_wav, save_scenario, write_tdoa_file, write_wav
from mdwpe.metrics import fwssnr
from mdwpe.room import desk_scenario, oracle_tdoas


def run(*args):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    return result


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    result = run("simulate", "--seconds", 4, "--seed", 3, "--out", out)
    assert result.exit_code == 0, result.output
    audio, fs = read_wav(out / "mics.wav")
    write_wav(out / "unprocessed.wav", audio[0], fs)
    return out


def test_simulate_outputs(scene):
    audio, fs = read_wav(scene / "mics.wav")
    assert fs == 16000 and audio.shape == (4, 64000)
    ref, _ = read_wav(scene / "reference.wav")
    assert ref.shape == (1, 64000)
    tdoas = read_tdoa_file(scene / "tdoa_oracle.txt", 4)
    np.testing.assert_array_equal(tdoas, oracle_tdoas(desk_scenario(0.5, 0)))
    rirs, _ = read_wav(scene / "rirs.wav")
    assert rirs.shape[0] == 4


def test_simulate_is_deterministic(scene, tmp_path):
    result = run("simulate", "--seconds", 4, "--seed", 3, "--out", tmp_path)
    assert result.exit_code == 0
    for name in ("mics.wav", "reference.wav", "rirs.wav", "tdoa_oracle.txt", "scenario.ini"):
        assert (tmp_path / name).read_bytes() == (scene / name).read_bytes(), name


def test_simulate_empty_speech_writes_nothing(tmp_path):
    out = tmp_path / "out"
    result = run("simulate", "--seconds", 0, "--out", out)
    assert result.exit_code != 0
    assert "non-empty" in result.output
    assert not out.exists() or list(out.iterdir()) == []


def test_simulate_from_config(tmp_path):
    save_scenario(tmp_path / "s.ini", desk_scenario(0.3, 2))
    result = run("simulate", "--config", tmp_path / "s.ini", "--seconds", 1, "--t60-ms", 400, "--out", tmp_path / "o")
    assert result.exit_code == 0
    assert "t60_ms = 400.0" in (tmp_path / "o" / "scenario.ini").read_text()


def test_tdoa_anechoic_matches_oracle(tmp_path):
    scenario = desk_scenario(0.5, 4, max_order=0)
    save_scenario(tmp_path / "s.ini", scenario)
    assert run("simulate", "--config", tmp_path / "s.ini", "--seconds", 4, "--out", tmp_path).exit_code == 0
    result = run("tdoa", tmp_path / "mics.wav", "--out", tmp_path / "est.txt")
    assert result.exit_code == 0
    est = read_tdoa_file(tmp_path / "est.txt", 4)
    assert est[0] == 0.0
    assert np.all(np.abs(est - oracle_tdoas(scenario)) <= 1.0)


def test_tdoa_reference_entry_and_stdout(scene):
    result = run("tdoa", scene / "mics.wav", "--ref-mic", 2)
    lines = result.output.strip().splitlines()
    assert len(lines) == 4
    assert lines[2] == "2\t0.0"


def test_tdoa_single_channel(scene):
    result = run("tdoa", scene / "unprocessed.wav")
    assert result.exit_code != 0
    assert "need >= 2 channels" in result.output


def test_dereverb_improves_and_keeps_length(scene, tmp_path):
    result = run("dereverb", scene / "mics.wav", "--mode", "md-nint", "--tdoa-file", scene / "tdoa_oracle.txt",
                 "--out", tmp_path / "y.wav")
    assert result.exit_code == 0
    y, _ = read_wav(tmp_path / "y.wav")
    ref, _ = read_wav(scene / "reference.wav")
    x, _ = read_wav(scene / "unprocessed.wav")
    assert y.shape == x.shape
    assert fwssnr(ref[0], y[0], 16000) > fwssnr(ref[0], x[0], 16000)


def test_dereverb_mi_ignores_tdoas(scene, tmp_path, caplog):
    with caplog.at_level(logging.WARNING, logger="mdwpe"):
        result = run("dereverb", scene / "mics.wav", "--mode", "mi", "--iters", 1, "--tdoa-file",
                     scene / "tdoa_oracle.txt", "--out", tmp_path / "a.wav")
    assert result.exit_code == 0
    assert "ignored" in caplog.text
    run("dereverb", scene / "mics.wav", "--mode", "mi", "--iters", 1, "--out", tmp_path / "b.wav")
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()


def test_dereverb_md_int_zero_tdoas_equals_mi(scene, tmp_path):
    write_tdoa_file(tmp_path / "zero.txt", np.zeros(4))
    run("dereverb", scene / "mics.wav", "--mode", "mi", "--iters", 2, "--out", tmp_path / "mi.wav")
    run("dereverb", scene / "mics.wav", "--mode", "md-int", "--iters", 2, "--tdoa-file", tmp_path / "zero.txt",
        "--out", tmp_path / "int.wav")
    assert (tmp_path / "mi.wav").read_bytes() == (tmp_path / "int.wav").read_bytes()


def test_dereverb_md_needs_tdoas(scene, tmp_path):
    result = run("dereverb", scene / "mics.wav", "--mode", "md-int", "--out", tmp_path / "y.wav")
    assert result.exit_code != 0
    assert "--tdoa-file or --estimate-tdoa" in result.output
    assert not (tmp_path / "y.wav").exists()
    result = run("dereverb", scene / "mics.wav", "--tdoa-file", scene / "tdoa_oracle.txt", "--estimate-tdoa",
                 "--out", tmp_path / "y.wav")
    assert result.exit_code != 0


def test_dereverb_rejects_mismatched_tdoa_file(scene, tmp_path):
    write_tdoa_file(tmp_path / "t.txt", [0.0, 1.0])
    result = run("dereverb", scene / "mics.wav", "--tdoa-file", tmp_path / "t.txt", "--out", tmp_path / "y.wav")
    assert result.exit_code != 0
    assert "2 entries for 4" in result.output


def test_dereverb_estimated_tdoas(scene, tmp_path):
    result = run("dereverb", scene / "mics.wav", "--mode", "md-int", "--iters", 1, "--estimate-tdoa",
                 "--out", tmp_path / "y.wav")
    assert result.exit_code == 0


def _report(result):
    rows = {}
    for line in result.output.splitlines():
        parts = line.split()
        if parts and parts[0] in ("fwssnr_db", "cd_db"):
            rows[parts[0]] = [float(v) for v in parts[1:]]
    return rows


def test_evaluate_identity_rows(scene, tmp_path):
    result = run("evaluate", "--reference", scene / "reference.wav", "--processed", scene / "unprocessed.wav",
                 "--unprocessed", scene / "unprocessed.wav", "--csv", tmp_path / "r.csv")
    assert result.exit_code == 0
    rows = _report(result)
    assert rows["fwssnr_db"][2] == 0.0 and rows["cd_db"][2] == 0.0
    assert "fwssnr_max_db=35.0" in result.output
    with open(tmp_path / "r.csv", encoding="utf-8") as fh:
        records = list(csv.reader(fh))
    assert records[0] == ["metric", "unprocessed", "processed", "improvement"]
    assert any(r[0] == "constant:num_bands" for r in records)


def test_evaluate_reference_is_maximal(scene):
    result = run("evaluate", "--reference", scene / "reference.wav", "--processed", scene / "reference.wav",
                 "--unprocessed", scene / "unprocessed.wav")
    rows = _report(result)
    assert rows["fwssnr_db"][1] == 35.0
    assert rows["cd_db"][1] == 0.0
    assert rows["fwssnr_db"][2] > 0 and rows["cd_db"][2] > 0


def test_evaluate_rejects_multichannel(scene):
    result = run("evaluate", "--reference", scene / "mics.wav", "--processed", scene / "reference.wav",
                 "--unprocessed", scene / "unprocessed.wav")
    assert result.exit_code != 0
    assert "must be mono" in result.output


def test_experiment_table(tmp_path):
    args = ("experiment", "--positions", 1, "--seconds", 2, "--mode", "mi", "--mode", "md-nint", "--tdoa", "oracle",
            "--out")
    result = run(*args, tmp_path / "a")
    assert result.exit_code == 0
    with open(tmp_path / "a" / "results.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["mode"] for r in rows] == ["MI", "MD-NINT"]
    assert all(r["tdoa_source"] == "oracle" and r["t60_ms"] == "500" for r in rows)
    assert (tmp_path / "a" / "experiment.ini").exists()
    run(*args, tmp_path / "b")
    for name in ("results.txt", "experiment.ini"):
        a = (tmp_path / "a" / name).read_text()
        b = (tmp_path / "b" / name).read_text().replace(str(tmp_path / "b"), str(tmp_path / "a"))
        if name == "results.txt":
            # runtimes differ between runs
            a, b = ([line.split()[:5] for line in t.splitlines()] for t in (a, b))
        assert a == b, name
