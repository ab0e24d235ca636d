"""Audio, TDOA-file and scenario-config input/output.

WAV files are written as 32-bit float at the scenario rate; 32-bit float and
16-bit PCM are accepted on read. TDOA files hold one ``index<TAB>samples``
line per microphone. Scenario configs are INI files whose keys carry their
units (``t60_ms``, ``room_dims_m``, ...).
"""

from __future__ import annotations

import configparser
import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import InvalidConfigError, InvalidInputError
from .room import Scenario


def _atomic_write(path, write):
    """Call ``write(tmp_path)`` and move the result into place only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_wav(path) -> tuple[np.ndarray, int]:
    """Return ``(audio (channels, samples) float64, sample_rate)``."""
    try:
        fs, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"{path}: cannot read WAV ({exc})") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise InvalidInputError(f"{path}: unsupported sample format {data.dtype}; use 32-bit float or 16-bit PCM")
    return np.atleast_2d(data.T), int(fs)


def write_wav(path, audio, fs: int) -> None:
    """Write ``audio`` (samples,) or (channels, samples) as 32-bit float."""
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim not in (1, 2) or audio.size == 0:
        raise InvalidInputError(f"{path}: refusing to write empty or {audio.ndim}-D audio")
    if not np.all(np.isfinite(audio)):
        raise InvalidInputError(f"{path}: audio contains non-finite samples")
    data = audio.astype(np.float32)
    if data.ndim == 2:
        data = data.T
    _atomic_write(path, lambda tmp: wavfile.write(tmp, int(fs), data))


def write_tdoa_file(path, tdoas) -> None:
    lines = [f"{m}\t{float(t)!r}\n" for m, t in enumerate(np.asarray(tdoas, dtype=float))]
    _atomic_write(path, lambda tmp: Path(tmp).write_text("".join(lines), encoding="utf-8"))


def read_tdoa_file(path, num_mics: int | None = None, ref_index: int = 0) -> np.ndarray:
    """Parse a TDOA file; the reference line must exist and be exactly 0."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"{path}: {exc}") from exc
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        try:
            idx, value = int(parts[0]), float(parts[1])
        except (IndexError, ValueError):
            raise InvalidInputError(f"{path}:{lineno}: expected 'mic_index<TAB>tdoa_samples', got {line!r}") from None
        if idx in entries:
            raise InvalidInputError(f"{path}:{lineno}: duplicate microphone {idx}")
        if not np.isfinite(value):
            raise InvalidInputError(f"{path}:{lineno}: non-finite TDOA")
        entries[idx] = value
    if sorted(entries) != list(range(len(entries))):
        raise InvalidInputError(f"{path}: microphone indices must be 0..M-1, got {sorted(entries)}")
    tdoas = np.array([entries[m] for m in range(len(entries))])
    if num_mics is not None and len(tdoas) != num_mics:
        raise InvalidInputError(f"{path}: {len(tdoas)} entries for {num_mics} microphones")
    if not 0 <= ref_index < len(tdoas):
        raise InvalidInputError(f"{path}: no line for reference microphone {ref_index}")
    if tdoas[ref_index] != 0.0:
        raise InvalidInputError(f"{path}: reference microphone {ref_index} must have TDOA 0, got {tdoas[ref_index]}")
    return tdoas


def _fmt(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def _floats(section, key, path, count=None):
    try:
        values = [float(v) for v in section[key].split(",")]
    except KeyError:
        raise InvalidConfigError(f"{path}: missing key {key!r}") from None
    except ValueError:
        raise InvalidConfigError(f"{path}: {key} must be comma-separated numbers") from None
    if count is not None and len(values) != count:
        raise InvalidConfigError(f"{path}: {key} needs {count} values, got {len(values)}")
    return values


def scenario_to_config(scenario: Scenario) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    sec = {
        "room_dims_m": _fmt(scenario.room_dims),
        "source_position_m": _fmt(scenario.source_position),
        "t60_ms": repr(scenario.t60 * 1000.0),
        "sample_rate_hz": str(scenario.fs),
        "sound_speed_m_per_s": repr(float(scenario.sound_speed)),
    }
    if scenario.max_order is not None:
        sec["max_reflection_order"] = str(scenario.max_order)
    if scenario.rir_length is not None:
        sec["rir_length_ms"] = repr(scenario.rir_length * 1000.0)
    cp["scenario"] = sec
    cp["microphones"] = {f"mic{m}_position_m": _fmt(p) for m, p in enumerate(scenario.mic_positions)}
    return cp


def scenario_from_config(cp: configparser.ConfigParser, path="<config>") -> Scenario:
    if "scenario" not in cp or "microphones" not in cp:
        raise InvalidConfigError(f"{path}: needs [scenario] and [microphones] sections")
    sec, mics_sec = cp["scenario"], cp["microphones"]
    mics = []
    while f"mic{len(mics)}_position_m" in mics_sec:
        mics.append(tuple(_floats(mics_sec, f"mic{len(mics)}_position_m", path, 3)))
    if not mics or len(mics) != len(mics_sec):
        raise InvalidConfigError(f"{path}: microphones must be numbered mic0_position_m, mic1_position_m, ...")
    try:
        return Scenario(
            room_dims=tuple(_floats(sec, "room_dims_m", path, 3)),
            mic_positions=tuple(mics),
            source_position=tuple(_floats(sec, "source_position_m", path, 3)),
            t60=_floats(sec, "t60_ms", path, 1)[0] / 1000.0,
            fs=sec.getint("sample_rate_hz", 16000),
            sound_speed=sec.getfloat("sound_speed_m_per_s", 343.0),
            max_order=sec.getint("max_reflection_order") if "max_reflection_order" in sec else None,
            rir_length=sec.getfloat("rir_length_ms") / 1000.0 if "rir_length_ms" in sec else None,
        )
    except ValueError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc


def load_scenario(path) -> Scenario:
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc
    return scenario_from_config(cp, path)


def save_scenario(path, scenario: Scenario) -> None:
    cp = scenario_to_config(scenario)

    def write(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            cp.write(fh)

    _atomic_write(path, write)
