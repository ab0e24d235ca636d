"""End-to-end pipeline and the multi-position four-mode comparison.

For every reverberation time and source position a scene is rendered, the
TDOAs are taken from the geometry or estimated with GCC-PHAT, every delay
mode is run and the output is scored against the direct-path reference.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .delay_comp import CompensationParams
from .errors import InvalidConfigError, InvalidInputError, MdwpeError
from .io import _atomic_write, read_wav, scenario_from_config, scenario_to_config
from .metrics import cepstral_distance, fwssnr
from .room import Scenario, desk_scenario, desk_source_positions, oracle_tdoas, render_scene
from .signals import synthetic_speech
from .stft import AnalysisConfig, analyze, synthesize
from .tdoa import estimate_all_tdoas
from .wpe import DELAY_MODES, WpeConfig, run_wpe

log = logging.getLogger(__name__)

TDOA_SOURCES = ("oracle", "estimated")


def default_taps(t60_ms: float) -> int:
    """Prediction filter length growing with T60: 8, 12, 16 taps at 500, 750, 1000 ms."""
    return max(1, int(round(t60_ms / 62.5)))


def dereverberate(audio, tdoas, config: WpeConfig, analysis: AnalysisConfig = AnalysisConfig(), ref: int = 0):
    """Dereverberate ``audio`` (M, T); returns the enhanced reference channel, length T."""
    audio = np.atleast_2d(np.asarray(audio, dtype=float))
    tensor = analyze(audio, analysis)
    out, _ = run_wpe(tensor, tdoas, config, ref)
    return synthesize(out)[0]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that defines an experiment run; serialisable to an INI file."""

    scenario: Scenario = field(default_factory=desk_scenario)
    source_positions: tuple = field(default_factory=lambda: tuple(desk_source_positions()))
    t60s_ms: tuple = (500.0,)
    modes: tuple = DELAY_MODES
    tdoa_sources: tuple = ("oracle",)
    speech_path: str = ""  # empty: synthetic speech
    speech_seconds: float = 10.0
    seed: int = 0
    taps: int | None = None  # None: keyed to T60
    delay_frames: int = 2
    sparsity: float = 0.5
    iterations: int = 5
    crossbands: int = 4
    acausal_taps: int = 2
    causal_taps: int = 2
    frame_size_samples: int = 1024
    frame_shift_samples: int = 256
    ref_index: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        if not self.modes:
            raise InvalidConfigError("at least one mode is required")
        bad = [m for m in self.modes if m not in DELAY_MODES]
        if bad:
            raise InvalidConfigError(f"unknown mode(s) {bad}; choose from {DELAY_MODES}")
        bad = [s for s in self.tdoa_sources if s not in TDOA_SOURCES]
        if bad or not self.tdoa_sources:
            raise InvalidConfigError(f"tdoa sources must be a non-empty subset of {TDOA_SOURCES}")
        if not self.source_positions or not self.t60s_ms:
            raise InvalidConfigError("need at least one source position and one T60")
        if self.speech_path and not Path(self.speech_path).is_file():
            raise InvalidConfigError(f"speech file {self.speech_path} does not exist")
        if not 0 <= self.ref_index < self.scenario.num_mics:
            raise InvalidConfigError(f"reference microphone {self.ref_index} out of range")
        object.__setattr__(self, "source_positions", tuple(tuple(float(c) for c in p) for p in self.source_positions))
        object.__setattr__(self, "t60s_ms", tuple(float(t) for t in self.t60s_ms))
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "tdoa_sources", tuple(self.tdoa_sources))
        # validates every scene up front, e.g. an unreachable T60
        for t60 in self.t60s_ms:
            for pos in self.source_positions:
                self.scene(t60, pos)

    def scene(self, t60_ms: float, position) -> Scenario:
        return replace(self.scenario, t60=t60_ms / 1000.0, source_position=tuple(position))

    def analysis(self) -> AnalysisConfig:
        return AnalysisConfig(self.frame_size_samples, self.frame_shift_samples, self.scenario.fs)

    def wpe_config(self, mode: str, t60_ms: float) -> WpeConfig:
        return WpeConfig(
            taps=self.taps if self.taps is not None else default_taps(t60_ms),
            delay=self.delay_frames,
            sparsity=self.sparsity,
            iterations=self.iterations,
            delay_mode=mode,
            compensation=CompensationParams(self.crossbands, self.acausal_taps, self.causal_taps),
        )

    def load_speech(self) -> np.ndarray:
        if not self.speech_path:
            return synthetic_speech(self.speech_seconds, self.scenario.fs, self.seed)
        audio, fs = read_wav(self.speech_path)
        if fs != self.scenario.fs:
            raise InvalidInputError(f"{self.speech_path}: sampled at {fs} Hz, scenario expects {self.scenario.fs} Hz")
        return audio[0]

    def to_config(self) -> configparser.ConfigParser:
        cp = scenario_to_config(self.scenario)
        cp["experiment"] = {
            "t60s_ms": ", ".join(repr(t) for t in self.t60s_ms),
            "modes": ", ".join(self.modes),
            "tdoa_sources": ", ".join(self.tdoa_sources),
            "speech_path": self.speech_path,
            "speech_seconds_s": repr(self.speech_seconds),
            "seed": str(self.seed),
            "taps_frames": "auto" if self.taps is None else str(self.taps),
            "delay_frames": str(self.delay_frames),
            "sparsity": repr(self.sparsity),
            "iterations": str(self.iterations),
            "crossbands_bins": str(self.crossbands),
            "acausal_taps_frames": str(self.acausal_taps),
            "causal_taps_frames": str(self.causal_taps),
            "frame_size_samples": str(self.frame_size_samples),
            "frame_shift_samples": str(self.frame_shift_samples),
            "ref_index": str(self.ref_index),
            "output_dir": self.output_dir,
        }
        cp["sources"] = {
            f"source{i}_position_m": ", ".join(repr(c) for c in p) for i, p in enumerate(self.source_positions)
        }
        return cp

    def to_ini(self) -> str:
        buf = io.StringIO()
        self.to_config().write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, path="<config>") -> "ExperimentSpec":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise InvalidConfigError(f"{path}: {exc}") from exc
        scenario = scenario_from_config(cp, path)
        ex = cp["experiment"] if "experiment" in cp else {}
        src = cp["sources"] if "sources" in cp else {}
        positions = []
        while f"source{len(positions)}_position_m" in src:
            positions.append(tuple(float(c) for c in src[f"source{len(positions)}_position_m"].split(",")))
        if not positions:
            positions = [scenario.source_position]

        def get(key, conv, default):
            if key not in ex:
                return default
            try:
                return conv(ex[key])
            except ValueError:
                raise InvalidConfigError(f"{path}: bad value for {key}: {ex[key]!r}") from None

        def split(v):
            return tuple(s.strip() for s in v.split(",") if s.strip())

        taps = ex.get("taps_frames", "auto").strip()
        try:
            return cls(
                scenario=scenario,
                source_positions=tuple(positions),
                t60s_ms=get("t60s_ms", lambda v: tuple(float(s) for s in split(v)), (scenario.t60 * 1000.0,)),
                modes=get("modes", split, DELAY_MODES),
                tdoa_sources=get("tdoa_sources", split, ("oracle",)),
                speech_path=ex.get("speech_path", ""),
                speech_seconds=get("speech_seconds_s", float, 10.0),
                seed=get("seed", int, 0),
                taps=None if taps == "auto" else get("taps_frames", int, None),
                delay_frames=get("delay_frames", int, 2),
                sparsity=get("sparsity", float, 0.5),
                iterations=get("iterations", int, 5),
                crossbands=get("crossbands_bins", int, 4),
                acausal_taps=get("acausal_taps_frames", int, 2),
                causal_taps=get("causal_taps_frames", int, 2),
                frame_size_samples=get("frame_size_samples", int, 1024),
                frame_shift_samples=get("frame_shift_samples", int, 256),
                ref_index=get("ref_index", int, 0),
                output_dir=ex.get("output_dir", "results"),
            )
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"{path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidConfigError(f"{path}: {exc}") from exc
        return cls.from_ini(text, path)


@dataclass
class Cell:
    t60_ms: float
    position: int
    mode: str
    tdoa_source: str
    delta_fwssnr: float = float("nan")
    delta_cd: float = float("nan")
    runtime_s: float = 0.0
    error: str = ""


@dataclass
class ResultRow:
    mode: str
    tdoa_source: str
    t60_ms: float
    delta_fwssnr: float
    delta_cd: float
    runtime_s: float
    positions: int
    failures: int


ROW_FIELDS = ("mode", "tdoa_source", "t60_ms", "delta_fwssnr_db", "delta_cd_db", "runtime_s", "positions", "failures")


@dataclass
class ResultTable:
    rows: list
    cells: list

    def row(self, mode: str, tdoa_source: str = "oracle", t60_ms: float | None = None) -> ResultRow:
        for r in self.rows:
            if r.mode == mode and r.tdoa_source == tdoa_source and (t60_ms is None or r.t60_ms == t60_ms):
                return r
        raise KeyError((mode, tdoa_source, t60_ms))

    def _records(self):
        for r in self.rows:
            yield [r.mode, r.tdoa_source, f"{r.t60_ms:g}", f"{r.delta_fwssnr:.4f}", f"{r.delta_cd:.4f}",
                   f"{r.runtime_s:.2f}", str(r.positions), str(r.failures)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        w.writerows(self._records())
        return buf.getvalue()

    def cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = list(asdict(self.cells[0]).keys()) if self.cells else [f.name for f in Cell.__dataclass_fields__.values()]
        w.writerow(names)
        for c in self.cells:
            w.writerow([f"{v:.4f}" if isinstance(v, float) else v for v in asdict(c).values()])
        return buf.getvalue()

    def to_text(self) -> str:
        records = [list(ROW_FIELDS)] + list(self._records())
        widths = [max(len(r[i]) for r in records) for i in range(len(ROW_FIELDS))]
        lines = ["  ".join(v.rjust(w) if i > 1 else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths)))
                 for r in records]
        failed = [c for c in self.cells if c.error]
        lines += [f"FAILED t60={c.t60_ms:g} position={c.position} {c.mode}/{c.tdoa_source}: {c.error}" for c in failed]
        return "\n".join(lines) + "\n"

    def write(self, directory) -> None:
        directory = Path(directory)
        for name, text in (("results.csv", self.to_csv()), ("cells.csv", self.cells_csv()),
                           ("results.txt", self.to_text())):
            _atomic_write(directory / name, lambda tmp, text=text: Path(tmp).write_text(text, encoding="utf-8"))


def _aggregate(cells, spec: ExperimentSpec) -> list:
    rows = []
    for t60 in spec.t60s_ms:
        for source in spec.tdoa_sources:
            for mode in spec.modes:
                group = [c for c in cells if c.t60_ms == t60 and c.tdoa_source == source and c.mode == mode]
                ok = [c for c in group if not c.error]
                mean = (lambda attr: float(np.mean([getattr(c, attr) for c in ok]))) if ok else (lambda attr: float("nan"))
                rows.append(ResultRow(mode, source, t60, mean("delta_fwssnr"), mean("delta_cd"),
                                      float(sum(c.runtime_s for c in group)), len(ok), len(group) - len(ok)))
    return rows


def run_experiment(spec: ExperimentSpec, progress=None) -> ResultTable:
    """Run every (T60, position, TDOA source, mode) cell and average over positions.

    A failing cell is recorded with its error message and left out of the
    means; the row's ``failures`` count reports it.
    """
    speech = spec.load_speech()
    analysis = spec.analysis()
    fs = spec.scenario.fs
    ref = spec.ref_index
    cells = []
    for t60 in spec.t60s_ms:
        for p, position in enumerate(spec.source_positions):
            scenario = spec.scene(t60, position)
            scene = render_scene(scenario, speech, ref_index=ref)
            # the reference passes through the direct path of the reference
            # microphone, so it is already aligned with the microphone signals
            unprocessed = scene.audio[ref]
            base_fw = fwssnr(scene.reference, unprocessed, fs)
            base_cd = cepstral_distance(scene.reference, unprocessed, fs)
            tdoas = {}
            if "oracle" in spec.tdoa_sources:
                tdoas["oracle"] = oracle_tdoas(scenario, ref)
            if "estimated" in spec.tdoa_sources:
                est = estimate_all_tdoas(scene.audio, ref, frame=2 * spec.frame_size_samples,
                                         shift=spec.frame_size_samples)
                tdoas["estimated"] = np.array([e.tdoa for e in est])
            mi_cache = None
            for source in spec.tdoa_sources:
                for mode in spec.modes:
                    cell = Cell(t60, p, mode, source)
                    if mode == "MI" and mi_cache is not None:
                        # MI ignores TDOAs, so every source shares one run
                        cell.delta_fwssnr, cell.delta_cd, cell.runtime_s = mi_cache
                        cells.append(cell)
                        continue
                    start = time.perf_counter()
                    try:
                        y = dereverberate(scene.audio, None if mode == "MI" else tdoas[source],
                                          spec.wpe_config(mode, t60), analysis, ref)
                        cell.delta_fwssnr = fwssnr(scene.reference, y, fs) - base_fw
                        cell.delta_cd = base_cd - cepstral_distance(scene.reference, y, fs)
                    except (MdwpeError, np.linalg.LinAlgError) as exc:
                        cell.error = str(exc)
                        log.error("t60=%g position=%d %s/%s failed: %s", t60, p, mode, source, exc)
                    cell.runtime_s = time.perf_counter() - start
                    if mode == "MI" and not cell.error:
                        mi_cache = (cell.delta_fwssnr, cell.delta_cd, cell.runtime_s)
                    cells.append(cell)
                    if progress is not None:
                        progress(cell)
    return ResultTable(_aggregate(cells, spec), cells)
