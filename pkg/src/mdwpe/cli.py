"""Command-line interface: simulate, tdoa, dereverb, evaluate, experiment."""

from __future__ import annotations

import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .delay_comp import CompensationParams
from .errors import MdwpeError
from .experiment import ExperimentSpec, default_taps, dereverberate, run_experiment
from .io import _atomic_write, load_scenario, read_tdoa_file, read_wav, save_scenario, write_tdoa_file, write_wav
from .metrics import constants, cepstral_distance, fwssnr
from .room import desk_scenario, oracle_tdoas, render_scene
from .signals import synthetic_speech
from .stft import AnalysisConfig
from .tdoa import estimate_all_tdoas
from .wpe import WpeConfig

log = logging.getLogger("mdwpe")

MODE_NAMES = {"mi": "MI", "md-int": "MD-INT", "md-nint-b2b": "MD-NINT-B2B", "md-nint": "MD-NINT"}


def _fail(exc: Exception):
    raise click.ClickException(str(exc)) from exc


def _load_speech(speech, seconds, seed, fs):
    if speech is None:
        return synthetic_speech(seconds, fs, seed)
    audio, rate = read_wav(speech)
    if rate != fs:
        raise click.ClickException(f"{speech}: sampled at {rate} Hz, scenario expects {fs} Hz")
    return audio[0]


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more detail.")
def main(verbose):
    """Multichannel dereverberation with microphone-dependent prediction delays."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Scenario INI file (default: the desk scenario).")
@click.option("--position", default=0, show_default=True, help="Desk source position index when no config is given.")
@click.option("--t60-ms", type=float, help="Override the reverberation time.")
@click.option("--speech", type=click.Path(exists=True, dir_okay=False), help="Dry mono speech WAV.")
@click.option("--seconds", default=10.0, show_default=True, help="Length of synthetic speech if --speech is absent.")
@click.option("--seed", default=0, show_default=True, help="Seed of the synthetic speech.")
@click.option("--ref-mic", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def simulate(config_path, position, t60_ms, speech, seconds, seed, ref_mic, out_dir):
    """Render a reverberant multichannel scene.

    Writes mics.wav, reference.wav (direct path at the reference microphone),
    rirs.wav, tdoa_oracle.txt and scenario.ini to OUT.
    """
    try:
        if config_path:
            scenario = load_scenario(config_path)
        else:
            scenario = desk_scenario(0.5, position)
        if t60_ms is not None:
            scenario = replace(scenario, t60=t60_ms / 1000.0)
        dry = _load_speech(speech, seconds, seed, scenario.fs)
        scene = render_scene(scenario, dry, ref_index=ref_mic)
        tdoas = oracle_tdoas(scenario, ref_mic)
        out = Path(out_dir)
        write_wav(out / "mics.wav", scene.audio, scenario.fs)
        write_wav(out / "reference.wav", scene.reference, scenario.fs)
        write_wav(out / "rirs.wav", np.stack(scene.rirs), scenario.fs)
        write_tdoa_file(out / "tdoa_oracle.txt", tdoas)
        save_scenario(out / "scenario.ini", scenario)
    except MdwpeError as exc:
        _fail(exc)
    click.echo(f"wrote {scene.audio.shape[0]}-channel scene ({scene.audio.shape[1]} samples) to {out}")


@main.command()
@click.argument("wav", type=click.Path(exists=True, dir_okay=False))
@click.option("--ref-mic", default=0, show_default=True)
@click.option("--frame", default=2048, show_default=True, help="GCC-PHAT frame size in samples.")
@click.option("--shift", default=1024, show_default=True, help="GCC-PHAT frame shift in samples.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="TDOA file (default: stdout).")
def tdoa(wav, ref_mic, frame, shift, out_path):
    """Estimate per-microphone TDOAs of a multichannel WAV with GCC-PHAT."""
    try:
        audio, _ = read_wav(wav)
        est = estimate_all_tdoas(audio, ref_mic, frame, shift)
        values = np.array([e.tdoa for e in est])
        if out_path:
            write_tdoa_file(out_path, values)
        else:
            for m, v in enumerate(values):
                click.echo(f"{m}\t{float(v)!r}")
    except MdwpeError as exc:
        _fail(exc)


@main.command()
@click.argument("wav", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(list(MODE_NAMES)), default="md-nint", show_default=True)
@click.option("--tdoa-file", type=click.Path(exists=True, dir_okay=False))
@click.option("--estimate-tdoa", is_flag=True, help="Estimate TDOAs with GCC-PHAT instead of reading a file.")
@click.option("--taps", type=int, help="Prediction filter length in frames (default: keyed to --t60-ms).")
@click.option("--t60-ms", type=float, default=500.0, show_default=True, help="Only used to pick the default --taps.")
@click.option("--delay", default=2, show_default=True, help="Prediction delay in frames.")
@click.option("--sparsity", default=0.5, show_default=True)
@click.option("--iters", default=5, show_default=True)
@click.option("--crossbands", default=4, show_default=True)
@click.option("--acausal", default=2, show_default=True)
@click.option("--causal", default=2, show_default=True)
@click.option("--frame-size", default=1024, show_default=True)
@click.option("--frame-shift", default=256, show_default=True)
@click.option("--ref-mic", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def dereverb(wav, mode, tdoa_file, estimate_tdoa, taps, t60_ms, delay, sparsity, iters, crossbands, acausal, causal,
             frame_size, frame_shift, ref_mic, out_path):
    """Dereverberate the reference channel of a multichannel WAV."""
    delay_mode = MODE_NAMES[mode]
    if tdoa_file and estimate_tdoa:
        raise click.UsageError("--tdoa-file and --estimate-tdoa are mutually exclusive")
    try:
        audio, fs = read_wav(wav)
        tdoas = None
        if delay_mode == "MI":
            if tdoa_file or estimate_tdoa:
                log.warning("MI mode uses one prediction delay for all microphones; the TDOAs are ignored")
        elif tdoa_file:
            tdoas = read_tdoa_file(tdoa_file, audio.shape[0], ref_mic)
        elif estimate_tdoa:
            tdoas = np.array([e.tdoa for e in estimate_all_tdoas(audio, ref_mic, 2 * frame_size, frame_size)])
        else:
            raise click.UsageError(f"mode {mode} needs --tdoa-file or --estimate-tdoa")
        config = WpeConfig(
            taps=taps if taps is not None else default_taps(t60_ms),
            delay=delay,
            sparsity=sparsity,
            iterations=iters,
            delay_mode=delay_mode,
            compensation=CompensationParams(crossbands, acausal, causal),
        )
        y = dereverberate(audio, tdoas, config, AnalysisConfig(frame_size, frame_shift, fs), ref_mic)
        write_wav(out_path, y, fs)
    except MdwpeError as exc:
        _fail(exc)
    click.echo(f"wrote {out_path}")


def _mono(path, label):
    audio, fs = read_wav(path)
    if audio.shape[0] != 1:
        raise click.ClickException(f"{label} {path} must be mono, has {audio.shape[0]} channels")
    return audio[0], fs


@main.command()
@click.option("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--processed", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--unprocessed", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Also write the report as CSV.")
def evaluate(reference, processed, unprocessed, csv_path):
    """Score processed and unprocessed signals against a time-aligned reference."""
    try:
        ref, fs = _mono(reference, "reference")
        proc, fs_p = _mono(processed, "processed")
        unproc, fs_u = _mono(unprocessed, "unprocessed")
        if len({fs, fs_p, fs_u}) != 1:
            raise click.ClickException("all three files must share one sample rate")
        fw_p, fw_u = fwssnr(ref, proc, fs), fwssnr(ref, unproc, fs)
        cd_p, cd_u = cepstral_distance(ref, proc, fs), cepstral_distance(ref, unproc, fs)
    except MdwpeError as exc:
        _fail(exc)
    rows = [
        ("fwssnr_db", fw_u, fw_p, fw_p - fw_u),
        ("cd_db", cd_u, cd_p, cd_u - cd_p),
    ]
    click.echo(f"{'metric':<10} {'unprocessed':>12} {'processed':>12} {'improvement':>12}")
    for name, u, p, d in rows:
        click.echo(f"{name:<10} {u:12.4f} {p:12.4f} {d:12.4f}")
    click.echo("constants: " + ", ".join(f"{k}={v}" for k, v in constants().items()))
    if csv_path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "unprocessed", "processed", "improvement"])
        w.writerows([[n, f"{u:.6f}", f"{p:.6f}", f"{d:.6f}"] for n, u, p, d in rows])
        w.writerows([[f"constant:{k}", v, "", ""] for k, v in constants().items()])
        text = buf.getvalue()
        _atomic_write(csv_path, lambda tmp: Path(tmp).write_text(text, encoding="utf-8"))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Experiment INI file (default: the desk experiment).")
@click.option("--mode", "modes", multiple=True, type=click.Choice(list(MODE_NAMES)), help="Repeatable.")
@click.option("--tdoa", "tdoa_sources", multiple=True, type=click.Choice(["oracle", "estimated"]), help="Repeatable.")
@click.option("--t60-ms", "t60s", multiple=True, type=float, help="Repeatable.")
@click.option("--positions", type=int, help="Use only the first N source positions.")
@click.option("--speech", type=click.Path(exists=True, dir_okay=False))
@click.option("--seconds", type=float)
@click.option("--seed", type=int)
@click.option("--taps", type=int)
@click.option("--crossbands", type=int)
@click.option("--acausal", type=int)
@click.option("--causal", type=int)
@click.option("--out", "out_dir", type=click.Path(file_okay=False))
def experiment(config_path, modes, tdoa_sources, t60s, positions, speech, seconds, seed, taps, crossbands, acausal,
               causal, out_dir):
    """Compare the delay modes over all source positions and write result tables."""
    try:
        spec = ExperimentSpec.load(config_path) if config_path else ExperimentSpec()
        overrides = {
            "modes": tuple(MODE_NAMES[m] for m in modes) or None,
            "tdoa_sources": tuple(tdoa_sources) or None,
            "t60s_ms": tuple(t60s) or None,
            "source_positions": spec.source_positions[:positions] if positions else None,
            "speech_path": speech,
            "speech_seconds": seconds,
            "seed": seed,
            "taps": taps,
            "crossbands": crossbands,
            "acausal_taps": acausal,
            "causal_taps": causal,
            "output_dir": out_dir,
        }
        spec = replace(spec, **{k: v for k, v in overrides.items() if v is not None})

        def progress(cell):
            status = f"error: {cell.error}" if cell.error else f"dFWSSNR {cell.delta_fwssnr:+.2f} dB  dCD {cell.delta_cd:+.2f} dB"
            click.echo(f"t60={cell.t60_ms:g} ms  position {cell.position}  {cell.mode:<12} {cell.tdoa_source:<9} {status}",
                       err=True)

        table = run_experiment(spec, progress)
        out = Path(spec.output_dir)
        table.write(out)
        text = spec.to_ini()
        _atomic_write(out / "experiment.ini", lambda tmp: Path(tmp).write_text(text, encoding="utf-8"))
    except MdwpeError as exc:
        _fail(exc)
    click.echo(table.to_text(), nl=False)
    if any(c.error for c in table.cells):
        sys.exit(1)


if __name__ == "__main__":
    main()
