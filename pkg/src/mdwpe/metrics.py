"""Frequency-weighted segmental SNR and LPC cepstral distance.

Both measures compare a test signal against a time-aligned reference in
25 ms frames with 75 % overlap and average over frames where the reference
is active (frame energy within ``ACTIVITY_DB`` of the loudest frame).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

FRAME_MS = 25.0
OVERLAP = 0.75
NUM_BANDS = 23
WEIGHT_EXPONENT = 0.2
FWSSNR_CLAMP = (-10.0, 35.0)
CD_CLAMP = (0.0, 10.0)
LPC_ORDER = 10
ACTIVITY_DB = -60.0


def constants() -> dict:
    """Every constant the metrics depend on, for reports."""
    return {
        "frame_ms": FRAME_MS,
        "overlap": OVERLAP,
        "num_bands": NUM_BANDS,
        "weight_exponent": WEIGHT_EXPONENT,
        "fwssnr_min_db": FWSSNR_CLAMP[0],
        "fwssnr_max_db": FWSSNR_CLAMP[1],
        "cd_min_db": CD_CLAMP[0],
        "cd_max_db": CD_CLAMP[1],
        "lpc_order": LPC_ORDER,
        "activity_db": ACTIVITY_DB,
    }


@dataclass
class MetricReport:
    fwssnr: float
    cd: float
    fwssnr_frames: np.ndarray | None = None
    cd_frames: np.ndarray | None = None
    constants: dict = field(default_factory=constants)


def _frames(x: np.ndarray, fs: int) -> np.ndarray:
    size = int(round(FRAME_MS * 1e-3 * fs))
    hop = int(round(size * (1 - OVERLAP)))
    if x.size < size:
        raise InvalidInputError(f"signal shorter than one {FRAME_MS} ms frame")
    return np.lib.stride_tricks.sliding_window_view(x, size)[::hop]


def _check(reference, test):
    ref = np.asarray(reference, dtype=float)
    tst = np.asarray(test, dtype=float)
    if ref.shape != tst.shape or ref.ndim != 1:
        raise InvalidInputError(f"reference and test must be 1-D with equal length, got {ref.shape} and {tst.shape}")
    return ref, tst


def _active(frames: np.ndarray) -> np.ndarray:
    energy = np.sum(frames ** 2, axis=1)
    peak = energy.max()
    if peak == 0:
        return np.zeros(len(energy), dtype=bool)
    return energy > peak * 10 ** (ACTIVITY_DB / 10)


def mel_filterbank(num_bands: int, n_fft: int, fs: int) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale, shape (bands, n_fft // 2 + 1)."""
    def hz2mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel2hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    edges = mel2hz(np.linspace(0.0, hz2mel(fs / 2), num_bands + 2))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / fs)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def _band_energies(frames: np.ndarray, fb: np.ndarray, n_fft: int) -> np.ndarray:
    spec = np.abs(np.fft.rfft(frames * np.hanning(frames.shape[1]), n_fft, axis=1)) ** 2
    return spec @ fb.T


def fwssnr_frames(reference, test, fs: int) -> np.ndarray:
    ref, tst = _check(reference, test)
    fr, ft = _frames(ref, fs), _frames(tst, fs)
    n_fft = 1 << int(np.ceil(np.log2(fr.shape[1])))
    fb = mel_filterbank(NUM_BANDS, n_fft, fs)
    er = _band_energies(fr, fb, n_fft)
    et = _band_energies(ft, fb, n_fft)
    diff = (np.sqrt(er) - np.sqrt(et)) ** 2
    tiny = np.finfo(float).tiny
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        snr = 10 * np.log10(np.maximum(er, tiny) / np.maximum(diff, tiny))
    snr = np.clip(snr, *FWSSNR_CLAMP)
    w = er ** WEIGHT_EXPONENT
    wsum = w.sum(axis=1)
    values = np.where(wsum > 0, (w * snr).sum(axis=1) / np.where(wsum > 0, wsum, 1.0), np.nan)
    values[~_active(fr)] = np.nan
    return values


def fwssnr(reference, test, fs: int) -> float:
    """Frequency-weighted segmental SNR (dB) of ``test`` against ``reference``.

    Per frame, the SNR of each mel band compares the band energies of the
    two signals, is clamped to [-10, 35] dB and weighted by the reference
    band energy raised to 0.2.
    """
    return float(np.nanmean(fwssnr_frames(reference, test, fs)))


def levinson(r: np.ndarray, order: int):
    """Levinson-Durbin recursion on autocorrelation ``r``.

    Returns the prediction-error filter ``[1, a_1, .., a_p]``, the final
    error power and the reflection coefficients.
    """
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    refl = np.zeros(order)
    for i in range(1, order + 1):
        if err <= 0:
            raise np.linalg.LinAlgError("non-positive prediction error")
        k = -(r[i] + np.dot(a[1:i], r[i - 1:0:-1])) / err
        refl[i - 1] = k
        a[1:i] = a[1:i] + k * a[i - 1:0:-1]
        a[i] = k
        err *= 1.0 - k * k
    return a, err, refl


def lpc_cepstrum(a: np.ndarray, n_ceps: int) -> np.ndarray:
    """Cepstrum ``c_1..c_n`` of the all-pole model ``1 / A(z)``."""
    p = len(a) - 1
    c = np.zeros(n_ceps + 1)
    for n in range(1, n_ceps + 1):
        acc = -a[n] if n <= p else 0.0
        for k in range(max(1, n - p), n):
            acc -= (k / n) * c[k] * a[n - k]
        c[n] = acc
    return c[1:]


def _frame_cepstra(frames: np.ndarray):
    window = np.hamming(frames.shape[1])
    ceps = np.full((len(frames), LPC_ORDER), np.nan)
    for i, f in enumerate(frames):
        fw = f * window
        r = np.correlate(fw, fw, "full")[len(fw) - 1:len(fw) + LPC_ORDER]
        if r[0] <= 0:
            continue
        try:
            a, _, refl = levinson(r, LPC_ORDER)
        except np.linalg.LinAlgError:
            continue
        if np.any(np.abs(refl) >= 1):
            continue
        ceps[i] = lpc_cepstrum(a, LPC_ORDER)
    return ceps


def cepstral_distance_frames(reference, test, fs: int) -> np.ndarray:
    ref, tst = _check(reference, test)
    fr, ft = _frames(ref, fs), _frames(tst, fs)
    diff = _frame_cepstra(fr) - _frame_cepstra(ft)
    cd = 10.0 / np.log(10.0) * np.sqrt(2.0 * np.sum(diff ** 2, axis=1))
    cd = np.clip(cd, *CD_CLAMP)
    cd[~_active(fr)] = np.nan
    return cd


def cepstral_distance(reference, test, fs: int) -> float:
    """Mean LPC cepstral distance (dB) over active frames; ``c_0`` is excluded."""
    return float(np.nanmean(cepstral_distance_frames(reference, test, fs)))


_METRICS = {"fwssnr": (fwssnr, 1.0), "cd": (cepstral_distance, -1.0)}


def improvement(metric: str, reference, processed, unprocessed, fs: int) -> float:
    """Gain of ``processed`` over ``unprocessed``; positive is better for both metrics."""
    try:
        fn, sign = _METRICS[metric]
    except KeyError:
        raise InvalidInputError(f"unknown metric {metric!r}; choose from {sorted(_METRICS)}") from None
    return sign * (fn(reference, processed, fs) - fn(reference, unprocessed, fs))


def evaluate(reference, test, fs: int) -> MetricReport:
    fw = fwssnr_frames(reference, test, fs)
    cd = cepstral_distance_frames(reference, test, fs)
    return MetricReport(float(np.nanmean(fw)), float(np.nanmean(cd)), fw, cd)
