"""GCC-PHAT time-difference-of-arrival estimation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

log = logging.getLogger(__name__)

PHAT_FLOOR = 1e-12


@dataclass(frozen=True)
class TdoaEstimate:
    tdoa: float  # samples; positive when x_m lags x_ref
    confidence: float  # peak over mean absolute GCC value


def gcc_phat_function(x_ref, x_m, frame: int = 2048, shift: int = 1024) -> np.ndarray:
    """Frame-averaged GCC-PHAT, indexed by lag ``-frame/2 + 1 .. frame/2``.

    Returns an array of length ``frame`` whose element ``i`` holds lag
    ``i - frame // 2 + 1``.
    """
    a = np.asarray(x_ref, dtype=float)
    b = np.asarray(x_m, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("signals must be 1-D and of equal length")
    if a.size < frame:
        raise InvalidInputError(f"signals ({a.size} samples) shorter than one frame ({frame})")
    starts = range(0, a.size - frame + 1, shift)
    window = np.hanning(frame)
    acc = np.zeros(frame)
    used = 0
    for s in starts:
        A = np.fft.rfft(window * a[s:s + frame], 2 * frame)
        B = np.fft.rfft(window * b[s:s + frame], 2 * frame)
        cross = B * np.conj(A)
        mag = np.abs(cross)
        peak = mag.max()
        if peak == 0:
            continue
        cross /= np.maximum(mag, PHAT_FLOOR * peak)
        cc = np.fft.irfft(cross, 2 * frame)
        acc += np.concatenate([cc[-(frame // 2 - 1):], cc[:frame // 2 + 1]])
        used += 1
    if used == 0:
        raise InvalidInputError("every frame has zero energy")
    return acc / used


def gcc_phat_pair(x_ref, x_m, frame: int = 2048, shift: int = 1024) -> TdoaEstimate:
    """TDOA of ``x_m`` relative to ``x_ref`` with parabolic sub-sample refinement."""
    cc = gcc_phat_function(x_ref, x_m, frame, shift)
    i = int(np.argmax(cc))
    offset = 0.0
    if 0 < i < len(cc) - 1:
        y0, y1, y2 = cc[i - 1], cc[i], cc[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            offset = 0.5 * (y0 - y2) / denom
    lag = i - frame // 2 + 1 + offset
    mean_abs = np.mean(np.abs(cc))
    confidence = float(cc[i] / mean_abs) if mean_abs > 0 else float("inf")
    return TdoaEstimate(float(lag), max(confidence, 1.0))


def estimate_all_tdoas(audio, ref_index: int = 0, frame: int = 2048, shift: int = 1024) -> list[TdoaEstimate]:
    """GCC-PHAT TDOA of every channel of ``audio`` (M, T) relative to ``ref_index``."""
    audio = np.asarray(audio, dtype=float)
    if audio.ndim != 2 or audio.shape[0] < 2:
        raise InvalidInputError("need >= 2 channels for TDOA estimation")
    M = audio.shape[0]
    if not 0 <= ref_index < M:
        raise InvalidInputError(f"reference index {ref_index} out of range for {M} channels")
    out = []
    for m in range(M):
        if m == ref_index:
            out.append(TdoaEstimate(0.0, float("inf")))
            continue
        try:
            est = gcc_phat_pair(audio[ref_index], audio[m], frame, shift)
        except InvalidInputError as exc:
            raise InvalidInputError(f"microphone {m}: {exc}") from exc
        log.debug("mic %d: tdoa %.2f samples (confidence %.1f)", m, est.tdoa, est.confidence)
        out.append(est)
    return out
