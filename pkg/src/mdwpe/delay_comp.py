"""TDOA compensation in the STFT domain.

A delay of ``D`` samples is split into a whole number of frames plus a
residual ``delta_samp + delta_frac`` of at most half a frame shift. The
frame part is a plain shift of the frame index. The residual is a
time-domain FIR (a shifted windowed sinc) which, in the STFT domain,
becomes a set of crossband filters ``u(k, k', l)`` coupling subband ``k``
to its neighbours ``k'`` over a few frames ``l``. Keeping only ``k' = k``
gives the band-to-band approximation; dropping the FIR altogether leaves
the integer frame delay.

Sign convention: every function here *delays* by the given amount, so
compensating a microphone that hears the source ``TDOA`` samples late
means passing ``-TDOA`` (see :func:`mdwpe.wpe.compensation_delays`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import InvalidConfigError, InvalidInputError
from .stft import AnalysisConfig, StftTensor, analyze, crossband_windows, synthesize

MODES = ("crossband", "band2band", "integer")


@dataclass(frozen=True)
class TdoaDecomposition:
    tdoa: float
    frame_delay: int
    sample_delay: int
    frac_delay: float

    @property
    def residual(self) -> float:
        """Delay left after removing whole frames, ``delta_samp + delta_frac``."""
        return self.sample_delay + self.frac_delay

    @property
    def is_frame_aligned(self) -> bool:
        return self.sample_delay == 0 and self.frac_delay == 0.0


@dataclass(frozen=True)
class FractionalDelayFir:
    taps: np.ndarray
    center_index: int
    total_delay: float

    @property
    def offsets(self) -> np.ndarray:
        """Time index of every tap relative to ``t = 0``."""
        return np.arange(len(self.taps)) - self.center_index


@dataclass(frozen=True)
class CrossbandFilterSet:
    """Filters ``u(k, k + b, l)`` stored as ``filters[k, b + B, l + L_a]``."""

    filters: np.ndarray
    crossbands: int
    acausal: int
    causal: int

    @property
    def band2band(self) -> np.ndarray:
        """The ``b = 0`` slice, shape ``(bins, L_a + L_c + 1)``."""
        return self.filters[:, self.crossbands, :]


def decompose_tdoa(tdoa: float, L_shift: int) -> TdoaDecomposition:
    """Split ``tdoa`` into frame, integer-sample and fractional parts.

    ``frame_delay * L_shift + sample_delay + frac_delay == tdoa`` holds
    exactly in floating point unless ``-1 < tdoa < 0``: there ``frac_delay``
    must equal ``1 + tdoa``, which is rounded to the nearest double, so the
    identity holds to within ``2**-53``.

    >>> decompose_tdoa(400, 256)
    TdoaDecomposition(tdoa=400, frame_delay=2, sample_delay=-112, frac_delay=0.0)
    """
    if L_shift <= 0:
        raise InvalidConfigError("frame shift must be positive")
    if not math.isfinite(tdoa):
        raise InvalidInputError(f"tdoa must be finite, got {tdoa}")
    # np.round would send 1.5 to 2 and 2.5 to 2; use half-up for symmetry
    # with the floor below
    frame = math.floor(tdoa / L_shift + 0.5)
    rest = tdoa - frame * L_shift  # exact: frame * L_shift is a small integer
    samp = math.floor(rest)
    frac = rest - samp
    if frac >= 1.0:
        # only for -2**-54 < rest < 0, where 1 + rest rounds to 1
        samp, frac = samp + 1, 0.0
    return TdoaDecomposition(tdoa, frame, samp, frac)


def windowed_sinc(x: np.ndarray, half_len: int) -> np.ndarray:
    """Hann-windowed sinc evaluated at (possibly fractional) offsets ``x``.

    Zero for ``|x| >= half_len``. Shared with the image-source simulator.
    """
    x = np.asarray(x, dtype=float)
    integer = x == np.round(x)
    win = np.where(np.abs(x) < half_len, 0.5 + 0.5 * np.cos(np.pi * x / half_len), 0.0)
    # np.sinc leaves ~1e-17 at non-zero integers
    return np.where(integer, (x == 0).astype(float), np.sinc(x) * win)


def design_fractional_fir(sample_delay: int, frac_delay: float, half_len: int = 32) -> FractionalDelayFir:
    """FIR delaying by ``sample_delay + frac_delay`` samples.

    Taps span ``sample_delay - half_len .. sample_delay + half_len``; for an
    integer delay they collapse to a unit impulse.
    """
    if not 0.0 <= frac_delay < 1.0:
        raise InvalidInputError(f"fractional delay must lie in [0, 1), got {frac_delay}")
    if half_len < 1:
        raise InvalidConfigError("half_len must be >= 1")
    t = np.arange(-half_len, half_len + 1)
    taps = windowed_sinc(t - frac_delay, half_len)
    # the tap grid is offset from the delay, so the index of t=0 moves with it
    return FractionalDelayFir(taps, half_len - int(sample_delay), sample_delay + frac_delay)


def _window_crosscorrelation(analysis, synthesis, K: int, offsets: np.ndarray) -> np.ndarray:
    """``A[d, n] = sum_t wa[t] ws[t + n] e^{-j 2 pi t d / K}`` for lags ``|n| < K``.

    Returned for ``d = offsets`` (bin differences ``k - k'``), shape
    ``(len(offsets), 2K - 1)`` with lag ``n`` at column ``n + K - 1``.
    """
    lags = np.arange(-(K - 1), K)
    padded = np.concatenate([np.zeros(K - 1), synthesis, np.zeros(K - 1)])
    # prod[n, t] = wa[t] * ws[t + n]
    idx = lags[:, None] + np.arange(K)[None, :] + (K - 1)
    prod = analysis[None, :] * padded[idx]
    spec = np.fft.fft(prod, axis=1)  # spec[n, d] over d mod K
    return spec[:, np.asarray(offsets) % K].T


def compute_crossband_filters(
    fir: FractionalDelayFir,
    analysis_window: np.ndarray,
    synthesis_window: np.ndarray,
    K: int,
    L_shift: int,
    B: int = 4,
    L_a: int = 2,
    L_c: int = 2,
) -> CrossbandFilterSet:
    """STFT-domain representation of the time-domain filter ``fir``.

    Evaluates ``u(k, k', l) = (fir * phi_{k,k'})[l L_shift]`` with
    ``phi_{k,k'}[t] = e^{j 2 pi k' t / K} sum_s wa[s] ws[t + s] e^{-j 2 pi s (k - k') / K}``
    for ``|k - k'| <= B`` and ``-L_a <= l <= L_c``.

    With the windows from :func:`mdwpe.stft.crossband_windows` and
    untruncated support, the filters reproduce time-domain filtering of
    any signal exactly.
    """
    if B < 0 or L_a < 0 or L_c < 0:
        raise InvalidConfigError("B, L_a and L_c must be non-negative")
    if B > K // 2:
        raise InvalidConfigError(f"crossband half-width B={B} exceeds K/2={K // 2}")
    analysis_window = np.asarray(analysis_window, dtype=float)
    synthesis_window = np.asarray(synthesis_window, dtype=float)
    if analysis_window.shape != (K,) or synthesis_window.shape != (K,):
        raise InvalidConfigError(f"windows must have length K={K}")

    b = np.arange(-B, B + 1)
    ells = np.arange(-L_a, L_c + 1)
    nz = np.flatnonzero(fir.taps)
    taps = fir.taps[nz]
    offsets = fir.offsets[nz]
    A = _window_crosscorrelation(analysis_window, synthesis_window, K, -b)

    # lag of phi hit by tap j at frame l: n = l L - t_j
    n = ells[:, None] * L_shift - offsets[None, :]  # (ell, tap)
    inside = np.abs(n) < K
    col = np.where(inside, n + K - 1, 0)
    a = A[:, col] * inside  # (b, ell, tap)

    k = np.arange(K // 2 + 1)
    filters = np.empty((len(k), len(b), len(ells)), dtype=complex)
    for i, bb in enumerate(b):
        k_prime = (k + bb) % K
        phase = np.exp(2j * np.pi * k_prime[:, None, None] * n[None] / K)
        filters[:, i, :] = np.einsum("ket,et->ke", phase, a[i] * taps)
    if 2 * B == K:
        # b = +K/2 and b = -K/2 address the same bin
        filters[:, -1, :] = 0.0
    return CrossbandFilterSet(filters, B, L_a, L_c)


def _full_band(channel: np.ndarray, K: int) -> np.ndarray:
    """Two-sided spectrum ``(K, N)`` from a one-sided ``(K//2 + 1, N)`` channel."""
    mirrored = np.conj(channel[1:K // 2][::-1])
    return np.concatenate([channel, mirrored], axis=0)


def _shift_frames(x: np.ndarray, delay: int) -> np.ndarray:
    """``y[..., n] = x[..., n - delay]``, zero where out of range."""
    N = x.shape[-1]
    y = np.zeros_like(x)
    if abs(delay) >= N:
        return y
    if delay >= 0:
        y[..., delay:] = x[..., :N - delay]
    else:
        y[..., :N + delay] = x[..., -delay:]
    return y


def apply_integer_delay(tensor: StftTensor, m: int, tau_int: int) -> np.ndarray:
    """``x_m(k, n - tau_int)`` with zeros outside the recorded frames."""
    return _shift_frames(tensor.channel(m), int(tau_int))


def apply_crossband(tensor: StftTensor, m: int, filters: CrossbandFilterSet, tau_int: int) -> np.ndarray:
    """Delay channel ``m`` by ``tau_int`` frames plus the residual encoded in ``filters``.

    ``y(k, n) = sum_b sum_l x(k + b, n - l - tau_int) u(k, k + b, l)`` where
    bins outside ``[0, K/2]`` are read from their conjugate mirror.
    """
    x = tensor.channel(m)
    K = tensor.config.frame_size
    B = filters.crossbands
    full = _full_band(x, K)
    bins = x.shape[0]
    out = np.zeros_like(x, dtype=complex)
    k = np.arange(bins)
    for bi, b in enumerate(range(-B, B + 1)):
        src = full[(k + b) % K]
        out += _filter_frames(src, filters.filters[:, bi, :], filters.acausal, tau_int)
    return out


def apply_band2band(tensor: StftTensor, m: int, filters: CrossbandFilterSet, tau_int: int) -> np.ndarray:
    """Like :func:`apply_crossband` with the sum restricted to ``k' = k``."""
    x = tensor.channel(m)
    return _filter_frames(x, filters.band2band, filters.acausal, tau_int)


def _filter_frames(x: np.ndarray, u: np.ndarray, L_a: int, tau_int: int) -> np.ndarray:
    # u[:, j] is the tap at frame lag l = j - L_a
    out = np.zeros(x.shape, dtype=complex)
    for j in range(u.shape[1]):
        out += u[:, j:j + 1] * _shift_frames(x, j - L_a + int(tau_int))
    return out


@dataclass(frozen=True)
class CompensationParams:
    crossbands: int = 4
    acausal: int = 2
    causal: int = 2
    half_len: int = 32


def compensation_filters(
    decomp: TdoaDecomposition, config: AnalysisConfig, params: CompensationParams = CompensationParams()
) -> CrossbandFilterSet:
    fir = design_fractional_fir(decomp.sample_delay, decomp.frac_delay, params.half_len)
    wa, ws = crossband_windows(config)
    return compute_crossband_filters(
        fir, wa, ws, config.frame_size, config.frame_shift,
        params.crossbands, params.acausal, params.causal,
    )


def compensate(
    tensor: StftTensor,
    m: int,
    delay: float,
    mode: str,
    base_delay: int = 0,
    params: CompensationParams = CompensationParams(),
) -> np.ndarray:
    """Delay channel ``m`` by ``base_delay`` frames plus ``delay`` samples.

    ``mode`` selects how the sub-frame residual is realised. When the
    residual is zero the filters reduce to a unit impulse, so every mode
    falls back to the exact integer frame shift.
    """
    if mode not in MODES:
        raise InvalidConfigError(f"unknown compensation mode {mode!r}")
    decomp = decompose_tdoa(delay, tensor.config.frame_shift)
    tau_int = base_delay + decomp.frame_delay
    if mode == "integer" or decomp.is_frame_aligned:
        return apply_integer_delay(tensor, m, tau_int)
    filters = compensation_filters(decomp, tensor.config, params)
    if mode == "crossband":
        return apply_crossband(tensor, m, filters, tau_int)
    return apply_band2band(tensor, m, filters, tau_int)


def fractional_delay_fft(signal: np.ndarray, delay: float, pad: int | None = None) -> np.ndarray:
    """Band-limited delay of a real signal by ``delay`` samples.

    Applies the ideal phase ramp in the DFT domain of a zero-padded copy,
    which is exact for signals with no energy at Nyquist and negligible
    wrap-around (``pad`` defaults to ``len + 2 |delay| + 64``).
    """
    x = np.asarray(signal, dtype=float)
    T = x.shape[-1]
    if pad is None:
        pad = T + 2 * int(math.ceil(abs(delay))) + 64
    n_fft = 1 << int(math.ceil(math.log2(pad)))
    spec = np.fft.rfft(x, n=n_fft, axis=-1)
    f = np.fft.rfftfreq(n_fft)
    spec *= np.exp(-2j * np.pi * f * delay)
    if n_fft % 2 == 0:
        spec[..., -1] = spec[..., -1].real * np.cos(np.pi * delay)
    return np.fft.irfft(spec, n=n_fft, axis=-1)[..., :T]


def verify_compensation(
    signal: np.ndarray,
    tdoa: float,
    mode: str,
    config: AnalysisConfig = AnalysisConfig(),
    params: CompensationParams = CompensationParams(),
) -> float:
    """Relative error (dB) of STFT-domain compensation against a time-domain oracle.

    The oracle delays ``signal`` by the sub-frame residual
    ``tdoa - frame_delay * L_shift`` with :func:`fractional_delay_fft`; the
    STFT path applies ``mode``'s compensation of the same residual and
    synthesises. ``frame_size`` samples at each end are excluded.
    """
    if mode not in MODES:
        raise InvalidConfigError(f"unknown compensation mode {mode!r}")
    x = np.asarray(signal, dtype=float)
    decomp = decompose_tdoa(tdoa, config.frame_shift)
    reference = fractional_delay_fft(x, decomp.residual)
    tensor = analyze(x, config)
    # the frame part is excluded on both paths
    if mode == "integer" or decomp.is_frame_aligned:
        delayed = apply_integer_delay(tensor, 0, 0)
    else:
        filters = compensation_filters(decomp, config, params)
        apply = apply_crossband if mode == "crossband" else apply_band2band
        delayed = apply(tensor, 0, filters, 0)
    out = synthesize(tensor.with_data(delayed[None]))[0]
    K = config.frame_size
    sl = slice(K, len(x) - K)
    err = np.linalg.norm(out[sl] - reference[sl])
    ref = np.linalg.norm(reference[sl])
    return 20 * np.log10(max(err, 1e-300) / ref)


def fir_filter(signal: np.ndarray, fir: FractionalDelayFir) -> np.ndarray:
    """Time-domain convolution with ``fir``, aligned so that ``y[t] = sum_j h_j x[t - o_j]``."""
    x = np.asarray(signal, dtype=float)
    full = fftconvolve(x, fir.taps)
    # tap index i sits at offset i - center_index; full[t + center] corresponds to y[t]
    start = fir.center_index
    out = np.zeros_like(x)
    if start >= 0:
        seg = full[start:start + len(x)]
        out[:len(seg)] = seg
    else:
        seg = full[:len(x) + start]
        out[-start:-start + len(seg)] = seg
    return out
