"""Short-time Fourier transform with square-root Hann windows.

Frames are laid out on a zero-padded copy of the signal: ``K - L_shift``
zeros are prepended so that the first frame ends ``L_shift`` samples into
the signal, and the tail is padded until every sample is covered by
``K / L_shift`` frames. Synthesis undoes exactly this padding, so an
untouched tensor reconstructs the input to machine precision everywhere.

Spectra are one-sided (``K // 2 + 1`` bins). The phase reference of each
frame is its first sample, i.e. ``X[m, k, n] = sum_t w[t] x[n L + t] e^{-j2pi kt/K}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class AnalysisConfig:
    frame_size: int = 1024
    frame_shift: int = 256
    sample_rate: int = 16000

    def __post_init__(self):
        if self.frame_size <= 0 or self.frame_shift <= 0:
            raise InvalidConfigError("frame size and shift must be positive")
        if self.frame_size % 2:
            raise InvalidConfigError("frame size must be even")
        if self.frame_size % self.frame_shift:
            raise InvalidConfigError("frame size must be a multiple of the frame shift")
        if self.frame_size // self.frame_shift < 2:
            raise InvalidConfigError("overlap factor K / L_shift must be at least 2")

    @property
    def num_bins(self) -> int:
        return self.frame_size // 2 + 1

    @property
    def overlap(self) -> int:
        return self.frame_size // self.frame_shift

    @property
    def cola_constant(self) -> float:
        """Value of ``sum_j w^2[t - j L_shift]`` for the sqrt-Hann window."""
        return self.frame_size / (2.0 * self.frame_shift)


@dataclass
class StftTensor:
    """Complex subband coefficients, shape ``(M, K // 2 + 1, N)``.

    ``signal_length`` records the length of the analysed signal so that
    synthesis can return the same number of samples.
    """

    data: np.ndarray
    config: AnalysisConfig
    signal_length: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise InvalidInputError(f"expected a (M, bins, frames) array, got shape {data.shape}")
        if data.shape[1] != self.config.num_bins:
            raise InvalidInputError(
                f"expected {self.config.num_bins} bins for K={self.config.frame_size}, "
                f"got {data.shape[1]}"
            )
        self.data = data

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_bins(self) -> int:
        return self.data.shape[1]

    @property
    def num_frames(self) -> int:
        return self.data.shape[2]

    def channel(self, m: int) -> np.ndarray:
        if not 0 <= m < self.num_channels:
            raise InvalidInputError(f"channel {m} out of range for {self.num_channels} channels")
        return self.data[m]

    def with_data(self, data: np.ndarray) -> "StftTensor":
        return StftTensor(np.asarray(data), self.config, self.signal_length)


def make_sqrt_hann(K: int) -> np.ndarray:
    """Periodic square-root Hann window of length ``K``.

    >>> make_sqrt_hann(4)
    array([0.        , 0.70710678, 1.        , 0.70710678])
    """
    if K < 2 or K % 2:
        raise InvalidConfigError(f"window length must be even and >= 2, got {K}")
    t = np.arange(K)
    # clip guards against -1e-17 from the cosine at t=0
    return np.sqrt(np.clip(0.5 - 0.5 * np.cos(2 * np.pi * t / K), 0.0, None))


def crossband_windows(config: AnalysisConfig) -> tuple[np.ndarray, np.ndarray]:
    """Analysis and effective synthesis windows of this filter bank.

    The synthesis window folds in the ``1 / (C K)`` factor applied by
    :func:`synthesize` (``C`` the COLA constant, ``K`` the inverse-DFT
    normalisation), so that the pair satisfies the completeness condition
    used by crossband filter design.
    """
    w = make_sqrt_hann(config.frame_size)
    return w, w / (config.cola_constant * config.frame_size)


def _padding(length: int, config: AnalysisConfig) -> tuple[int, int, int]:
    K, L = config.frame_size, config.frame_shift
    front = K - L
    total = length + 2 * front
    total += (-(total - K)) % L
    return front, total - front - length, (total - K) // L + 1


def num_frames_for(length: int, config: AnalysisConfig) -> int:
    return _padding(length, config)[2]


def analyze(signal, config: AnalysisConfig) -> StftTensor:
    """Forward STFT of a real signal.

    Args:
        signal: samples, shape ``(T,)`` or ``(M, T)``.
        config: frame size and shift.

    Returns:
        StftTensor with ``N = (T_padded - K) / L_shift + 1`` frames.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[None]
    if x.ndim != 2 or x.shape[-1] == 0:
        raise InvalidInputError("signal must be a non-empty (T,) or (M, T) array")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("signal contains non-finite samples")
    K, L = config.frame_size, config.frame_shift
    T = x.shape[-1]
    front, back, N = _padding(T, config)
    padded = np.pad(x, ((0, 0), (front, back)))
    frames = np.lib.stride_tricks.sliding_window_view(padded, K, axis=-1)[:, ::L]
    assert frames.shape[1] == N
    spec = np.fft.rfft(frames * make_sqrt_hann(K), axis=-1)
    return StftTensor(np.ascontiguousarray(spec.transpose(0, 2, 1)), config, T)


def synthesize(tensor: StftTensor, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`analyze`.

    Returns an ``(M, T)`` array; ``T`` defaults to the analysed length.
    """
    config = tensor.config
    K, L = config.frame_size, config.frame_shift
    N = tensor.num_frames
    if length is None:
        length = tensor.signal_length
    if length is None:
        length = (N - 1) * L + K - 2 * (K - L)
    front, back, n_expected = _padding(length, config)
    if n_expected != N:
        raise InvalidInputError(
            f"tensor has {N} frames, but a {length}-sample signal yields {n_expected}"
        )
    frames = np.fft.irfft(tensor.data.transpose(0, 2, 1), n=K, axis=-1)
    frames *= make_sqrt_hann(K) / config.cola_constant
    M = tensor.num_channels
    out = np.zeros((M, (N - 1) * L + K))
    # overlap-add in K/L strided passes, each a plain reshape
    for j in range(config.overlap):
        seg = frames[:, j::config.overlap]
        start = j * L
        n_seg = seg.shape[1]
        out[:, start:start + n_seg * K] += seg.reshape(M, -1)
    return out[:, front:front + length]
