"""Weighted prediction error dereverberation with per-microphone prediction delays.

Each subband is processed independently. For subband ``k`` the late
reverberation in the reference channel is predicted from delayed copies of
all channels,

    d(k) = x_ref(k) - X_tau(k) g(k),

and ``g`` and the per-frame variances ``lambda`` are found by alternating a
weighted least-squares solve with the variance update
``lambda = max(|d|^(2-p), eps)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .delay_comp import CompensationParams, compensate
from .errors import InvalidConfigError, InvalidInputError, NumericalFailureError
from .stft import StftTensor

log = logging.getLogger(__name__)

DELAY_MODES = ("MI", "MD-INT", "MD-NINT-B2B", "MD-NINT")
_COMPENSATION = {"MD-INT": "integer", "MD-NINT-B2B": "band2band", "MD-NINT": "crossband"}

# relative to trace(X^H D X) / (M * taps); larger values distort the weighted
# solve once some variances approach the floor and the trace is dominated by them
RIDGE_FACTOR = 1e-10


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 8
    delay: int = 2
    sparsity: float = 0.5
    iterations: int = 5
    # relative: the floor in subband k is variance_floor * mean(|x_ref(k)|^(2-p))
    variance_floor: float = 1e-8
    delay_mode: str = "MI"
    compensation: CompensationParams = field(default_factory=CompensationParams)

    def __post_init__(self):
        if self.taps < 1:
            raise InvalidConfigError("taps must be >= 1")
        if self.delay < 1:
            raise InvalidConfigError("prediction delay must be >= 1 frame")
        if self.iterations < 1:
            raise InvalidConfigError("at least one iteration is required")
        if not 0.0 <= self.sparsity < 2.0:
            raise InvalidConfigError("sparsity p must lie in [0, 2)")
        if self.variance_floor <= 0:
            raise InvalidConfigError("variance floor must be positive")
        if self.delay_mode not in DELAY_MODES:
            raise InvalidConfigError(f"delay mode must be one of {DELAY_MODES}, got {self.delay_mode!r}")


@dataclass
class PredictionFilters:
    """Per-subband filters ``g`` (bins, M * taps) and variances ``lam`` (bins, frames).

    ``cost`` holds the objective after initialisation and after every
    iteration, shape (bins, iterations + 1); ``gaussian_cost`` is the same
    trace of ``sum |d|^2 / lam + log(pi lam)``, which equals ``cost`` for
    ``p = 0`` and is only approximately descended for ``p > 0``. ``floor_hit`` flags subbands in
    which the iterations pushed some variance onto the floor although the
    input frame itself lay above it (silent input frames do not count).
    """

    g: np.ndarray
    lam: np.ndarray
    floor: np.ndarray
    cost: np.ndarray
    floor_hit: np.ndarray
    gaussian_cost: np.ndarray


def compensation_delays(tdoas, ref: int = 0) -> np.ndarray:
    """Delays (samples) that align each microphone with the reference.

    ``tdoas[m]`` is how much later microphone ``m`` hears the source than the
    reference, so its prediction signal must be advanced by that amount.
    """
    tdoas = np.asarray(tdoas, dtype=float)
    return -(tdoas - tdoas[ref])


def delayed_signals(tensor: StftTensor, tdoas, config: WpeConfig, ref: int = 0) -> np.ndarray:
    """Prediction inputs ``x_m(k, n - tau_m)`` for every channel, shape (M, bins, frames)."""
    M = tensor.num_channels
    if config.delay_mode == "MI":
        return np.stack([_shift(tensor.channel(m), config.delay) for m in range(M)])
    if tdoas is None:
        raise InvalidInputError(f"delay mode {config.delay_mode} needs per-microphone TDOAs")
    tdoas = np.asarray(tdoas, dtype=float)
    if tdoas.shape != (M,):
        raise InvalidInputError(f"expected {M} TDOAs, got shape {tdoas.shape}")
    mode = _COMPENSATION[config.delay_mode]
    delays = compensation_delays(tdoas, ref)
    return np.stack([
        compensate(tensor, m, delays[m], mode, base_delay=config.delay, params=config.compensation)
        for m in range(M)
    ])


def _shift(x: np.ndarray, delay: int) -> np.ndarray:
    N = x.shape[-1]
    y = np.zeros_like(x)
    if delay >= N or delay <= -N:
        return y
    if delay >= 0:
        y[..., delay:] = x[..., :N - delay]
    else:
        y[..., :N + delay] = x[..., -delay:]
    return y


def build_design_matrix(delayed: np.ndarray, taps: int) -> np.ndarray:
    """Stack delayed channel signals into the multichannel convolution matrix.

    Args:
        delayed: ``(M, ..., N)`` prediction inputs ``x_m(n - tau_m)``.
        taps: filter length per channel.

    Returns:
        ``(..., N, M * taps)`` array; column ``m * taps + l`` holds
        ``x_m(n - tau_m - l)`` (channel-major, lag-minor).
    """
    delayed = np.asarray(delayed)
    M, N = delayed.shape[0], delayed.shape[-1]
    if N < M * taps:
        warnings.warn(
            f"{N} frames for {M * taps} prediction coefficients; the system is "
            "under-determined and relies on the ridge term",
            stacklevel=2,
        )
    cols = [_shift(delayed[m], l) for m in range(M) for l in range(taps)]
    return np.stack(cols, axis=-1)


def update_filters(
    X: np.ndarray,
    x_ref: np.ndarray,
    lam: np.ndarray,
    return_ridge: bool = False,
    ridge_factor: float = RIDGE_FACTOR,
):
    """Weighted least-squares prediction filter.

    Solves ``(X^H D X + ridge I) g = X^H D x_ref`` with ``D = diag(1 / lam)``
    and ``ridge = ridge_factor * trace(X^H D X) / (M * taps)``. Leading axes
    of the inputs are batch (subband) axes. ``ridge_factor = 0`` gives the
    plain weighted least-squares solution for full-rank designs.
    """
    w = 1.0 / lam
    Xw = X * w[..., None]
    XwH = np.swapaxes(Xw, -1, -2).conj()
    R = XwH @ X
    r = (XwH @ x_ref[..., None])[..., 0]
    D = X.shape[-1]
    trace = np.einsum("...dd->...", R).real
    ridge = ridge_factor * trace / D
    # an all-zero design leaves nothing to predict; any positive ridge gives g = 0
    ridge = np.where(trace > 0, ridge, 1.0)
    R = R + ridge[..., None, None] * np.eye(D)
    try:
        g = np.linalg.solve(R, r[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"weighted normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(g)):
        bad = np.argwhere(~np.all(np.isfinite(g), axis=-1))
        raise NumericalFailureError(f"non-finite prediction filter in subband(s) {bad.ravel().tolist()}")
    return (g, ridge) if return_ridge else g


def update_variances(d_hat: np.ndarray, p: float, eps) -> np.ndarray:
    """``lambda = max(|d|^(2 - p), eps)`` element-wise.

    >>> update_variances(np.array([2.0, 0.0]), 0.5, 1e-3)
    array([2.82842712e+00, 1.00000000e-03])
    """
    if not 0.0 <= p < 2.0:
        raise InvalidConfigError("sparsity p must lie in [0, 2)")
    return np.maximum(np.abs(d_hat) ** (2.0 - p), eps)


def wpe_cost(d: np.ndarray, lam: np.ndarray, p: float) -> np.ndarray:
    """Negative log-likelihood summed over frames (last axis).

    For ``p = 0`` this is ``sum |d|^2 / lam + log(pi lam)``. For ``p > 0`` the
    log term is replaced by the hyperprior penalty
    ``(2 - p) / p * (lam^(p / (2 - p)) - 1) + log(pi)``, whose minimiser over
    ``lam`` is ``|d|^(2 - p)`` and which tends to ``log(pi lam)`` as ``p -> 0``.
    Alternating exact minimisation therefore never increases this cost.
    """
    fit = np.abs(d) ** 2 / lam
    if p == 0:
        penalty = np.log(np.pi * lam)
    else:
        a = p / (2.0 - p)
        penalty = (np.power(lam, a) - 1.0) / a + np.log(np.pi)
    return np.sum(fit + penalty, axis=-1)


def run_wpe(tensor: StftTensor, tdoas=None, config: WpeConfig = WpeConfig(), ref: int = 0):
    """Dereverberate the reference channel.

    Args:
        tensor: multichannel STFT, shape (M, bins, frames).
        tdoas: per-microphone TDOA in samples (positive when the microphone
            hears the source after the reference); ignored in ``MI`` mode.
        config: WPE parameters and delay mode.
        ref: reference channel index.

    Returns:
        ``(StftTensor, PredictionFilters)``; the tensor holds the single
        dereverberated channel.
    """
    if config.delay_mode == "MI" and tdoas is not None:
        log.debug("MI mode ignores the supplied TDOAs")
    M = tensor.num_channels
    if not 0 <= ref < M:
        raise InvalidInputError(f"reference channel {ref} out of range for {M} channels")
    p = config.sparsity
    x_ref = tensor.channel(ref)
    delayed = delayed_signals(tensor, None if config.delay_mode == "MI" else tdoas, config, ref)
    X = build_design_matrix(delayed, config.taps)  # (bins, N, M * taps)

    mag = np.abs(x_ref) ** (2.0 - p)
    floor = config.variance_floor * np.mean(mag, axis=-1, keepdims=True)
    floor = np.maximum(floor, np.finfo(float).tiny)
    lam = np.maximum(mag, floor)
    floor_hit = np.zeros(x_ref.shape[0], dtype=bool)
    costs = [wpe_cost(x_ref, lam, p)]
    gaussian = [wpe_cost(x_ref, lam, 0.0)]
    d = x_ref
    g = None
    for _ in range(config.iterations):
        try:
            g = update_filters(X, x_ref, lam)
        except NumericalFailureError as exc:
            raise NumericalFailureError(f"WPE filter update failed: {exc}") from exc
        d = x_ref - (X @ g[..., None])[..., 0]
        lam = update_variances(d, p, floor)
        floor_hit |= np.any((np.abs(d) ** (2.0 - p) < floor) & (mag >= floor), axis=-1)
        costs.append(wpe_cost(d, lam, p))
        gaussian.append(wpe_cost(d, lam, 0.0))

    out = tensor.with_data(d[None])
    filters = PredictionFilters(g, lam, floor[..., 0], np.stack(costs, axis=-1), floor_hit,
                                np.stack(gaussian, axis=-1))
    return out, filters
