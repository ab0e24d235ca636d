"""Shoebox room impulse responses by the image-source method."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .delay_comp import windowed_sinc
from .errors import InvalidConfigError, InvalidInputError

SINC_HALF_LEN = 16  # 32-tap interpolator (33 with the centre tap)


@dataclass(frozen=True)
class Scenario:
    """Room geometry and acoustics for one source position.

    Positions are in metres; ``t60`` in seconds. ``max_order`` limits the
    total number of wall reflections (0 gives an anechoic response); by
    default it is ``ceil(c * t60 / min(room_dims))``. Images arriving after
    the RIR length, which defaults to ``t60``, are dropped as well.
    """

    room_dims: tuple
    mic_positions: tuple
    source_position: tuple
    t60: float
    fs: int = 16000
    sound_speed: float = 343.0
    max_order: int | None = None
    rir_length: float | None = None

    def __post_init__(self):
        room = np.asarray(self.room_dims, dtype=float)
        mics = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        src = np.asarray(self.source_position, dtype=float)
        if room.shape != (3,) or np.any(room <= 0):
            raise InvalidConfigError("room_dims must be three positive lengths")
        if mics.shape[1] != 3 or src.shape != (3,):
            raise InvalidConfigError("positions must be 3-vectors")
        for name, pos in [("source", src[None])] + [(f"mic {i}", m[None]) for i, m in enumerate(mics)]:
            if np.any(pos <= 0) or np.any(pos >= room):
                raise InvalidConfigError(f"{name} at {pos[0].tolist()} is not strictly inside the room")
        if self.t60 <= 0:
            raise InvalidConfigError("t60 must be positive")
        if self.max_order is not None and self.max_order < 0:
            raise InvalidConfigError("max_order must be >= 0")
        if self.rir_length is not None and self.rir_length <= 0:
            raise InvalidConfigError("rir_length must be positive")
        if np.min(np.linalg.norm(mics - src, axis=1)) <= 0:
            raise InvalidConfigError("source coincides with a microphone")
        # normalise containers so that equality and hashing are by value
        object.__setattr__(self, "room_dims", tuple(room.tolist()))
        object.__setattr__(self, "mic_positions", tuple(tuple(m) for m in mics.tolist()))
        object.__setattr__(self, "source_position", tuple(src.tolist()))

    @property
    def num_mics(self) -> int:
        return len(self.mic_positions)

    @property
    def reflection_order(self) -> int:
        if self.max_order is not None:
            return self.max_order
        return int(math.ceil(self.sound_speed * self.t60 / min(self.room_dims)))

    @property
    def rir_samples(self) -> int:
        length = self.t60 if self.rir_length is None else self.rir_length
        return int(math.ceil(length * self.fs))

    def distances(self) -> np.ndarray:
        return np.linalg.norm(np.asarray(self.mic_positions) - np.asarray(self.source_position), axis=1)

    def direct_delays(self) -> np.ndarray:
        """Direct-path propagation delay per microphone, in samples."""
        return self.distances() / self.sound_speed * self.fs

    def with_source(self, position) -> "Scenario":
        return replace(self, source_position=tuple(position))


def sabine_reflection(room_dims, t60: float, sound_speed: float = 343.0) -> float:
    """Wall pressure reflection coefficient giving ``t60`` by Sabine's formula."""
    L = np.asarray(room_dims, dtype=float)
    volume = np.prod(L)
    surface = 2 * (L[0] * L[1] + L[0] * L[2] + L[1] * L[2])
    alpha = 24 * math.log(10) / sound_speed * volume / (surface * t60)
    if alpha > 1:
        raise InvalidConfigError(
            f"T60 of {t60:.3f} s is unreachable in a {L.tolist()} m room (absorption {alpha:.2f} > 1)"
        )
    return math.sqrt(1 - alpha)


def _axis_images(src: float, length: float, n_max: int):
    r = np.arange(-n_max, n_max + 1)
    coord = np.concatenate([src + 2 * r * length, -src + 2 * r * length])
    order = np.concatenate([2 * np.abs(r), np.abs(r - 1) + np.abs(r)])
    return coord, order


def image_sources(scenario: Scenario, mic_index: int):
    """Distances and reflection orders of every image reaching ``mic_index``."""
    mic = np.asarray(scenario.mic_positions[mic_index])
    src = np.asarray(scenario.source_position)
    room = np.asarray(scenario.room_dims)
    max_dist = scenario.rir_samples / scenario.fs * scenario.sound_speed
    axes = []
    for a in range(3):
        n_max = int(math.ceil(max_dist / (2 * room[a]))) + 1
        coord, order = _axis_images(src[a], room[a], n_max)
        keep = np.abs(coord - mic[a]) <= max_dist
        axes.append((coord[keep] - mic[a], order[keep]))
    (dx, ox), (dy, oy), (dz, oz) = axes
    d2 = dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2
    order = ox[:, None, None] + oy[None, :, None] + oz[None, None, :]
    keep = (d2 <= max_dist ** 2) & (order <= scenario.reflection_order)
    return np.sqrt(d2[keep]), order[keep]


def _render_impulses(delays: np.ndarray, gains: np.ndarray, length: int) -> np.ndarray:
    offsets = np.arange(-SINC_HALF_LEN + 1, SINC_HALF_LEN + 1)
    base = np.floor(delays).astype(int)
    idx = base[:, None] + offsets[None, :]
    vals = gains[:, None] * windowed_sinc(idx - delays[:, None], SINC_HALF_LEN)
    ok = (idx >= 0) & (idx < length)
    return np.bincount(idx[ok], weights=vals[ok], minlength=length)[:length]


def simulate_rir(scenario: Scenario, mic_index: int) -> np.ndarray:
    """Room impulse response from the source to microphone ``mic_index``.

    Each image contributes ``beta^order / (4 pi d)`` at delay ``d / c``,
    interpolated with a windowed sinc. ``beta`` is uniform over all walls
    and follows from Sabine's formula.
    """
    if not 0 <= mic_index < scenario.num_mics:
        raise InvalidInputError(f"microphone {mic_index} out of range")
    beta = sabine_reflection(scenario.room_dims, scenario.t60, scenario.sound_speed)
    dist, order = image_sources(scenario, mic_index)
    gains = beta ** order / (4 * np.pi * dist)
    delays = dist / scenario.sound_speed * scenario.fs
    return _render_impulses(delays, gains, scenario.rir_samples)


def direct_path_rir(scenario: Scenario, mic_index: int) -> np.ndarray:
    """Only the direct-path contribution of :func:`simulate_rir`."""
    return simulate_rir(replace(scenario, max_order=0), mic_index)


def oracle_tdoas(scenario: Scenario, ref_index: int = 0) -> np.ndarray:
    """Geometric TDOA of every microphone relative to ``ref_index``, in samples.

    Positive when the microphone is farther from the source than the reference.
    """
    delays = scenario.direct_delays()
    return delays - delays[ref_index]


@dataclass
class RenderedScene:
    audio: np.ndarray  # (M, T) reverberant microphone signals
    reference: np.ndarray  # (T,) direct component at the reference microphone
    rirs: list = field(default_factory=list)


def render_scene(scenario: Scenario, speech, fs: int | None = None, ref_index: int = 0) -> RenderedScene:
    """Convolve dry speech with every RIR; the reference is the direct path at ``ref_index``.

    Outputs keep the length of ``speech``.
    """
    if fs is not None and fs != scenario.fs:
        raise InvalidInputError(f"speech sampled at {fs} Hz, scenario expects {scenario.fs} Hz")
    s = np.asarray(speech, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise InvalidInputError("speech must be a non-empty mono signal")
    T = s.size
    rirs = [simulate_rir(scenario, m) for m in range(scenario.num_mics)]
    audio = np.stack([fftconvolve(s, h)[:T] for h in rirs])
    reference = fftconvolve(s, direct_path_rir(scenario, ref_index))[:T]
    return RenderedScene(audio, reference, rirs)


DESK_ROOM = (8.0, 8.0, 5.0)
# Staggered heights: with the source and every microphone in one horizontal
# plane, floor/ceiling images reach all microphones in lockstep and swamp
# GCC-PHAT with a spurious zero-lag peak.
DESK_MICS = ((1.0, 1.0, 1.2), (7.0, 1.0, 1.4), (1.0, 7.0, 1.6), (7.0, 7.0, 1.8))


def desk_source_positions(count: int = 6) -> list[tuple]:
    """Source positions evenly spaced on a line crossing the room."""
    start, stop = np.array([2.0, 3.0, 1.5]), np.array([6.0, 5.5, 1.5])
    return [tuple(p) for p in np.linspace(start, stop, count).tolist()]


def desk_scenario(t60: float = 0.5, position: int = 0, **kwargs) -> Scenario:
    """Four microphones over the corners of a 6 m square in an 8 x 8 x 5 m room."""
    return Scenario(DESK_ROOM, DESK_MICS, desk_source_positions()[position], t60, **kwargs)


def schroeder_decay(rir: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB, 0 dB at ``t = 0``."""
    energy = np.cumsum(np.asarray(rir, dtype=float)[::-1] ** 2)[::-1]
    with np.errstate(divide="ignore"):
        return 10 * np.log10(energy / energy[0])
