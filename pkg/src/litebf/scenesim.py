"""Anechoic far-field scene synthesis with separable ground-truth components."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal as sps

from .dsp import DEFAULT_SAMPLE_RATE, MultichannelSignal
from .geometry import ArrayGeometry

GUARD_S = 0.1
TONAL_FREQS_HZ = (250.0, 625.0, 1125.0, 1750.0, 2500.0)
BABBLE_BAND_HZ = (300.0, 3400.0)
INTERFERENCE_KINDS = ("white", "tonal", "babble")

# components live on a 2**-32 grid so mixture - target == interference exactly
_QUANT = 2.0 ** -32


class DegenerateSceneError(ValueError):
    pass


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.round(x / _QUANT) * _QUANT


def propagation_delays(geometry: ArrayGeometry, azimuth_deg: float) -> np.ndarray:
    """Per-mic arrival delay (s) relative to the array centre for a far-field source."""
    az = np.deg2rad(azimuth_deg)
    towards = np.array([np.cos(az), np.sin(az)])
    rel = geometry.mic_positions - geometry.center
    return -(rel @ towards) / geometry.sound_speed


def render_far_field(source: np.ndarray, azimuth_deg: float, geometry: ArrayGeometry,
                     sample_rate: int = DEFAULT_SAMPLE_RATE) -> MultichannelSignal:
    """Delay a mono source onto every microphone with a frequency-domain phase ramp.

    The delay is circular (exact for the periodic extension of ``source``);
    callers wanting linear behaviour pad the source and trim afterwards.
    """
    source = np.asarray(source, dtype=float)
    n = len(source)
    tau = propagation_delays(geometry, azimuth_deg)
    spec = np.fft.rfft(source)
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    ramp = np.exp(-2j * np.pi * f[None, :] * tau[:, None])
    if n % 2 == 0:
        # keep the Nyquist bin real-valued so irfft stays a pure delay below it
        ramp[:, -1] = np.real(ramp[:, -1])
    out = np.fft.irfft(spec[None, :] * ramp, n=n, axis=-1)
    return MultichannelSignal(out, sample_rate)


def gen_interference(kind: str, duration_s: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
                     seed: int = 0) -> np.ndarray:
    """Mono interference: ``white`` Gaussian, ``tonal`` (5 sinusoids) or ``babble``.

    ``babble`` is Gaussian noise band-limited to 300-3400 Hz.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng(seed)
    if kind == "white":
        return rng.standard_normal(n)
    if kind == "tonal":
        t = np.arange(n) / sample_rate
        phases = rng.uniform(0, 2 * np.pi, len(TONAL_FREQS_HZ))
        return sum(np.cos(2 * np.pi * f * t + p) for f, p in zip(TONAL_FREQS_HZ, phases))
    if kind == "babble":
        sos = sps.butter(8, BABBLE_BAND_HZ, btype="bandpass", fs=sample_rate, output="sos")
        return sps.sosfiltfilt(sos, rng.standard_normal(n))
    raise ValueError(f"unknown interference kind {kind!r}; expected one of {INTERFERENCE_KINDS}")


def gen_speech_like(duration_s: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
                    seed: int = 0) -> np.ndarray:
    """Pseudo-speech: a gliding harmonic series shaped by two moving formants
    plus tilted breath noise, gated into syllables separated by pauses."""
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate

    # syllable layout
    env = np.zeros(n)
    knots_t, f1_knots, f2_knots = [0.0], [500.0], [1500.0]
    pos = rng.uniform(0.02, 0.1)
    while pos < duration_s:
        length = rng.uniform(0.15, 0.3)
        a, b = int(pos * sample_rate), min(n, int((pos + length) * sample_rate))
        if b > a:
            env[a:b] = np.sin(np.pi * np.linspace(0, 1, b - a)) ** 0.4 * rng.uniform(0.5, 1.0)
        knots_t.append(pos + length / 2)
        f1_knots.append(rng.uniform(300, 850))
        f2_knots.append(rng.uniform(900, 2400))
        pos += length + (rng.uniform(0.25, 0.45) if rng.random() < 0.15 else rng.uniform(0.04, 0.1))
    knots_t.append(duration_s)
    f1_knots.append(f1_knots[-1])
    f2_knots.append(f2_knots[-1])
    f1 = np.interp(t, knots_t, f1_knots)
    f2 = np.interp(t, knots_t, f2_knots)

    # pitch contour: smoothed random walk in 100-220 Hz
    walk = np.cumsum(rng.standard_normal(n // 400 + 2))
    walk = (walk - walk.min()) / (np.ptp(walk) + 1e-12)
    f0 = 100 + 120 * np.interp(t, np.linspace(0, duration_s, len(walk)), walk)
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate

    out = np.zeros(n)
    for h in range(1, int(min(4000.0, sample_rate / 2 - 200) // 100) + 1):
        fh = h * f0
        gain = (1.0 / h ** 0.5) * (
            1.0 / (1 + ((fh - f1) / 120.0) ** 2) + 0.6 / (1 + ((fh - f2) / 180.0) ** 2) + 0.05
        )
        gain = np.where(fh < sample_rate / 2 - 200, gain, 0.0)
        out += gain * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    voiced = out / (np.sqrt(np.mean(out ** 2)) + 1e-12)
    # breathy component fills the bins between harmonics
    sos = sps.butter(2, (100.0, 3800.0), btype="bandpass", fs=sample_rate, output="sos")
    tilt = sps.butter(1, 2000.0, btype="lowpass", fs=sample_rate, output="sos")
    breath = sps.sosfilt(tilt, sps.sosfilt(sos, rng.standard_normal(n)))
    breath /= np.sqrt(np.mean(breath ** 2)) + 1e-12
    out = env * (np.sqrt(0.4) * voiced + np.sqrt(0.6) * breath)
    return out / (np.sqrt(np.mean(out ** 2)) + 1e-12)


@dataclass(frozen=True)
class SourceSpec:
    signal: np.ndarray
    azimuth_deg: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth_deg < 360.0:
            raise ValueError("azimuth must be in [0, 360)")


@dataclass(frozen=True)
class Scene:
    target: SourceSpec
    geometry: ArrayGeometry
    interferers: tuple[SourceSpec, ...] = ()
    diffuse_noise_db: float | None = -30.0
    input_sinr_db: float = 6.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    seed: int = 0

    def __post_init__(self):
        if np.isfinite(self.input_sinr_db) and not self.interferers and self.diffuse_noise_db is None:
            raise ValueError("a finite input SINR needs interferers or diffuse noise")


@dataclass(frozen=True)
class RenderedScene:
    mixture: MultichannelSignal
    target_only: MultichannelSignal
    interference_plus_noise_only: MultichannelSignal
    geometry: ArrayGeometry | None = None


def _power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def mix_at_sinr(target: MultichannelSignal, interference: MultichannelSignal | None,
                input_sinr_db: float, noise: MultichannelSignal | None = None,
                geometry: ArrayGeometry | None = None) -> RenderedScene:
    """Scale the directional interference so channel 0 sits at ``input_sinr_db``.

    ``noise`` keeps its level; the interference absorbs the remaining
    budget.  Without interference the noise itself is scaled.
    """
    shapes = {target.channels.shape}
    for comp in (interference, noise):
        if comp is not None:
            shapes.add(comp.channels.shape)
    if len(shapes) != 1:
        raise ValueError("components must have equal shapes")
    p_t = _power(target.channels[0])
    if p_t <= 0:
        raise DegenerateSceneError("degenerate scene: zero-power target")
    budget = p_t / 10 ** (input_sinr_db / 10)
    zero = np.zeros_like(target.channels)
    v_noise = zero if noise is None else noise.channels
    v_int = zero if interference is None else interference.channels
    p_n, p_i = _power(v_noise[0]), _power(v_int[0])
    if p_i > 0:
        if p_n >= budget:
            raise DegenerateSceneError("degenerate scene: diffuse noise alone exceeds the SINR budget")
        v = v_int * np.sqrt((budget - p_n) / p_i) + v_noise
    elif p_n > 0:
        v = v_noise * np.sqrt(budget / p_n)
    else:
        raise DegenerateSceneError("degenerate scene: zero-power interference")
    t = _quantize(target.channels)
    v = _quantize(v)
    sr = target.sample_rate
    return RenderedScene(
        MultichannelSignal(t + v, sr), MultichannelSignal(t, sr), MultichannelSignal(v, sr), geometry
    )


def render_scene(scene: Scene) -> RenderedScene:
    """Render ``scene`` with guard-trimmed circular delays and seeded diffuse noise."""
    sr = scene.sample_rate
    guard = int(round(GUARD_S * sr))
    n = len(scene.target.signal)

    def place(spec: SourceSpec) -> np.ndarray:
        if len(spec.signal) != n:
            raise ValueError("all sources must have equal length")
        padded = np.pad(np.asarray(spec.signal, float), guard)
        return render_far_field(padded, spec.azimuth_deg, scene.geometry, sr).channels[:, guard:guard + n]

    target = MultichannelSignal(place(scene.target), sr)
    interference = None
    if scene.interferers:
        interference = MultichannelSignal(sum(place(s) for s in scene.interferers), sr)
    noise = None
    if scene.diffuse_noise_db is not None:
        rng = np.random.default_rng(scene.seed + 7919)
        level = np.sqrt(_power(target.channels[0]) * 10 ** (scene.diffuse_noise_db / 10))
        noise = MultichannelSignal(level * rng.standard_normal(target.channels.shape), sr)
    if not np.isfinite(scene.input_sinr_db):
        zero = MultichannelSignal(np.zeros_like(target.channels), sr)
        t = MultichannelSignal(_quantize(target.channels), sr)
        return RenderedScene(t, t, zero, scene.geometry)
    return mix_at_sinr(target, interference, scene.input_sinr_db, noise, scene.geometry)


def simulate(geometry: ArrayGeometry, target_az: float, interferer_az: Sequence[float] = (),
             input_sinr_db: float = 6.0, interference_kind: str = "babble",
             duration_s: float = 3.0, sample_rate: int = DEFAULT_SAMPLE_RATE, seed: int = 0,
             diffuse_noise_db: float | None = -30.0) -> RenderedScene:
    """Speech-like target plus ``interference_kind`` interferers, rendered at ``input_sinr_db``."""
    target = SourceSpec(gen_speech_like(duration_s, sample_rate, seed), float(target_az) % 360.0)
    interferers = tuple(
        SourceSpec(gen_interference(interference_kind, duration_s, sample_rate, seed * 101 + 13 + i),
                   float(az) % 360.0)
        for i, az in enumerate(interferer_az)
    )
    scene = Scene(target, geometry, interferers, diffuse_noise_db, input_sinr_db, sample_rate, seed)
    return render_scene(scene)
