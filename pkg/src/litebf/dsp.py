"""STFT analysis/synthesis and multichannel WAV I/O."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000


class InsufficientSamplesError(ValueError):
    pass


class ConfigMismatchError(ValueError):
    pass


class WavFormatError(ValueError):
    pass


@dataclass(frozen=True)
class MultichannelSignal:
    """Time-domain samples, shape ``(n_channels, n_samples)``."""

    channels: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.channels, dtype=np.float64))
        if data.ndim != 2:
            raise ValueError("channels must be a 2-D array (n_channels, n_samples)")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(data)):
            raise ValueError("samples must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "channels", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def __len__(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def __add__(self, other: "MultichannelSignal") -> "MultichannelSignal":
        if other.sample_rate != self.sample_rate or other.channels.shape != self.channels.shape:
            raise ValueError("signals differ in shape or sample rate")
        return MultichannelSignal(self.channels + other.channels, self.sample_rate)

    def scaled(self, gain: float) -> "MultichannelSignal":
        return MultichannelSignal(self.channels * gain, self.sample_rate)

    def select(self, indices: Sequence[int]) -> "MultichannelSignal":
        return MultichannelSignal(self.channels[list(indices)], self.sample_rate)


def _window(name: str, n: int) -> np.ndarray:
    # periodic windows, so that shifted copies tile exactly
    t = np.arange(n)
    hann = 0.5 - 0.5 * np.cos(2 * np.pi * t / n)
    if name == "sqrt_hann":
        return np.sqrt(hann)
    if name == "hann":
        return hann
    if name in ("rect", "boxcar"):
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}")


def _synthesis_window(name: str, n: int) -> np.ndarray:
    # analysis * synthesis must sum to a constant over hops
    if name == "sqrt_hann":
        return _window("sqrt_hann", n)
    return np.ones(n)


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 256
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.fft_size <= 0 or not 0 < self.hop <= self.fft_size:
            raise ValueError("need 0 < hop <= fft_size")
        if self.fft_size % self.hop:
            raise ValueError("hop must divide fft_size")
        total = self.analysis_window * self.synthesis_window
        ola = total.reshape(-1, self.hop).sum(axis=0)
        if np.ptp(ola) > 1e-9 * np.max(ola):
            raise ValueError(
                f"window {self.window!r} is not constant-overlap-add at hop {self.hop}"
            )

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def analysis_window(self) -> np.ndarray:
        return _window(self.window, self.fft_size)

    @property
    def synthesis_window(self) -> np.ndarray:
        return _synthesis_window(self.window, self.fft_size)

    def bin_hz(self, sample_rate: int) -> np.ndarray:
        return np.fft.rfftfreq(self.fft_size, d=1.0 / sample_rate)


@dataclass(frozen=True)
class SpectroFrame:
    """One STFT frame: ``bins`` has shape ``(n_channels, n_bins)``."""

    bins: np.ndarray
    frame_index: int
    bin_hz: np.ndarray


@dataclass(frozen=True)
class Spectrogram:
    """A run of STFT frames stored as one ``(n_channels, n_frames, n_bins)`` array.

    Indexing and iteration yield :class:`SpectroFrame` objects; vectorised
    code reads ``data`` directly.
    """

    data: np.ndarray
    bin_hz: np.ndarray
    sample_rate: int
    config: StftConfig = field(default_factory=StftConfig)
    n_samples: int | None = None

    def __len__(self) -> int:
        return self.data.shape[1]

    def __getitem__(self, i: int) -> SpectroFrame:
        if isinstance(i, slice):
            raise TypeError("use .frames(slice) for sub-sequences")
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        return SpectroFrame(self.data[:, i, :], i, self.bin_hz)

    def __iter__(self) -> Iterator[SpectroFrame]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "Spectrogram":
        return Spectrogram(np.asarray(data), self.bin_hz, self.sample_rate, self.config, self.n_samples)

    def select(self, indices: Sequence[int]) -> "Spectrogram":
        return self.with_data(self.data[list(indices)])

    @classmethod
    def from_frames(cls, frames: Sequence[SpectroFrame], sample_rate: int,
                    config: StftConfig | None = None) -> "Spectrogram":
        frames = list(frames)
        if not frames:
            raise ValueError("no frames")
        data = np.stack([np.atleast_2d(f.bins) for f in frames], axis=1)
        return cls(data, frames[0].bin_hz, sample_rate, config or StftConfig())


def stft(signal: MultichannelSignal, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Short-time Fourier transform of every channel, without padding.

    Frame ``t`` covers samples ``[t*hop, t*hop + fft_size)``; only the
    non-negative half spectrum is kept.
    """
    x = signal.channels
    n = x.shape[1]
    if n < cfg.fft_size:
        raise InsufficientSamplesError(
            f"insufficient samples: {n} < fft_size {cfg.fft_size}"
        )
    n_frames = (n - cfg.fft_size) // cfg.hop + 1
    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    segments = x[:, idx] * cfg.analysis_window
    data = np.fft.rfft(segments, axis=-1)
    return Spectrogram(data, cfg.bin_hz(signal.sample_rate), signal.sample_rate, cfg, n)


def istft(frames: Spectrogram | Sequence[SpectroFrame], cfg: StftConfig = StftConfig(),
          channel: int = 0, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft` for one channel.

    ``frames`` may also be a bare ``(n_frames, n_bins)`` array (e.g. a
    beamformer output).
    """
    if isinstance(frames, Spectrogram):
        spec = frames.data[channel]
        if length is None:
            length = frames.n_samples
    elif isinstance(frames, np.ndarray):
        spec = np.atleast_2d(frames)
    else:
        frames = list(frames)
        if not frames:
            raise ValueError("no frames")
        spec = np.stack([np.atleast_2d(f.bins)[channel] for f in frames])
    if spec.shape[0] == 0:
        raise ValueError("no frames")
    if spec.shape[-1] != cfg.n_bins:
        raise ConfigMismatchError(
            f"config mismatch: {spec.shape[-1]} bins for fft_size {cfg.fft_size}"
        )
    n_frames = spec.shape[0]
    out_len = cfg.fft_size + cfg.hop * (n_frames - 1)
    segments = np.fft.irfft(spec, n=cfg.fft_size, axis=-1) * cfg.synthesis_window
    out = np.zeros(out_len)
    norm = np.zeros(out_len)
    wsum = cfg.analysis_window * cfg.synthesis_window
    for t in range(n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.fft_size)
        out[sl] += segments[t]
        norm[sl] += wsum
    # edges where the window sum is tiny are left unnormalised (zero weight)
    good = norm > 1e-8 * wsum.max()
    out[good] /= norm[good]
    if length is not None:
        if length >= out_len:
            out = np.pad(out, (0, length - out_len))
        else:
            out = out[:length]
    return out


def read_wav(path: str | os.PathLike) -> MultichannelSignal:
    """Read a PCM16 or float32 WAV into float samples (PCM16 scaled to [-1, 1))."""
    try:
        size = os.path.getsize(path)
    except OSError as exc:
        raise FileNotFoundError(path) from exc
    if size == 0:
        raise WavFormatError(f"cannot parse WAV {path}: empty file")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, struct.error, EOFError) as exc:
        raise WavFormatError(f"cannot parse WAV {path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"unsupported WAV encoding: {data.dtype} in {path}")
    samples = samples.reshape(len(samples), -1).T
    return MultichannelSignal(samples, rate)


def write_wav(path: str | os.PathLike, signal: MultichannelSignal, encoding: str = "float32") -> None:
    """Write interleaved PCM16 (``"pcm16"``) or IEEE float32 (``"float32"``)."""
    x = signal.channels.T
    if encoding == "float32":
        data = x.astype(np.float32)
    elif encoding == "pcm16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise WavFormatError(f"unsupported WAV encoding: {encoding}")
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(path, signal.sample_rate, data)
