"""Sound source localization by per-bin phase voting.

A dual pair votes every valid bin into a histogram of pair-local broadside
angles.  A circular array votes each diametral pair's estimate *and* its
mirror into a global azimuth histogram; true candidates agree across pairs
while mirrors scatter, so the tallest cell is the source.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dsp import SpectroFrame, Spectrogram
from .geometry import ArrayGeometry, SOUND_SPEED, pair_axis_angle, wrap_deg

MIN_CROSS_POWER = 1e-12
DUAL_GRID_DEG = 5.0
CIRCULAR_GRID_DEG = 2.0
BAND_HZ = (100.0, 2000.0)
MIN_PEAK_SEPARATION = 2
ACTIVITY_QUANTILE = 0.5


class NoVotesError(ValueError):
    pass


@dataclass(frozen=True)
class DoaEstimate:
    """Histogram-based DOA.

    ``azimuth_deg`` is pair-local broadside (``circular=False``) or global
    azimuth (``circular=True``).  ``grid_deg`` holds the cell centres.
    """

    azimuth_deg: float
    histogram: np.ndarray
    grid_deg: np.ndarray
    n_votes: int
    peak_count: int
    second_count: int
    circular: bool = False

    @property
    def gap(self) -> int:
        return self.peak_count - self.second_count


def _as_array(frames) -> np.ndarray:
    if isinstance(frames, Spectrogram):
        return frames.data
    if isinstance(frames, SpectroFrame):
        return frames.bins
    return np.asarray(frames)


def _bin_hz(frames, fallback=None) -> np.ndarray:
    if isinstance(frames, (Spectrogram, SpectroFrame)):
        return np.asarray(frames.bin_hz)
    if fallback is None:
        raise ValueError("bin_hz required for bare arrays")
    return np.asarray(fallback)


def bin_phase(frame, ch_a: int = 0, ch_b: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Phase of ``X_a * conj(X_b)`` per bin and a validity mask.

    Works on a single frame ``(C, K)`` or a stack ``(C, T, K)``.
    """
    x = _as_array(frame)
    y = x[ch_a] * np.conj(x[ch_b])
    valid = np.abs(y) >= MIN_CROSS_POWER
    return np.arctan2(y.imag, y.real), valid


def vote_band(bin_hz: np.ndarray, d: float, c: float = SOUND_SPEED,
              band: tuple[float, float] = BAND_HZ) -> np.ndarray:
    """Bins usable for voting: inside ``band`` and below the aliasing limit ``c/(2d)``."""
    hi = min(band[1], c / (2 * d))
    return (bin_hz >= band[0]) & (bin_hz <= hi) & (bin_hz > 0)


def activity_mask(x: np.ndarray, usable: np.ndarray, quantile: float = ACTIVITY_QUANTILE) -> np.ndarray:
    """Keep bins of loud frames that are themselves loud.

    A frame passes when its summed power over ``usable`` bins reaches the
    ``quantile`` of all frames; a bin passes when its power reaches the
    ``quantile`` of the usable bins in its frame.  ``x`` is ``(C, T, K)``.
    """
    power = np.sum(np.abs(x) ** 2, axis=0)
    masked = np.where(usable, power, np.nan)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        frame_e = np.nansum(masked, axis=-1)
        loud_frame = frame_e >= np.quantile(frame_e, quantile)
        bin_thr = np.nanquantile(masked, quantile, axis=-1)
    loud_bin = power >= np.nan_to_num(bin_thr, nan=np.inf)[..., None]
    return usable & loud_frame[..., None] & loud_bin


def bin_angles(frames, d: float, c: float = SOUND_SPEED, band: tuple[float, float] = BAND_HZ,
               ch_a: int = 0, ch_b: int = 1, bin_hz=None, gate: bool = False,
               drop_overshoot: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin broadside angle (deg) and a vote mask, each shaped like the bins.

    A phase larger than any plane wave could produce (``|sin| > 1``) carries
    no usable angle; with ``drop_overshoot`` such bins do not vote, otherwise
    they are clamped to endfire.  With ``gate`` the vote mask is further
    restricted by :func:`activity_mask` (needs a ``(C, T, K)`` stack).
    """
    f = _bin_hz(frames, bin_hz)
    x = _as_array(frames)
    phase, valid = bin_phase(x, ch_a, ch_b)
    usable = valid & vote_band(f, d, c, band)
    if gate:
        usable = activity_mask(x[[ch_a, ch_b]], usable)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.nan_to_num(phase * c / (2 * np.pi * f * d))
    if drop_overshoot:
        usable = usable & (np.abs(s) <= 1.0)
    s = np.clip(s, -1.0, 1.0)
    return np.degrees(np.arcsin(s)), usable


def _second_peak(hist: np.ndarray, peak: int, wrap: bool) -> int:
    n = len(hist)
    idx = np.arange(n)
    dist = np.abs(idx - peak)
    if wrap:
        dist = np.minimum(dist, n - dist)
        left, right = np.roll(hist, 1), np.roll(hist, -1)
    else:
        left = np.concatenate([[-1], hist[:-1]])
        right = np.concatenate([hist[1:], [-1]])
    is_peak = (hist >= left) & (hist >= right) & (hist > 0) & (dist >= MIN_PEAK_SEPARATION)
    return int(hist[is_peak].max()) if is_peak.any() else 0


def estimate_from_histogram(hist: np.ndarray, grid: np.ndarray, circular: bool) -> DoaEstimate:
    hist = np.asarray(hist)
    n_votes = int(round(hist.sum()))
    if n_votes <= 0:
        raise NoVotesError("no votes: no valid bins in the localization band")
    peak = int(np.argmax(hist))
    second = _second_peak(hist, peak, wrap=circular)
    return DoaEstimate(float(grid[peak]), hist, grid, n_votes, int(round(hist[peak])), second, circular)


def dual_grid(step: float = DUAL_GRID_DEG) -> np.ndarray:
    return np.arange(-90.0, 90.0 + 1e-9, step)


def circular_grid(step: float = CIRCULAR_GRID_DEG) -> np.ndarray:
    return np.arange(0.0, 360.0 - 1e-9, step)


def dual_votes(frames, d: float, c: float = SOUND_SPEED, grid_step_deg: float = DUAL_GRID_DEG,
               band: tuple[float, float] = BAND_HZ, ch_a: int = 0, ch_b: int = 1,
               bin_hz=None, gate: bool = True) -> np.ndarray:
    """Per-frame vote counts, shape ``(n_frames, n_cells)``."""
    x = _as_array(frames)
    if x.ndim == 2:
        x = x[:, None, :]
    f = _bin_hz(frames, bin_hz)
    theta, usable = bin_angles(x, d, c, band, ch_a, ch_b, bin_hz=f, gate=gate)
    grid = dual_grid(grid_step_deg)
    cell = np.rint((theta + 90.0) / grid_step_deg).astype(int)
    cell = np.clip(cell, 0, len(grid) - 1)
    counts = np.zeros((x.shape[1], len(grid)))
    t_idx = np.broadcast_to(np.arange(x.shape[1])[:, None], cell.shape)
    np.add.at(counts, (t_idx[usable], cell[usable]), 1)
    return counts


def dual_doa(frames, d: float, c: float = SOUND_SPEED, grid_step_deg: float = DUAL_GRID_DEG,
             band: tuple[float, float] = BAND_HZ, ch_a: int = 0, ch_b: int = 1,
             gate: bool = True) -> DoaEstimate:
    """Broadside DOA of a two-microphone pair from all frames' votes."""
    counts = dual_votes(frames, d, c, grid_step_deg, band, ch_a, ch_b, gate=gate)
    return estimate_from_histogram(counts.sum(axis=0), dual_grid(grid_step_deg), circular=False)


def circular_votes(frames, geometry: ArrayGeometry, grid_step_deg: float = CIRCULAR_GRID_DEG,
                   band: tuple[float, float] = BAND_HZ, gate: bool = True) -> np.ndarray:
    """Per-frame global-azimuth vote counts over all diametral pairs, estimate and mirror."""
    x = _as_array(frames)
    if x.ndim == 2:
        x = x[:, None, :]
    f = _bin_hz(frames)
    grid = circular_grid(grid_step_deg)
    counts = np.zeros((x.shape[1], len(grid)))
    c = geometry.sound_speed
    for p, (a, b) in enumerate(geometry.pairs):
        phi = pair_axis_angle(geometry, p)
        theta, usable = bin_angles(x, geometry.spacing(p), c, band, a, b, bin_hz=f, gate=gate)
        t_idx = np.broadcast_to(np.arange(x.shape[1])[:, None], theta.shape)[usable]
        th = theta[usable]
        front, back = (np.rint(np.asarray(az) / grid_step_deg).astype(int) % len(grid)
                       for az in (wrap_deg(phi + 90.0 + th), wrap_deg(phi - 90.0 - th)))
        np.add.at(counts, (t_idx, front), 1)
        # near endfire both candidates share a cell; count that bin once
        distinct = back != front
        np.add.at(counts, (t_idx[distinct], back[distinct]), 1)
    return counts


def circular_doa(frames, geometry: ArrayGeometry,
                 grid_step_deg: float = CIRCULAR_GRID_DEG,
                 band: tuple[float, float] = BAND_HZ, gate: bool = True) -> DoaEstimate:
    """Global azimuth from a circular array: calibrate each pair's votes into
    the global frame, vote both mirror candidates, take the tallest cell."""
    if geometry.kind != "circular" or geometry.n_pairs < 2:
        raise ValueError("circular_doa needs a circular geometry with >= 2 pairs")
    counts = circular_votes(frames, geometry, grid_step_deg, band, gate)
    return estimate_from_histogram(counts.sum(axis=0), circular_grid(grid_step_deg), circular=True)
