"""Pair selection and phase alignment for circular arrays.

A circular array is beamformed with a single diametral pair: the one whose
broadside lies closest to the estimated DOA.  The selected pair is then
phase-aligned to the array centre so the source sits at local broadside and
the two-channel max-SNR pipeline runs unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Spectrogram
from .geometry import (
    ArrayGeometry,
    alignment_vector,
    angle_diff_deg,
    azimuth_to_local,
    pair_axis_angle,
)
from .maxsnr import BeamWeights, MaxSnrConfig, PipelineResult, beamform_pipeline
from .ssl import CIRCULAR_GRID_DEG, DoaEstimate, circular_doa


def _broadside_offset(doa_az_deg: float, phi: float) -> float:
    # both normals phi +/- 90 are candidates
    return min(abs(angle_diff_deg(doa_az_deg, phi + 90.0)), abs(angle_diff_deg(doa_az_deg, phi - 90.0)))


def select_pair(doa_az_deg: float, geometry: ArrayGeometry) -> tuple[int, float]:
    """Pick the pair whose broadside is nearest to ``doa_az_deg``.

    Args:
        doa_az_deg: Global azimuth of the source in degrees.
        geometry: Circular geometry with diametral pairs.

    Returns:
        ``(pair_index, theta_b_local_deg)``.  Ties go to the lowest index.
    """
    if geometry.kind != "circular" or not geometry.pairs:
        raise ValueError("select_pair needs a circular geometry with pairs")
    offsets = np.array([_broadside_offset(doa_az_deg, pair_axis_angle(geometry, p))
                        for p in range(geometry.n_pairs)])
    # round away float noise so geometric ties really tie
    best = int(np.argmin(np.round(offsets, 9)))
    theta, _ = azimuth_to_local(doa_az_deg, pair_axis_angle(geometry, best))
    return best, float(theta)


def alignment_weights(bin_hz: np.ndarray, pair_index: int, theta_b_local: float,
                      geometry: ArrayGeometry) -> np.ndarray:
    """Per-bin complex factors ``(K, 2)`` that move the pair's phase reference to the array centre.

    These are the conjugated alignment-vector entries, so that a source at
    ``theta_b_local`` ends up with zero phase on both channels.
    """
    d = geometry.spacing(pair_index)
    return np.conj(alignment_vector(bin_hz, d, theta_b_local, geometry.sound_speed))


def align_pair(frames: Spectrogram, pair_index: int, theta_b_local: float,
               geometry: ArrayGeometry) -> Spectrogram:
    """Two-channel spectrogram of the selected pair, aligned to ``theta_b_local``."""
    a, b = geometry.pairs[pair_index]
    sub = frames.select([a, b])
    g = alignment_weights(frames.bin_hz, pair_index, theta_b_local, geometry)
    return sub.with_data(sub.data * g.T[:, None, :])


@dataclass
class CircularResult:
    """Outcome of the circular scheme.

    ``raw_weights`` act directly on the selected pair's unaligned channels,
    which is what shadow filtering of clean components needs.
    """

    doa: DoaEstimate
    pair_index: int
    pair_labels: tuple[str, str]
    theta_b_local: float
    pipeline: PipelineResult
    raw_weights: BeamWeights

    @property
    def output(self) -> np.ndarray:
        return self.pipeline.output


def circular_beamform(frames: Spectrogram, geometry: ArrayGeometry,
                      config: MaxSnrConfig = MaxSnrConfig(),
                      grid_step_deg: float = CIRCULAR_GRID_DEG,
                      doa_az_deg: float | None = None) -> CircularResult:
    """Localize with the whole circle, then beamform with the best aligned pair.

    ``doa_az_deg`` skips localization (the histogram is still computed for
    reporting).
    """
    doa = circular_doa(frames, geometry, grid_step_deg, config.band_hz, gate=config.activity_gate)
    az = doa.azimuth_deg if doa_az_deg is None else float(doa_az_deg)
    p, theta = select_pair(az, geometry)
    aligned = align_pair(frames, p, theta, geometry)
    res = beamform_pipeline(aligned, geometry.spacing(p), config, geometry.sound_speed, theta_b=0.0)
    g = alignment_weights(frames.bin_hz, p, theta, geometry)
    # y = w^H (g * x) = (conj(g) * w)^H x
    raw = np.conj(g) * res.weights.w
    raw_weights = BeamWeights(raw, res.weights.lambda_max, res.weights.degenerate)
    for row in res.diagnostics:
        row["selected_pair"] = "/".join(geometry.pair_labels(p))
    return CircularResult(doa, p, geometry.pair_labels(p), theta, res, raw_weights)
