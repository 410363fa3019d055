"""Maximum-SNR beamformer for a microphone pair.

Per frame, bins whose inter-channel phase agrees with the estimated DOA are
labelled target, the rest interference.  The two label sets give a target
and an interference energy, each turned into an AuxIVA-style contrast
weight ``2 / (3 E^(2/3))``.  Those weights scale the frame's outer products
into two smoothed auxiliary covariances, and the beam is the principal
generalized eigenvector of the pair, rescaled to unit gain towards the DOA.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .dsp import SpectroFrame, Spectrogram
from .geometry import SOUND_SPEED, phase_difference, steering_vector, wrap_phase
from .ssl import BAND_HZ, DUAL_GRID_DEG, DoaEstimate, bin_phase, dual_doa, dual_votes, dual_grid, \
    estimate_from_histogram

ENERGY_FLOOR = 1e-12
MAX_BEAMWIDTH_DEG = 60.0
EDF_DECAY = 3.0
NULL_TOL = 1e-12
MIN_LOOK_RESPONSE = 0.1


class TargetInNullSpaceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# adaptive threshold
# ---------------------------------------------------------------------------


def adaptive_beamwidth(gap: float, n_votes: float, max_deg: float = MAX_BEAMWIDTH_DEG,
                       decay: float = EDF_DECAY) -> float:
    """Exponential descent from ``max_deg`` at ``gap <= N/5`` to ``max_deg*exp(-decay)`` at ``gap >= N/2``."""
    if n_votes <= 0:
        raise ValueError("n_votes must be positive")
    if gap < 0:
        raise ValueError("gap must be non-negative")
    lo, hi = n_votes / 5.0, n_votes / 2.0
    x = min(max(gap, lo), hi)
    return float(max_deg * np.exp(-decay * (x - lo) / (hi - lo)))


# ---------------------------------------------------------------------------
# bin classification and energies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinPartition:
    """Boolean masks over bins (``(K,)`` or ``(T, K)``); bins in neither are excluded."""

    target: np.ndarray
    interference: np.ndarray

    @property
    def excluded(self) -> np.ndarray:
        return ~(self.target | self.interference)


def _frames_array(frames) -> np.ndarray:
    if isinstance(frames, Spectrogram):
        return frames.data
    if isinstance(frames, SpectroFrame):
        return frames.bins
    return np.asarray(frames)


def classify_bins(frame, theta_hat_b: float, beamwidth_deg: float, d: float,
                  c: float = SOUND_SPEED, bin_hz=None) -> BinPartition:
    """Split valid sub-aliasing bins by residual phase against the DOA.

    A bin is target when ``cos(residual) >= cos(tol)``, ``tol`` being the
    phase a source at half the beamwidth off broadside would produce.
    """
    x = _frames_array(frame)
    f = np.asarray(frame.bin_hz if bin_hz is None else bin_hz)
    phase, valid = bin_phase(x)
    usable = valid & (f > 0) & (f <= c / (2 * d))
    resid = wrap_phase(phase - phase_difference(f, d, theta_hat_b, c))
    tol = phase_difference(f, d, beamwidth_deg / 2.0, c)
    is_target = np.cos(resid) >= np.cos(np.minimum(tol, np.pi))
    return BinPartition(usable & is_target, usable & ~is_target)


def band_energies(frame, partition: BinPartition) -> tuple:
    """Target energy from channel 0 over T, interference energy from channel 1 over I.

    Returns scalars for one frame or per-frame arrays for a stack.
    """
    x = _frames_array(frame)
    p0, p1 = np.abs(x[0]) ** 2, np.abs(x[1]) ** 2
    e_t = np.sum(np.where(partition.target, p0, 0.0), axis=-1)
    e_i = np.sum(np.where(partition.interference, p1, 0.0), axis=-1)
    if np.ndim(e_t) == 0:
        return float(e_t), float(e_i)
    return e_t, e_i


def contrast_weight(energy):
    """``G'(r)/r`` for ``G(r) = r^(2/3)`` with ``r = sqrt(E)``; floored at ``E = 1e-12``."""
    e = np.maximum(np.asarray(energy, dtype=float), ENERGY_FLOOR)
    w = 2.0 / (3.0 * e ** (2.0 / 3.0))
    return float(w) if w.ndim == 0 else w


# ---------------------------------------------------------------------------
# auxiliary covariances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuxCovariances:
    """Per-bin 2x2 auxiliary covariances ``V1`` (target) and ``V2`` (interference)."""

    V1: np.ndarray
    V2: np.ndarray
    beta: float = 0.96
    n_updates: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")

    @classmethod
    def zeros(cls, n_bins: int, beta: float = 0.96) -> "AuxCovariances":
        z = np.zeros((n_bins, 2, 2), dtype=complex)
        return cls(z, z.copy(), beta)


def outer_products(x: np.ndarray) -> np.ndarray:
    """``x x^H`` per bin for a ``(2, ..., K)`` array, result ``(..., K, 2, 2)``."""
    xs = np.moveaxis(x, 0, -1)
    return xs[..., :, None] * np.conj(xs[..., None, :])


def update_covariances(state: AuxCovariances, frame, e_target: float, e_interf: float) -> AuxCovariances:
    """One recursive-smoothing step of both auxiliary covariances.

    ``V <- (1 - beta) * weight * x x^H + beta * V`` with the weights given by
    :func:`contrast_weight` of the interference and target energies
    respectively (see :func:`covariance_weights`).
    """
    x = _frames_array(frame)
    xx = outer_products(x)
    w1, w2 = covariance_weights(e_target, e_interf)
    b = state.beta
    v1 = (1 - b) * w1 * xx + b * state.V1
    v2 = (1 - b) * w2 * xx + b * state.V2
    return replace(state, V1=_hermitize(v1), V2=_hermitize(v2), n_updates=state.n_updates + 1)


def covariance_weights(e_target, e_interf):
    """Weights for ``(V1, V2)``.

    ``V1`` is emphasised in frames where the interference is quiet and
    ``V2`` where the target is quiet, so ``V1`` tracks the target
    covariance and ``V2`` the interference-plus-noise covariance.
    """
    return contrast_weight(e_interf), contrast_weight(e_target)


def _hermitize(v: np.ndarray) -> np.ndarray:
    return 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))


# ---------------------------------------------------------------------------
# generalized eigenproblem
# ---------------------------------------------------------------------------


class GevdResult(NamedTuple):
    w: np.ndarray
    lambda_max: np.ndarray
    degenerate: np.ndarray


def regularize(V2: np.ndarray) -> np.ndarray:
    tr = np.real(np.trace(V2, axis1=-2, axis2=-1))
    eps = np.where(tr > 1e-300, 1e-6 * tr / 2.0, 1e-12)
    return V2 + eps[..., None, None] * np.eye(2)


def solve_gevd(V1: np.ndarray, V2: np.ndarray) -> GevdResult:
    """Principal generalized eigenvector of ``V1 w = lambda (V2 + eps I) w``.

    Closed form for 2x2 Hermitian pairs (any leading batch shape): the
    larger root of ``det(V1 - lambda B) = 0`` and a null vector of
    ``V1 - lambda B``; ``lambda`` is then recomputed as the Rayleigh
    quotient of that vector.
    """
    A = np.asarray(V1, dtype=complex)
    B = regularize(np.asarray(V2, dtype=complex))
    a11, a22, a12 = A[..., 0, 0].real, A[..., 1, 1].real, A[..., 0, 1]
    b11, b22, b12 = B[..., 0, 0].real, B[..., 1, 1].real, B[..., 0, 1]
    det_a = a11 * a22 - np.abs(a12) ** 2
    det_b = b11 * b22 - np.abs(b12) ** 2
    mid = a11 * b22 + a22 * b11 - 2 * np.real(a12 * np.conj(b12))
    disc = np.sqrt(np.maximum(mid ** 2 - 4 * det_a * det_b, 0.0))
    lam = (mid + disc) / (2 * det_b)

    M = A - lam[..., None, None] * B
    # null vector of the (rank <= 1) matrix M: annihilated by its larger row
    r0 = np.stack([M[..., 0, 0], M[..., 0, 1]], axis=-1)
    r1 = np.stack([M[..., 1, 0], M[..., 1, 1]], axis=-1)
    use0 = np.linalg.norm(r0, axis=-1) >= np.linalg.norm(r1, axis=-1)
    row = np.where(use0[..., None], r0, r1)
    w = np.stack([-row[..., 1], row[..., 0]], axis=-1)
    # M == 0 (A proportional to B): any vector is an eigenvector
    flat = np.linalg.norm(row, axis=-1) <= 1e-14 * (np.abs(lam) * np.linalg.norm(B, axis=(-2, -1)) + 1e-300)
    w = np.where(flat[..., None], np.array([1.0, 0.0], dtype=complex), w)
    w = w / np.linalg.norm(w, axis=-1, keepdims=True)
    lam = _rayleigh(A, B, w)

    scale = np.real(np.trace(A, axis1=-2, axis2=-1))
    degenerate = scale <= 1e-300
    w = np.where(degenerate[..., None], np.array([1.0, 0.0], dtype=complex), w)
    lam = np.where(degenerate, 0.0, lam)
    return GevdResult(w, lam, degenerate)


def _rayleigh(A, B, w):
    num = np.real(np.einsum("...i,...ij,...j->...", np.conj(w), A, w))
    den = np.real(np.einsum("...i,...ij,...j->...", np.conj(w), B, w))
    return num / den


def normalize_distortionless(w: np.ndarray, s: np.ndarray, on_null: str = "raise",
                             min_response: float = 0.0) -> np.ndarray:
    """Rescale ``w`` so that ``w^H s = 1`` per bin.

    ``on_null="fallback"`` replaces bins where ``w`` is orthogonal to ``s``
    with the delay-and-sum weights ``s / |s|^2`` instead of raising.  With
    ``min_response > 0`` the fallback also covers bins whose normalized
    response ``|w^H s| / (|w| |s|)`` is below it, which caps the gain the
    rescaling can apply (e.g. above the spatial-aliasing limit where target
    and interference directions become indistinguishable).
    """
    w = np.asarray(w, dtype=complex)
    s = np.asarray(s, dtype=complex)
    unit = w / np.maximum(np.linalg.norm(w, axis=-1, keepdims=True), 1e-300)
    resp = np.sum(np.conj(unit) * s, axis=-1)
    null = np.abs(resp) < NULL_TOL
    if np.any(null) and on_null == "raise":
        raise TargetInNullSpaceError("target in null space: |w^H s| < 1e-12")
    if min_response > 0:
        null |= np.abs(resp) < min_response * np.linalg.norm(s, axis=-1)
    if np.any(null):
        resp = np.where(null, 1.0, resp)
    out = unit / np.conj(resp)[..., None]
    if np.any(null):
        ds = s / np.sum(np.abs(s) ** 2, axis=-1, keepdims=True)
        out = np.where(null[..., None], np.broadcast_to(ds, out.shape), out)
    return out


# ---------------------------------------------------------------------------
# filtering and the end-to-end pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BeamWeights:
    """Weights ``w`` shaped ``(K, 2)`` (fixed) or ``(T, K, 2)`` (per frame)."""

    w: np.ndarray
    lambda_max: np.ndarray | None = None
    degenerate: np.ndarray | None = None

    @classmethod
    def constant(cls, w, n_bins: int) -> "BeamWeights":
        return cls(np.broadcast_to(np.asarray(w, dtype=complex), (n_bins, 2)).copy())


def apply_weights(frames, weights: BeamWeights | np.ndarray) -> np.ndarray:
    """``y = w^H x`` per bin; returns a ``(T, K)`` mono spectrogram."""
    x = _frames_array(frames)
    if x.ndim == 2:
        x = x[:, None, :]
    w = weights.w if isinstance(weights, BeamWeights) else np.asarray(weights)
    if w.shape[-2] != x.shape[-1]:
        raise ValueError("bin count mismatch between weights and frames")
    if w.ndim == 2:
        w = w[None]
    return np.conj(w[..., 0]) * x[0] + np.conj(w[..., 1]) * x[1]


@dataclass(frozen=True)
class MaxSnrConfig:
    beta: float = 0.96
    edf_decay: float = EDF_DECAY
    max_beamwidth_deg: float = MAX_BEAMWIDTH_DEG
    fixed_beamwidth_deg: float | None = None
    grid_step_deg: float = DUAL_GRID_DEG
    band_hz: tuple[float, float] = BAND_HZ
    activity_gate: bool = True
    min_look_response: float = MIN_LOOK_RESPONSE
    mode: str = "offline"

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")
        if self.mode not in ("offline", "online"):
            raise ValueError("mode must be 'offline' or 'online'")


@dataclass
class PipelineResult:
    output: np.ndarray
    weights: BeamWeights
    doa: DoaEstimate
    theta_b: float
    beamwidth_deg: float
    diagnostics: list[dict] = field(default_factory=list)


def beamform_pipeline(frames: Spectrogram, d: float, config: MaxSnrConfig = MaxSnrConfig(),
                      c: float = SOUND_SPEED, theta_b: float | None = None) -> PipelineResult:
    """Localize, classify, weight, solve and filter a two-channel spectrogram.

    ``theta_b`` overrides the DOA used for classification and the
    distortionless constraint (e.g. 0 after pair alignment); the pair's own
    vote histogram still supplies the gap statistic.
    """
    x = frames.data
    if x.shape[0] != 2:
        raise ValueError("beamform_pipeline needs exactly two channels")
    f = frames.bin_hz
    votes = dual_votes(frames, d, c, config.grid_step_deg, config.band_hz, gate=config.activity_gate)
    doa = estimate_from_histogram(votes.sum(axis=0), dual_grid(config.grid_step_deg), circular=False)
    look = doa.azimuth_deg if theta_b is None else float(theta_b)
    s = steering_vector(f, d, look, c)

    def width(est: DoaEstimate) -> float:
        if config.fixed_beamwidth_deg is not None:
            return float(config.fixed_beamwidth_deg)
        return adaptive_beamwidth(est.gap, est.n_votes, config.max_beamwidth_deg, config.edf_decay)

    k1k = int(np.argmin(np.abs(f - 1000.0)))
    diagnostics = []
    if config.mode == "offline":
        bw = width(doa)
        part = classify_bins(x, look, bw, d, c, bin_hz=f)
        e_t, e_i = band_energies(x, part)
        w1, w2 = covariance_weights(e_t, e_i)
        xx = outer_products(x)
        V1 = _hermitize(np.mean(w1[:, None, None, None] * xx, axis=0))
        V2 = _hermitize(np.mean(w2[:, None, None, None] * xx, axis=0))
        res = solve_gevd(V1, V2)
        w = normalize_distortionless(res.w, s, on_null="fallback", min_response=config.min_look_response)
        weights = BeamWeights(w, res.lambda_max, res.degenerate)
        for t in range(x.shape[1]):
            diagnostics.append(dict(frame=t, doa_deg=look, gap=doa.gap, beamwidth_deg=bw,
                                    e_target=float(e_t[t]), e_interf=float(e_i[t]),
                                    lambda_max_1k=float(res.lambda_max[k1k])))
    else:
        state = AuxCovariances.zeros(x.shape[2], config.beta)
        # leaky running histogram with the covariance forgetting factor
        hist = np.zeros(votes.shape[1])
        grid = dual_grid(config.grid_step_deg)
        ws, lams, degs = [], [], []
        bw = config.max_beamwidth_deg
        for t in range(x.shape[1]):
            hist = config.beta * hist + votes[t]
            if hist.sum() >= 1:
                bw = width(estimate_from_histogram(hist, grid, circular=False))
            frame = x[:, t, :]
            part = classify_bins(frame, look, bw, d, c, bin_hz=f)
            e_t, e_i = band_energies(frame, part)
            state = update_covariances(state, frame, e_t, e_i)
            res = solve_gevd(state.V1, state.V2)
            ws.append(normalize_distortionless(res.w, s, on_null="fallback", min_response=config.min_look_response))
            lams.append(res.lambda_max)
            degs.append(res.degenerate)
            diagnostics.append(dict(frame=t, doa_deg=look, gap=doa.gap, beamwidth_deg=bw,
                                    e_target=e_t, e_interf=e_i, lambda_max_1k=float(res.lambda_max[k1k])))
        weights = BeamWeights(np.stack(ws), np.stack(lams), np.stack(degs))
    out = apply_weights(x, weights)
    return PipelineResult(out, weights, doa, look, bw, diagnostics)
