"""SINR measurement by shadow filtering, the delay-and-sum baseline and sweeps.

Output SINR is measured by applying the weights computed from the mixture to
the clean target and interference-plus-noise components separately.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dsp import Spectrogram, StftConfig, stft
from .geometry import ArrayGeometry, make_circular, pair_axis_angle, steering_vector
from .maxsnr import BeamWeights, MaxSnrConfig, apply_weights, beamform_pipeline
from .pairsel import alignment_weights, circular_beamform
from .scenesim import RenderedScene, Scene, render_scene, simulate

METHODS = ("maxsnr", "ds")
ARRAYS = ("dual", "circular")
SWEEP_DIRECTIONS = (30.0, 60.0, 90.0, 120.0, 150.0)
SWEEP_SEEDS = (0, 1, 2)
CSV_COLUMNS = ("source_deg", "interferer_deg", "input_sinr_db", "method", "array", "gain_db", "seed")


def shadow_sinr(weights: BeamWeights | np.ndarray, target_frames, interf_noise_frames) -> float:
    """Output SINR (dB) of fixed ``weights`` applied to the clean components.

    Returns ``inf`` when the filtered interference power is zero and ``nan``
    when both filtered powers are zero (a degenerate filter).
    """
    ys = apply_weights(target_frames, weights)
    yv = apply_weights(interf_noise_frames, weights)
    ps = float(np.sum(np.abs(ys) ** 2))
    pv = float(np.sum(np.abs(yv) ** 2))
    if pv == 0.0:
        return float("nan") if ps == 0.0 else float("inf")
    if ps == 0.0:
        return float("-inf")
    return 10.0 * np.log10(ps / pv)


def identity_weights(n_bins: int) -> BeamWeights:
    """Pass channel 0 through unchanged."""
    return BeamWeights.constant(np.array([1.0, 0.0], dtype=complex), n_bins)


def ds_baseline(frames, theta_hat_b: float, geometry: ArrayGeometry | float,
                pair_index: int = 0) -> BeamWeights:
    """Delay-and-sum weights ``s / ||s||^2`` steered to ``theta_hat_b``.

    ``geometry`` may be an :class:`ArrayGeometry` (the pair ``pair_index`` is
    used) or a bare spacing in metres.
    """
    if isinstance(geometry, ArrayGeometry):
        d, c = geometry.spacing(pair_index), geometry.sound_speed
    else:
        d, c = float(geometry), 343.0
    s = steering_vector(frames.bin_hz, d, theta_hat_b, c)
    w = s / np.sum(np.abs(s) ** 2, axis=-1, keepdims=True)
    return BeamWeights(w, np.zeros(len(frames.bin_hz)), np.zeros(len(frames.bin_hz), dtype=bool))


def comparator_pair(geometry: ArrayGeometry) -> int:
    """Index of the pair lying on the x-axis, the two-microphone comparator."""
    tilt = [min(pair_axis_angle(geometry, p) % 180.0, 180.0 - pair_axis_angle(geometry, p) % 180.0)
            for p in range(geometry.n_pairs)]
    return int(np.argmin(np.round(tilt, 9)))


@dataclass
class _Components:
    mixture: Spectrogram
    target: Spectrogram
    interference: Spectrogram


def _analyse(rendered: RenderedScene, stft_config: StftConfig) -> _Components:
    return _Components(stft(rendered.mixture, stft_config), stft(rendered.target_only, stft_config),
                       stft(rendered.interference_plus_noise_only, stft_config))


def _reference_sinr(comp: _Components) -> float:
    # identity filter on a duplicated channel 0
    return shadow_sinr(identity_weights(comp.target.n_bins), comp.target.select([0, 0]),
                       comp.interference.select([0, 0]))


def input_sinr(rendered: RenderedScene, stft_config: StftConfig = StftConfig()) -> float:
    """SINR at microphone 0 measured with the identity filter."""
    return _reference_sinr(_analyse(rendered, stft_config))


def _gains(comp: _Components, geometry: ArrayGeometry, methods: Iterable[str], arrays: Iterable[str],
           config: MaxSnrConfig) -> dict[tuple[str, str], float]:
    ref = _reference_sinr(comp)
    out = {}
    for array in arrays:
        if array == "dual":
            p = 0 if geometry.kind == "dual" else comparator_pair(geometry)
            a, b = geometry.pairs[p]
            pick = lambda spec: spec.select([a, b])
            mix = pick(comp.mixture)
            d = geometry.spacing(p)
            res = beamform_pipeline(mix, d, config, geometry.sound_speed)
            weights = {"maxsnr": res.weights,
                       "ds": ds_baseline(mix, res.theta_b, geometry, p)}
        elif array == "circular":
            if geometry.kind != "circular":
                raise ValueError("circular evaluation needs a circular geometry")
            cres = circular_beamform(comp.mixture, geometry, config)
            a, b = geometry.pairs[cres.pair_index]
            pick = lambda spec: spec.select([a, b])
            g = alignment_weights(comp.mixture.bin_hz, cres.pair_index, cres.theta_b_local, geometry)
            ds = ds_baseline(comp.mixture, 0.0, geometry, cres.pair_index)
            weights = {"maxsnr": cres.raw_weights,
                       "ds": BeamWeights(np.conj(g) * ds.w, ds.lambda_max, ds.degenerate)}
        else:
            raise ValueError(f"unknown array {array!r}; expected one of {ARRAYS}")
        for method in methods:
            if method not in weights:
                raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
            out[(method, array)] = shadow_sinr(weights[method], pick(comp.target), pick(comp.interference)) - ref
    return out


def sinr_gain(scene: Scene | RenderedScene, method: str = "maxsnr", array: str = "dual",
              config: MaxSnrConfig = MaxSnrConfig(), stft_config: StftConfig = StftConfig()) -> float:
    """SINR gain (dB) of ``method`` on ``array`` over the channel-0 input SINR.

    A circular scene evaluated with ``array="dual"`` uses the x-axis pair.
    """
    rendered = render_scene(scene) if isinstance(scene, Scene) else scene
    if rendered.geometry is None:
        raise ValueError("rendered scene carries no geometry")
    comp = _analyse(rendered, stft_config)
    return _gains(comp, rendered.geometry, [method], [array], config)[(method, array)]


@dataclass(frozen=True)
class SweepRow:
    source_deg: float
    interferer_deg: float
    input_sinr_db: float
    method: str
    array: str
    gain_db: float
    seed: int


@dataclass
class SinrReport:
    """Per-seed sweep rows plus the per-source and sweep averages."""

    rows: list[SweepRow] = field(default_factory=list)

    def pairs(self) -> list[tuple[float, float]]:
        return sorted({(r.source_deg, r.interferer_deg) for r in self.rows})

    def row_gain(self, source: float, interferer: float, method: str = "maxsnr", array: str = "dual",
                 input_sinr_db: float | None = None) -> float:
        """Seed-averaged gain of one (source, interferer) row."""
        g = [r.gain_db for r in self.rows if r.source_deg == source and r.interferer_deg == interferer
             and r.method == method and r.array == array
             and (input_sinr_db is None or r.input_sinr_db == input_sinr_db)]
        if not g:
            raise KeyError((source, interferer, method, array))
        return float(np.mean(g))

    def source_average(self, source: float, method: str = "maxsnr", array: str = "dual",
                       input_sinr_db: float | None = None) -> float:
        """Mean over the interferer rows of ``source``."""
        return float(np.mean([self.row_gain(s, i, method, array, input_sinr_db)
                              for s, i in self.pairs() if s == source]))

    def sweep_average(self, method: str = "maxsnr", array: str = "dual",
                      input_sinr_db: float | None = None) -> float:
        return float(np.mean([self.row_gain(s, i, method, array, input_sinr_db) for s, i in self.pairs()]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([f"{r.source_deg:g}", f"{r.interferer_deg:g}", f"{r.input_sinr_db:g}",
                             r.method, r.array, f"{r.gain_db:.4f}", r.seed])
        return buf.getvalue()

    def to_markdown(self, method: str = "maxsnr") -> str:
        """One block per source, one line per interferer, averages last."""
        arrays = sorted({r.array for r in self.rows if r.method == method}, key=ARRAYS.index)
        sinrs = sorted({r.input_sinr_db for r in self.rows})
        lines = []
        for sinr in sinrs:
            lines.append(f"Input SINR {sinr:g} dB, method {method}\n")
            lines.append("| Source | Noise | " + " | ".join(a.capitalize() for a in arrays) + " | Averaged |")
            lines.append("|---" * (3 + len(arrays)) + "|")
            for src in sorted({s for s, _ in self.pairs()}):
                avg = " vs. ".join(f"{self.source_average(src, method, a, sinr):.2f}" for a in arrays)
                for j, (s, i) in enumerate(p for p in self.pairs() if p[0] == src):
                    gains = " | ".join(f"{self.row_gain(s, i, method, a, sinr):.2f}" for a in arrays)
                    lines.append(f"| {s:g} | {i:g} | {gains} | {avg if j == 0 else ''} |")
            lines.append("")
        return "\n".join(lines)


def sweep_table(directions: Sequence[float] = SWEEP_DIRECTIONS, input_sinr_db: float | Sequence[float] = 6.0,
                seeds: Sequence[int] = SWEEP_SEEDS, geometry: ArrayGeometry | None = None,
                methods: Sequence[str] = METHODS, arrays: Sequence[str] = ARRAYS,
                interference_kind: str = "babble", duration_s: float = 3.0,
                min_separation_deg: float = 0.0, config: MaxSnrConfig = MaxSnrConfig(),
                stft_config: StftConfig = StftConfig()) -> SinrReport:
    """Run every ordered (source, interferer) pair of ``directions``.

    Each scene is rendered once on ``geometry`` (a six-microphone circle by
    default) and every requested method/array combination is measured on it.
    """
    directions = [float(d) for d in directions]
    if len(directions) < 2:
        raise ValueError("sweep needs at least two directions")
    sinrs = [float(input_sinr_db)] if np.isscalar(input_sinr_db) else [float(v) for v in input_sinr_db]
    geometry = make_circular(numbering="paired") if geometry is None else geometry
    report = SinrReport()
    for sinr, (s, i) in itertools.product(sinrs, itertools.permutations(directions, 2)):
        if abs(s - i) < min_separation_deg:
            continue
        for seed in seeds:
            rendered = simulate(geometry, s, [i], sinr, interference_kind, duration_s, seed=seed)
            gains = _gains(_analyse(rendered, stft_config), geometry, methods, arrays, config)
            for (method, array), g in gains.items():
                report.rows.append(SweepRow(s, i, sinr, method, array, float(g), int(seed)))
    return report
