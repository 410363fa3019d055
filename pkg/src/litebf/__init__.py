"""Lite two-microphone max-SNR beamforming with DOA-driven covariance estimation."""

from .dsp import MultichannelSignal, Spectrogram, StftConfig, istft, read_wav, stft, write_wav
from .geometry import ArrayGeometry, make_circular, make_dual
from .maxsnr import MaxSnrConfig, beamform_pipeline, solve_gevd
from .pairsel import align_pair, circular_beamform, select_pair
from .scenesim import simulate
from .ssl import circular_doa, dual_doa

__all__ = [
    "ArrayGeometry",
    "MaxSnrConfig",
    "MultichannelSignal",
    "Spectrogram",
    "StftConfig",
    "align_pair",
    "beamform_pipeline",
    "circular_beamform",
    "circular_doa",
    "dual_doa",
    "istft",
    "make_circular",
    "make_dual",
    "read_wav",
    "select_pair",
    "simulate",
    "solve_gevd",
    "stft",
    "write_wav",
]
