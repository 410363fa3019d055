"""Flat run configuration for the command-line tools.

A config file is a single YAML or JSON mapping whose keys are the fields of
:class:`RunConfig`.  Unknown keys and out-of-range values are rejected with
a message naming the offending field.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping

import yaml

from .dsp import StftConfig
from .geometry import ArrayGeometry, make_circular, make_dual
from .maxsnr import MaxSnrConfig
from .scenesim import INTERFERENCE_KINDS


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    # geometry
    array: str = "dual"
    n_mics: int = 6
    spacing: float = 0.085
    numbering: str = "paired"
    sound_speed: float = 343.0
    # stft
    sample_rate: int = 16000
    fft_size: int = 512
    hop: int = 256
    window: str = "sqrt_hann"
    # ssl
    dual_grid_deg: float = 5.0
    circular_grid_deg: float = 2.0
    band_lo_hz: float = 100.0
    band_hi_hz: float = 2000.0
    activity_gate: bool = True
    # maxsnr
    beta: float = 0.96
    edf_decay: float = 3.0
    max_beamwidth_deg: float = 60.0
    fixed_beamwidth_deg: float | None = None
    mode: str = "offline"
    # scene
    target_az: float = 90.0
    interferer_az: list = field(default_factory=lambda: [30.0])
    input_sinr_db: float = 6.0
    interference_kind: str = "babble"
    duration_s: float = 3.0
    diffuse_noise_db: float | None = -30.0
    seed: int = 0
    # sweep
    directions: list = field(default_factory=lambda: [30.0, 60.0, 90.0, 120.0, 150.0])
    sweep_sinr_db: list = field(default_factory=lambda: [6.0])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    # output
    out_dir: str = "out"
    wav_encoding: str = "float32"

    def validate(self) -> "RunConfig":
        _choice("array", self.array, ("dual", "circular"))
        _choice("numbering", self.numbering, ("paired", "sequential"))
        _choice("window", self.window, ("sqrt_hann", "hann", "rect"))
        _choice("mode", self.mode, ("offline", "online"))
        _choice("interference_kind", self.interference_kind, INTERFERENCE_KINDS)
        _choice("wav_encoding", self.wav_encoding, ("float32", "pcm16"))
        if self.array == "circular" and (self.n_mics < 4 or self.n_mics % 2):
            raise ConfigError("n_mics", "circular array needs an even count >= 4")
        _positive("spacing", self.spacing)
        _positive("sound_speed", self.sound_speed)
        _positive("sample_rate", self.sample_rate)
        _positive("fft_size", self.fft_size)
        _positive("hop", self.hop)
        _positive("dual_grid_deg", self.dual_grid_deg)
        _positive("circular_grid_deg", self.circular_grid_deg)
        _positive("duration_s", self.duration_s)
        _positive("max_beamwidth_deg", self.max_beamwidth_deg)
        _positive("edf_decay", self.edf_decay)
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta", f"must be in [0, 1], got {self.beta}")
        if not 0.0 <= self.band_lo_hz < self.band_hi_hz:
            raise ConfigError("band_hi_hz", "band must satisfy 0 <= band_lo_hz < band_hi_hz")
        if self.fixed_beamwidth_deg is not None and not 0.0 < self.fixed_beamwidth_deg <= 180.0:
            raise ConfigError("fixed_beamwidth_deg", "must be in (0, 180]")
        if not 0.0 <= self.target_az < 360.0:
            raise ConfigError("target_az", "azimuth must be in [0, 360)")
        for az in self.interferer_az:
            if not 0.0 <= float(az) < 360.0:
                raise ConfigError("interferer_az", "azimuths must be in [0, 360)")
        if not self.directions:
            raise ConfigError("directions", "direction list is empty")
        if len(self.directions) < 2:
            raise ConfigError("directions", "sweep needs at least two directions")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed required")
        if not self.sweep_sinr_db:
            raise ConfigError("sweep_sinr_db", "at least one input SINR required")
        try:
            self.stft_config()
        except ValueError as exc:
            raise ConfigError("hop", str(exc)) from exc
        return self

    def geometry(self) -> ArrayGeometry:
        if self.array == "dual":
            return make_dual(self.spacing, self.sound_speed)
        return make_circular(self.n_mics, self.spacing, self.sound_speed, self.numbering)

    def stft_config(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop, self.window)

    def maxsnr_config(self) -> MaxSnrConfig:
        return MaxSnrConfig(
            beta=self.beta,
            edf_decay=self.edf_decay,
            max_beamwidth_deg=self.max_beamwidth_deg,
            fixed_beamwidth_deg=self.fixed_beamwidth_deg,
            grid_step_deg=self.dual_grid_deg,
            band_hz=(self.band_lo_hz, self.band_hi_hz),
            activity_gate=self.activity_gate,
            mode=self.mode,
        )

    def to_dict(self) -> dict:
        return asdict(self)


def _choice(name: str, value, allowed) -> None:
    if value not in allowed:
        raise ConfigError(name, f"must be one of {', '.join(map(str, allowed))}; got {value!r}")


def _positive(name: str, value) -> None:
    if not value > 0:
        raise ConfigError(name, f"must be positive, got {value}")


_FIELDS = {f.name: f for f in fields(RunConfig)}
_LIST_FIELDS = {"interferer_az", "directions", "sweep_sinr_db", "seeds"}
_OPTIONAL = {"fixed_beamwidth_deg", "diffuse_noise_db"}


def _coerce(name: str, value: Any) -> Any:
    default = _FIELDS[name].default
    if name in _LIST_FIELDS:
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        if not isinstance(value, (list, tuple)):
            value = [value]
        cast = int if name == "seeds" else float
        try:
            return [cast(v) for v in value]
        except (TypeError, ValueError) as exc:
            raise ConfigError(name, f"expected a list of numbers, got {value!r}") from exc
    if name in _OPTIONAL:
        if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "")):
            return None
        kind = float
    elif isinstance(default, bool):
        if isinstance(value, str):
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(name, f"expected a boolean, got {value!r}")
            return low in ("true", "1", "yes")
        return bool(value)
    else:
        kind = type(default)
    if kind is str:
        return str(value)
    try:
        if kind is int:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from exc


def from_mapping(data: Mapping[str, Any], base: RunConfig | None = None) -> RunConfig:
    """Build a validated config from ``data`` layered over ``base``."""
    values = (base or RunConfig()).to_dict()
    for key, value in data.items():
        if key not in _FIELDS:
            raise ConfigError(key, "unknown configuration key")
        values[key] = _coerce(key, value)
    return RunConfig(**values).validate()


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Read a YAML or JSON config file (``None`` gives the defaults)."""
    if path is None:
        return RunConfig().validate()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    try:
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError("config", "top level must be a mapping of keys to values")
    return from_mapping(data)


def parse_overrides(items) -> dict[str, str]:
    """``["key=value", ...]`` to a dict."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out
