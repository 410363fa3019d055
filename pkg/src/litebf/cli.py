"""Command-line entry point: ``simulate``, ``localize``, ``beamform`` and ``evaluate``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ConfigError, RunConfig, from_mapping, load_config, parse_overrides
from .dsp import MultichannelSignal, WavFormatError, istft, read_wav, stft, write_wav
from .evaluation import sweep_table
from .maxsnr import beamform_pipeline
from .pairsel import circular_beamform
from .scenesim import DegenerateSceneError, simulate
from .ssl import NoVotesError, circular_doa, dual_doa

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

DIAGNOSTIC_COLUMNS = ("frame", "doa_deg", "gap", "beamwidth_deg", "e_target", "e_interf",
                      "lambda_max_1k", "selected_pair")


class UsageError(Exception):
    pass


def _atomic_write(path: Path, write: Callable[[str], None]) -> None:
    """Run ``write(tmp_path)`` then rename the temp file onto ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: Path, text: str) -> None:
    def write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    _atomic_write(path, write)


def _write_wav(path: Path, signal: MultichannelSignal, encoding: str) -> None:
    _atomic_write(path, lambda tmp: write_wav(tmp, signal, encoding))


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _read_input(path: str, cfg: RunConfig) -> MultichannelSignal:
    try:
        signal = read_wav(path)
    except FileNotFoundError as exc:
        raise UsageError(f"input file not found: {path}") from exc
    geometry = cfg.geometry()
    if signal.n_channels != geometry.n_mics:
        raise UsageError(f"channel mismatch: {path} has {signal.n_channels} channels, "
                         f"the {cfg.array} geometry expects {geometry.n_mics}")
    return signal


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, args) -> int:
    geometry = cfg.geometry()
    scene = simulate(geometry, cfg.target_az, cfg.interferer_az, cfg.input_sinr_db,
                     cfg.interference_kind, cfg.duration_s, cfg.sample_rate, cfg.seed,
                     cfg.diffuse_noise_db)
    out = Path(cfg.out_dir)
    _write_wav(out / "mixture.wav", scene.mixture, cfg.wav_encoding)
    _write_wav(out / "target.wav", scene.target_only, cfg.wav_encoding)
    _write_wav(out / "interference.wav", scene.interference_plus_noise_only, cfg.wav_encoding)
    manifest = {
        "files": {"mixture": "mixture.wav", "target": "target.wav", "interference": "interference.wav"},
        "n_channels": scene.mixture.n_channels,
        "n_samples": len(scene.mixture),
        "mic_positions": geometry.mic_positions.tolist(),
        "mic_labels": list(geometry.labels),
        "config": cfg.to_dict(),
    }
    _write_text(out / "scene.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'mixture.wav'}, target.wav, interference.wav, scene.json")
    return EXIT_OK


def cmd_localize(cfg: RunConfig, args) -> int:
    signal = _read_input(args.input, cfg)
    frames = stft(signal, cfg.stft_config())
    geometry = cfg.geometry()
    band = (cfg.band_lo_hz, cfg.band_hi_hz)
    if geometry.kind == "circular":
        est = circular_doa(frames, geometry, cfg.circular_grid_deg, band, cfg.activity_gate)
    else:
        est = dual_doa(frames, geometry.spacing(), geometry.sound_speed, cfg.dual_grid_deg, band,
                       gate=cfg.activity_gate)
    header = ("azimuth_deg", "peak_count", "second_count", "gap", "n_votes")
    sys.stdout.write(_csv_text(header, [(f"{est.azimuth_deg:g}", est.peak_count, est.second_count,
                                         est.gap, est.n_votes)]))
    if args.histogram:
        rows = [(f"{a:g}", int(round(c))) for a, c in zip(est.grid_deg, est.histogram)]
        _write_text(Path(args.histogram), _csv_text(("angle_deg", "count"), rows))
    return EXIT_OK


def cmd_beamform(cfg: RunConfig, args) -> int:
    signal = _read_input(args.input, cfg)
    stft_cfg = cfg.stft_config()
    frames = stft(signal, stft_cfg)
    geometry = cfg.geometry()
    config = cfg.maxsnr_config()
    if geometry.kind == "circular":
        result = circular_beamform(frames, geometry, config, cfg.circular_grid_deg).pipeline
    else:
        result = beamform_pipeline(frames, geometry.spacing(), config, geometry.sound_speed)
    mono = istft(result.output, stft_cfg, length=len(signal))
    out = Path(cfg.out_dir)
    out_wav = Path(args.output) if args.output else out / "enhanced.wav"
    _write_wav(out_wav, MultichannelSignal(mono[None, :], signal.sample_rate), cfg.wav_encoding)
    rows = [[row.get(k, "") if not isinstance(row.get(k), float) else f"{row[k]:.6g}"
             for k in DIAGNOSTIC_COLUMNS] for row in result.diagnostics]
    _write_text(out / "diagnostics.csv", _csv_text(DIAGNOSTIC_COLUMNS, rows))
    print(f"wrote {out_wav} and {out / 'diagnostics.csv'}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    geometry = cfg.geometry()
    arrays = ("dual", "circular") if geometry.kind == "circular" else ("dual",)
    report = sweep_table(cfg.directions, cfg.sweep_sinr_db, cfg.seeds, geometry, arrays=arrays,
                         interference_kind=cfg.interference_kind, duration_s=cfg.duration_s,
                         config=cfg.maxsnr_config(), stft_config=cfg.stft_config())
    out = Path(cfg.out_dir)
    _write_text(out / "report.csv", report.to_csv())
    md = report.to_markdown("maxsnr") + "\n" + report.to_markdown("ds")
    _write_text(out / "report.md", md)
    print(f"wrote {out / 'report.csv'} and {out / 'report.md'}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "localize": cmd_localize, "beamform": cmd_beamform,
            "evaluate": cmd_evaluate}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides out_dir)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; repeatable")
    parser = _Parser(prog="litebf", description="Two-microphone max-SNR beamforming toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="render a synthetic scene to WAV files")
    p = sub.add_parser("localize", parents=[common], help="estimate the DOA of a WAV file")
    p.add_argument("input")
    p.add_argument("--histogram", help="write the vote histogram as CSV")
    p = sub.add_parser("beamform", parents=[common], help="enhance a WAV file")
    p.add_argument("input")
    p.add_argument("--output", help="output WAV (default: OUT/enhanced.wav)")
    sub.add_parser("evaluate", parents=[common], help="run the direction sweep")
    return parser


def resolve_config(args) -> RunConfig:
    """Precedence: flag > config file > defaults."""
    cfg = load_config(args.config)
    overrides: dict = parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    return from_mapping(overrides, cfg) if overrides else cfg


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoVotesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (WavFormatError, DegenerateSceneError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
