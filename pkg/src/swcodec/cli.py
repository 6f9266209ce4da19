"""``swcodec`` command line: train, encode, decode, analyze, grad-check.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import torch

from . import analysis, dsp
from .bottleneck import TokenFormatError, read_tokens, write_tokens
from .config import SIDECAR, ConfigError, RunConfig, load_config, save_config
from .encoder import Encoder
from .nn.checkpoint import CheckpointError
from .training import Trainer, load_generator, run_training
from .verify import TOLERANCE, gradient_suite

log = logging.getLogger("swcodec")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _run_config(args) -> RunConfig:
    overrides = list(args.set or [])
    if getattr(args, "steps", None) is not None:
        overrides.append(f"train.steps={args.steps}")
    return load_config(args.config, overrides)


def _model_config_for(checkpoint: Path, config_path) -> RunConfig:
    """Explicit ``--config`` wins, then the run directory's sidecar, then defaults."""
    if config_path is not None:
        return load_config(config_path)
    sidecar = Path(checkpoint).parent / SIDECAR
    return load_config(sidecar if sidecar.is_file() else None)


def _load_codec(args):
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise UsageError(f"checkpoint not found: {ckpt}")
    cfg = _model_config_for(ckpt, args.config)
    codec, _ = load_generator(ckpt, cfg.model, cfg.fsq, cfg.mel)
    return codec, cfg


def _emit_report(report, output):
    text = json.dumps(report, indent=2, sort_keys=True)
    if output:
        Path(output).write_text(text + "\n")
    else:
        print(text)


# --- commands -----------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if cfg.manifest is None:
        raise ConfigError("paths.manifest is required for training")
    if not cfg.manifest.is_file():
        raise UsageError(f"manifest not found: {cfg.manifest}")
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, cfg.run_dir / SIDECAR)
    log.info("training for %d steps into %s", cfg.train.steps, cfg.run_dir)
    trainer = Trainer(cfg.model, cfg.train, cfg.fsq, cfg.mel)
    resume = Path(args.resume) if args.resume else None
    if resume is not None and not resume.is_file():
        raise UsageError(f"checkpoint not found: {resume}")
    run_training(trainer, cfg.manifest, cfg.run_dir, emit=print, resume=resume)
    return EXIT_OK


def cmd_encode(args) -> int:
    codec, cfg = _load_codec(args)
    audio = dsp.read_wav(args.input)
    grid = codec.encode_audio(audio)
    write_tokens(args.output, grid, cfg.fsq)
    log.info("%d frames x %d groups at %.1f Hz", grid.frames, cfg.fsq.n_groups, grid.frame_rate)
    return EXIT_OK


def cmd_decode(args) -> int:
    codec, cfg = _load_codec(args)
    grid, spec = read_tokens(args.input)
    if spec != cfg.fsq:
        raise UsageError(f"{args.input}: token spec {spec} does not match the model's {cfg.fsq}")
    mel = codec.decode_codes(grid)
    dsp.write_wav(args.output, codec.synthesize(mel, args.iters))
    return EXIT_OK


def _attention_report(args, cfg: RunConfig) -> dict:
    audio = dsp.read_wav(args.input) if args.input else analysis.repeated_phrase_fixture()
    mel = torch.from_numpy(dsp.log_mel(audio, cfg.mel).values).float()[None]
    report = {}
    for key, flag in (("pe_on", True), ("pe_off", False)):
        torch.manual_seed(cfg.train.seed)
        enc = Encoder(replace(cfg.model, use_abs_pe=flag)).eval()
        with torch.no_grad():
            attn = enc(mel).attn
        report[key] = [analysis.diag_dominance(attn, i) for i in range(len(attn))]
    if args.checkpoint:
        codec, _ = _load_codec(args)
        with torch.no_grad():
            attn = codec.encoder(mel).attn
        report["checkpoint"] = [analysis.diag_dominance(attn, i) for i in range(len(attn))]
    return report


def _probe_dataset(args, frame_rate):
    if not args.manifest:
        return analysis.synthetic_pitch_corpus(frame_rate=frame_rate, seed=args.seed)
    manifest = Path(args.manifest)
    if not manifest.is_file():
        raise UsageError(f"manifest not found: {manifest}")
    data = []
    for n, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise UsageError(f"{manifest}:{n}: expected 'wav_path f0_path'")
        wav, f0 = (p if Path(p).is_absolute() else manifest.parent / p for p in parts)
        data.append((dsp.read_wav(wav), analysis.resample_track(analysis.read_f0(f0), frame_rate)))
    return data


def _f0probe_report(args, cfg: RunConfig) -> dict:
    frame_rate = cfg.mel.frame_rate / 2
    dataset = _probe_dataset(args, frame_rate)
    simplified = replace(cfg.model, use_stem_gelu=False, use_abs_pe=False)
    report = {}
    for key, model_cfg in (("simplified", simplified), ("standard", simplified.standard())):
        torch.manual_seed(cfg.train.seed)
        feats = analysis.encoder_layer_features(Encoder(model_cfg).eval())
        report[key] = [asdict(r) for r in analysis.probe_f0(feats, dataset, args.lam)]
    if args.checkpoint:
        codec, _ = _load_codec(args)
        feats = analysis.encoder_layer_features(codec.encoder)
        report["checkpoint"] = [asdict(r) for r in analysis.probe_f0(feats, dataset, args.lam)]
    return report


def cmd_analyze(args) -> int:
    if args.mode == "stoi":
        if not (args.ref and args.deg):
            raise UsageError("stoi mode needs --ref and --deg")
        report = {"stoi": analysis.stoi(dsp.read_wav(args.ref), dsp.read_wav(args.deg))}
    else:
        cfg = _model_config_for(Path(args.checkpoint), args.config) if args.checkpoint else load_config(args.config)
        builder = _attention_report if args.mode == "attention" else _f0probe_report
        report = builder(args, cfg)
    _emit_report(report, args.output)
    return EXIT_OK


def cmd_grad_check(args) -> int:
    results = gradient_suite(range(args.seeds), args.op or None)
    worst = {}
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.error)
    for name, err in worst.items():
        print(f"{'PASS' if err <= TOLERANCE else 'FAIL'} {name:<22} max_rel_err={err:.3e}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swcodec", description="Low-bitrate speech codec toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train the codec")
    t.add_argument("--config", help="YAML run configuration")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. train.steps=100")
    t.add_argument("--steps", type=int, help="shorthand for --set train.steps=N")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.set_defaults(func=cmd_train)

    for name, func, what in (("encode", cmd_encode, "WAV -> SWTOK"), ("decode", cmd_decode, "SWTOK -> WAV")):
        c = sub.add_parser(name, help=what)
        c.add_argument("--checkpoint", required=True)
        c.add_argument("--config", help="run configuration (default: config.yaml next to the checkpoint)")
        c.add_argument("input")
        c.add_argument("output")
        if name == "decode":
            c.add_argument("--iters", type=int, default=64, help="Griffin-Lim iterations")
        c.set_defaults(func=func)

    a = sub.add_parser("analyze", help="attention, F0 probing, or STOI reports")
    a.add_argument("mode", choices=("attention", "f0probe", "stoi"))
    a.add_argument("--checkpoint")
    a.add_argument("--config")
    a.add_argument("--input", help="attention: WAV to analyze (default: repeated-phrase fixture)")
    a.add_argument("--manifest", help="f0probe: lines of 'wav_path f0_path' (default: synthetic corpus)")
    a.add_argument("--lam", type=float, default=1.0, help="ridge penalty")
    a.add_argument("--seed", type=int, default=0, help="synthetic corpus seed")
    a.add_argument("--ref")
    a.add_argument("--deg")
    a.add_argument("--output", help="report path (default: stdout)")
    a.set_defaults(func=cmd_analyze)

    g = sub.add_parser("grad-check", help="finite-difference gradient suite")
    g.add_argument("--seeds", type=int, default=20)
    g.add_argument("--op", action="append", help="restrict to named op(s)")
    g.set_defaults(func=cmd_grad_check)
    return p


USAGE_ERRORS = (UsageError, ConfigError, CheckpointError, TokenFormatError, FileNotFoundError, ValueError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "op", None):
        from .verify import CASES

        unknown = sorted(set(args.op) - set(CASES))
        if unknown:
            print(f"error: unknown op(s): {', '.join(unknown)}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime abort
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
