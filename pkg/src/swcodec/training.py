"""Single-stage GAN training: data stream, train step, checkpoints, run loop."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import torch

from . import dsp
from .bottleneck import FSQSpec
from .encoder import ModelConfig
from .losses import (
    DiscriminatorBank,
    LossWeights,
    disc_loss,
    feat_match_loss,
    gen_adv_loss,
    recon_loss,
    total_gen_loss,
)
from .model import Codec
from .nn import AdamW, cosine_lr
from .nn.checkpoint import (
    check_module_records,
    load_module_records,
    module_records,
    read_checkpoint,
    write_checkpoint,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500_000
    batch_size: int = 32
    grad_accum: int = 3
    segment_seconds: float = 4.0
    peak_lr: float = 1e-4
    warmup: int = 5000
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    freeze_encoder: bool = False
    gl_iters: int = 8
    checkpoint_every: int = 500

    def __post_init__(self):
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        if self.steps <= self.warmup:
            raise ValueError(f"steps ({self.steps}) must exceed warmup ({self.warmup})")
        if self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("batch_size and grad_accum must be >= 1")
        if self.segment_seconds <= 0 or self.segment_seconds > 30:
            raise ValueError("segment_seconds must be in (0, 30]")
        if self.gl_iters < 1:
            raise ValueError("gl_iters must be >= 1")

    @classmethod
    def desk(cls, **overrides):
        base = dict(steps=2000, warmup=100, batch_size=4, grad_accum=1)
        return cls(**{**base, **overrides})

    def segment_samples(self, sample_rate: int = dsp.SAMPLE_RATE) -> int:
        return int(round(self.segment_seconds * sample_rate))


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step, term):
        super().__init__(f"non-finite loss term '{term}' at step {step}")
        self.step, self.term = step, term


# --- data -----------------------------------------------------------------------


@dataclass
class Batch:
    audio: torch.Tensor  # (B, samples)
    padded: list  # per item: source shorter than the segment and zero-padded
    sources: list  # per item: index into the corpus


def read_manifest(path) -> list[Path]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    entries = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            p = Path(line)
            entries.append(p if p.is_absolute() else path.parent / p)
    if not entries:
        raise ValueError(f"manifest {path} lists no files")
    return entries


def load_corpus(paths) -> list[np.ndarray]:
    clips = []
    for p in paths:
        try:
            clips.append(dsp.read_wav(p).samples.astype(np.float32))
        except FileNotFoundError as exc:
            raise ValueError(f"{p}: unreadable ({exc})") from exc
    return clips


def batch_at(clips, cfg: TrainConfig, step: int, micro: int = 0) -> Batch:
    """The ``micro``-th batch of ``step``; a pure function of (seed, step, micro)."""
    rng = np.random.default_rng([cfg.seed, step, micro])
    n = cfg.segment_samples()
    out = np.zeros((cfg.batch_size, n), dtype=np.float32)
    padded, sources = [], []
    for i in range(cfg.batch_size):
        j = int(rng.integers(len(clips)))
        clip = clips[j]
        if len(clip) >= n:
            start = int(rng.integers(len(clip) - n + 1))
            out[i] = clip[start : start + n]
            padded.append(False)
        else:
            out[i, : len(clip)] = clip
            padded.append(True)
        sources.append(j)
    return Batch(torch.from_numpy(out), padded, sources)


def make_batches(manifest, cfg: TrainConfig, start_step: int = 0) -> Iterator[list[Batch]]:
    """Yield, per step, the ``grad_accum`` micro-batches for that step."""
    clips = load_corpus(read_manifest(manifest))
    step = start_step
    while True:
        batches = [batch_at(clips, cfg, step, m) for m in range(cfg.grad_accum)]
        for b in batches:
            if any(b.padded):
                log.warning("step %d: %d clip(s) shorter than the segment were zero-padded", step, sum(b.padded))
        yield batches
        step += 1


# --- trainer ----------------------------------------------------------------------


class Trainer:
    def __init__(
        self,
        model_cfg: ModelConfig = ModelConfig(),
        train_cfg: TrainConfig | None = None,
        fsq: FSQSpec = FSQSpec(),
        mel_cfg: dsp.MelConfig | None = None,
        dtype=torch.float32,
    ):
        self.train_cfg = train_cfg or TrainConfig.desk()
        torch.manual_seed(self.train_cfg.seed)
        self.gen = Codec(model_cfg, fsq, mel_cfg).to(dtype)
        self.disc = DiscriminatorBank().to(dtype)
        self.gen.set_encoder_frozen(model_cfg.frozen_encoder or self.train_cfg.freeze_encoder)
        self.opt_g = AdamW(self.gen.named_parameters(), lr=self.train_cfg.peak_lr)
        self.opt_d = AdamW(self.disc.named_parameters(), lr=self.train_cfg.peak_lr)
        self.dtype = dtype
        self.step = 0

    def lr_at(self, step: int) -> float:
        c = self.train_cfg
        return cosine_lr(step, c.steps, c.warmup, c.peak_lr)

    def _set_disc_trainable(self, flag: bool):
        for p in self.disc.parameters():
            p.requires_grad_(flag)

    def train_step(self, micro_batches) -> dict:
        """One optimizer step for both networks over ``grad_accum`` micro-batches.

        Order: generator forward, discriminator update on detached output,
        then generator update against the refreshed discriminator.
        """
        cfg, w = self.train_cfg, self.train_cfg.weights
        lr = self.lr_at(self.step)
        self.opt_g.lr = self.opt_d.lr = lr
        n_micro = len(micro_batches)

        pairs = []
        for mb in micro_batches:
            x = (mb.audio if isinstance(mb, Batch) else mb).to(self.dtype)
            out = self.gen(x)
            x_hat = self.gen.synthesize_batch(out.mel_hat, x.shape[-1], cfg.gl_iters)
            pairs.append((x, x_hat))

        d_total = 0.0
        if w.uses_gan:
            self._set_disc_trainable(True)
            self.opt_d.zero_grad()
            for x, x_hat in pairs:
                ld = disc_loss(self.disc(x), self.disc(x_hat.detach()))
                self._check(ld, "disc")
                (ld / n_micro).backward()
                d_total += float(ld.detach()) / n_micro
            self.opt_d.step()

        self._set_disc_trainable(False)
        self.opt_g.zero_grad()
        sums = {"recon": 0.0, "adv": 0.0, "feat": 0.0, "total": 0.0}
        for x, x_hat in pairs:
            recon = recon_loss(x, x_hat)
            if w.uses_gan:
                fake = self.disc(x_hat)
                with torch.no_grad():
                    real = self.disc(x)
                adv, feat = gen_adv_loss(fake), feat_match_loss(real, fake, w.eps)
            else:
                adv = feat = torch.zeros((), dtype=self.dtype)
            for name, term in (("recon", recon), ("adv", adv), ("feat", feat)):
                self._check(term, name)
            total, parts = total_gen_loss(w, recon, adv, feat)
            self._check(total, "total")
            (total / n_micro).backward()
            for k in sums:
                sums[k] += parts[k] / n_micro
        self.opt_g.step()
        self._set_disc_trainable(True)

        metrics = {"step": self.step, "lr": lr, **sums, "disc": d_total}
        self.step += 1
        return metrics

    def _check(self, value, term):
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise NonFiniteLossError(self.step, term)

    # --- persistence ---

    def state_records(self) -> dict:
        records = {}
        records.update(module_records(self.gen, "gen."))
        records.update(module_records(self.disc, "disc."))
        records.update(self.opt_g.state_records("opt_g."))
        records.update(self.opt_d.state_records("opt_d."))
        return records

    def save(self, path):
        write_checkpoint(path, self.step, self.state_records())

    def load(self, path):
        """Restore from ``path``; every record is validated before live state changes."""
        step, records = read_checkpoint(path)
        gen_state = check_module_records(self.gen, records, "gen.")
        disc_state = check_module_records(self.disc, records, "disc.")
        self.opt_g.check_state_records(records, "opt_g.")
        self.opt_d.check_state_records(records, "opt_d.")
        self.gen.load_state_dict(gen_state)
        self.disc.load_state_dict(disc_state)
        self.opt_g.load_state_records(records, "opt_g.")
        self.opt_d.load_state_records(records, "opt_d.")
        self.step = step


def load_generator(path, model_cfg: ModelConfig, fsq: FSQSpec = FSQSpec(), mel_cfg=None) -> tuple[Codec, int]:
    """Generator weights only, for encode/decode/analysis."""
    step, records = read_checkpoint(path)
    codec = Codec(model_cfg, fsq, mel_cfg)
    load_module_records(codec, records, "gen.")
    codec.eval()
    return codec, step


# --- run loop -----------------------------------------------------------------------


def checkpoint_name(step: int) -> str:
    return f"step_{step:07d}.swckpt"


def run_training(trainer: Trainer, manifest, run_dir, emit=print, resume: Path | None = None) -> list[dict]:
    """Train to ``train_cfg.steps``; metrics go to ``emit`` and ``run_dir/metrics.jsonl``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg = trainer.train_cfg
    if resume is not None:
        trainer.load(resume)
    stream = make_batches(manifest, cfg, start_step=trainer.step)
    history = []
    with open(run_dir / "metrics.jsonl", "a") as fh:
        while trainer.step < cfg.steps:
            metrics = trainer.train_step(next(stream))
            line = json.dumps(metrics, sort_keys=True)
            fh.write(line + "\n")
            fh.flush()
            emit(line)
            history.append(metrics)
            if trainer.step % cfg.checkpoint_every == 0 or trainer.step == cfg.steps:
                trainer.save(run_dir / checkpoint_name(trainer.step))
    return history


def relative_drop(values, window: int = 10) -> float:
    """Fractional decrease of the final ``window``-mean relative to the first ``window``-mean."""
    v = np.asarray(values, dtype=np.float64)
    head, tail = v[:window].mean(), v[-window:].mean()
    return float((head - tail) / head) if head else math.nan
