from __future__ import annotations

import math

import torch

BETAS = (0.8, 0.99)
WEIGHT_DECAY = 0.01


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient in parameter '{name}'")
        self.name = name


def cosine_lr(step: int, total: int, warmup: int, peak: float) -> float:
    """Linear warmup to ``peak`` then cosine decay to zero at ``total``."""
    step = min(max(step, 0), total)
    if step < warmup:
        return peak * step / warmup
    progress = (step - warmup) / (total - warmup)
    return peak * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Decoupled-weight-decay Adam over named parameters.

    Thin layer over :class:`torch.optim.AdamW` that refuses non-finite
    gradients (naming the parameter) and exposes its moments as named
    tensors for checkpointing.
    """

    def __init__(self, named_params, lr=1e-4, betas=BETAS, weight_decay=WEIGHT_DECAY, eps=1e-8):
        named = [(n, p) for n, p in named_params if p.requires_grad]
        self.names = [n for n, _ in named]
        self.params = [p for _, p in named]
        self._opt = torch.optim.AdamW(
            self.params, lr=lr, betas=betas, weight_decay=weight_decay, eps=eps, foreach=False
        )
        self.step_count = 0

    @property
    def lr(self) -> float:
        return self._opt.param_groups[0]["lr"]

    @lr.setter
    def lr(self, value: float):
        for group in self._opt.param_groups:
            group["lr"] = value

    def zero_grad(self):
        self._opt.zero_grad(set_to_none=True)

    def step(self):
        for name, p in zip(self.names, self.params):
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NonFiniteGradientError(name)
        self._opt.step()
        self.step_count += 1

    def state_records(self, prefix: str) -> dict:
        records = {f"{prefix}step": torch.tensor([float(self.step_count)])}
        for name, p in zip(self.names, self.params):
            state = self._opt.state.get(p)
            if not state:
                continue
            records[f"{prefix}exp_avg.{name}"] = state["exp_avg"]
            records[f"{prefix}exp_avg_sq.{name}"] = state["exp_avg_sq"]
            records[f"{prefix}pstep.{name}"] = torch.as_tensor(state["step"]).reshape(1)
        return records

    def check_state_records(self, records: dict, prefix: str):
        from .checkpoint import CheckpointError

        if f"{prefix}step" not in records:
            raise CheckpointError(f"missing optimizer state '{prefix}step'")
        for name, p in zip(self.names, self.params):
            for kind in ("exp_avg", "exp_avg_sq"):
                value = records.get(f"{prefix}{kind}.{name}")
                if value is not None and tuple(value.shape) != tuple(p.shape):
                    raise CheckpointError(f"shape mismatch for '{prefix}{kind}.{name}'")

    def load_state_records(self, records: dict, prefix: str):
        self.check_state_records(records, prefix)
        self.step_count = int(records[f"{prefix}step"].item())
        for name, p in zip(self.names, self.params):
            key = f"{prefix}exp_avg.{name}"
            if key not in records:
                self._opt.state.pop(p, None)
                continue
            self._opt.state[p] = {
                "step": records[f"{prefix}pstep.{name}"].reshape(()).to(torch.float32).clone(),
                "exp_avg": records[key].to(p.dtype).clone(),
                "exp_avg_sq": records[f"{prefix}exp_avg_sq.{name}"].to(p.dtype).clone(),
            }
