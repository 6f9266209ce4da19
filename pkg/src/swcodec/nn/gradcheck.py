"""Reverse-mode vs central-difference gradient comparison."""

from __future__ import annotations

import numpy as np
import torch


def grad_check(fn, inputs, eps: float = 1e-6, n_coords: int | None = None, seed: int = 0) -> float:
    """Maximum relative gradient error of scalar ``fn(*inputs)``.

    The error for each checked coordinate is ``|g_ad - g_fd|`` divided by the
    largest finite-difference gradient magnitude seen over the checked
    coordinates, so near-zero components do not blow the ratio up.
    ``n_coords`` limits the number of randomly chosen coordinates per input.
    Inputs must be float64 leaf tensors with ``requires_grad``.
    """
    inputs = list(inputs)
    for x in inputs:
        if x.dtype != torch.float64:
            raise TypeError("grad_check runs in 64-bit; pass float64 tensors")
    out = fn(*inputs)
    grads = torch.autograd.grad(out, inputs, allow_unused=True)
    rng = np.random.default_rng(seed)
    analytic, numeric = [], []
    with torch.no_grad():
        for x, g in zip(inputs, grads):
            g = torch.zeros_like(x) if g is None else g
            flat = x.view(-1)
            idx = np.arange(flat.numel())
            if n_coords is not None and n_coords < idx.size:
                idx = rng.choice(idx, n_coords, replace=False)
            for i in idx:
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = fn(*inputs).item()
                flat[i] = orig - eps
                lo = fn(*inputs).item()
                flat[i] = orig
                numeric.append((hi - lo) / (2 * eps))
                analytic.append(g.reshape(-1)[i].item())
    analytic, numeric = np.array(analytic), np.array(numeric)
    scale = max(np.abs(numeric).max(initial=0.0), np.abs(analytic).max(initial=0.0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def module_grad_check(module, loss_fn, eps=1e-6, n_coords=8, seed=0) -> float:
    """Grad-check ``loss_fn()`` against every parameter of ``module`` (float64)."""
    params = [p for p in module.parameters() if p.requires_grad]

    def fn(*_):
        return loss_fn()

    return grad_check(fn, params, eps=eps, n_coords=n_coords, seed=seed)
