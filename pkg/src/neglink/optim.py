"""Adam with decoupled weight decay, global-norm clipping, linear warmup.

The learning rate ramps linearly from zero over `warmup_steps` optimizer
steps (step t, 0-based, uses rate lr * min(1, (t+1)/warmup_steps)) and
then stays constant; no decay schedule. Weight decay is decoupled and
scaled by the effective rate, so a zero learning rate leaves parameters
bitwise unchanged. Gradients are clipped jointly: if the global L2 norm
across every array exceeds grad_clip, all arrays are scaled by
grad_clip / norm before the moment updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import OptimizerState


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float
    steps: int
    batch_size: int = 16
    warmup_steps: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    grad_clip: float = 0.1
    label_smoothing: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.steps < 1 or self.batch_size < 1 or self.warmup_steps < 0:
            raise ConfigError("steps/batch_size must be >= 1 and warmup_steps >= 0")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in (0, 1)")
        if self.adam_eps <= 0 or self.grad_clip <= 0 or self.weight_decay < 0:
            raise ConfigError("adam_eps/grad_clip must be > 0 and weight_decay >= 0")
        if not 0 <= self.label_smoothing < 1:
            raise ConfigError("label_smoothing must lie in [0, 1)")


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items())))


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all arrays in place to global norm <= max_norm. Returns pre-clip norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def effective_rate(cfg: OptimizerConfig, step: int) -> float:
    """Rate for 0-based optimizer step `step`."""
    if cfg.warmup_steps > 0:
        return cfg.learning_rate * min(1.0, (step + 1) / cfg.warmup_steps)
    return cfg.learning_rate


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    cfg: OptimizerConfig,
) -> float:
    """One in-place update over all parameters. Returns the rate used.

    Parameter names are visited in sorted order so the arithmetic sequence
    is identical between runs.
    """
    state.step += 1
    t = state.step
    lr = effective_rate(cfg, t - 1)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name in sorted(params):
        p, g = params[name], grads[name]
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.adam_eps)
        p -= lr * cfg.weight_decay * p
    return lr
