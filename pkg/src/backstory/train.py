"""Language-model training loop.

The optimizer is a momentum-free adaptive step (RMS-scaled), with linear
learning-rate warmup and global-norm gradient clipping at 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError
from .model import LMParams, loss_and_grads, sequence_loss, zero_grads


@dataclass
class TrainConfig:
    steps: int
    batch_size: int = 8
    lr: float = 2e-3
    warmup_steps: int = 20
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise ValidationError("steps must be non-negative")
        if self.batch_size <= 0 or self.lr <= 0 or self.clip_norm <= 0:
            raise ValidationError("batch_size, lr and clip_norm must be positive")
        if self.warmup_steps < 0:
            raise ValidationError("warmup_steps must be non-negative")


@dataclass
class TrainExample:
    """Token sequence with a mask marking which tokens are loss targets."""
    ids: list[int]
    target_mask: np.ndarray
    kind: str = "dialog"

    def __post_init__(self):
        self.target_mask = np.asarray(self.target_mask, dtype=bool)
        if self.target_mask.shape != (len(self.ids),):
            raise ValidationError("target mask must align with ids")
        if len(self.ids) and self.target_mask[0]:
            raise ValidationError("first position cannot be a target")


@dataclass
class TrainResult:
    params: LMParams
    losses: list[tuple[int, float]] = field(default_factory=list)


class RmsOptimizer:
    """Momentum-free adaptive step: scale each coordinate by a running RMS."""

    def __init__(self, params: LMParams, cfg: TrainConfig, rho: float = 0.95,
                 eps: float = 1e-8):
        self.cfg = cfg
        self.rho = rho
        self.eps = eps
        self.acc = {name: np.zeros_like(a) for name, a in params.named_arrays()}

    def step(self, params: LMParams, grads: dict[str, np.ndarray], step_no: int) -> None:
        total = 0.0
        for g in grads.values():
            total += float((g * g).sum())
        gnorm = np.sqrt(total)
        scale = min(1.0, self.cfg.clip_norm / (gnorm + 1e-12))
        if self.cfg.warmup_steps:
            lr = self.cfg.lr * min(1.0, (step_no + 1) / self.cfg.warmup_steps)
        else:
            lr = self.cfg.lr
        for name, arr in params.named_arrays():
            g = grads[name] * scale
            acc = self.acc[name]
            acc *= self.rho
            acc += (1.0 - self.rho) * g * g
            arr -= lr * g / (np.sqrt(acc) + self.eps)


def train_lm(examples: list[TrainExample], params_init: LMParams,
             cfg: TrainConfig) -> TrainResult:
    """Train next-token prediction over masked target positions.

    Batches are drawn i.i.d. by the seeded generator, so the whole trajectory
    is a function of (examples, params_init, cfg).  Returns the trained
    parameters plus the per-step mean-loss curve.
    """
    if not examples:
        raise ValidationError("empty corpus")
    t_max = params_init.dims.t_max
    for ex in examples:
        if len(ex.ids) > t_max:
            raise ValidationError(f"example of {len(ex.ids)} tokens exceeds t_max={t_max}")
        if not ex.target_mask.any():
            raise ValidationError("example has no target positions")
    params = params_init.copy()
    if cfg.steps == 0:
        return TrainResult(params, [])
    rng = np.random.default_rng(cfg.seed)
    opt = RmsOptimizer(params, cfg)
    losses: list[tuple[int, float]] = []
    n = len(examples)
    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=cfg.batch_size)
        grads = zero_grads(params)
        ce_sum, n_tgt = 0.0, 0
        for j in idx:
            ex = examples[int(j)]
            ce, k, _ = loss_and_grads(params, ex.ids, ex.target_mask, grads)
            ce_sum += ce
            n_tgt += k
        mean_ce = ce_sum / n_tgt
        if not np.isfinite(mean_ce):
            raise NumericError("training diverged; try a smaller learning rate")
        for g in grads.values():
            g /= n_tgt
        opt.step(params, grads, step)
        losses.append((step, float(mean_ce)))
    return TrainResult(params, losses)


def perplexity(params: LMParams, examples: list[TrainExample]) -> float:
    """exp(mean masked cross-entropy) over the example set."""
    if not examples:
        raise ValidationError("empty corpus")
    ce_sum, n_tgt = 0.0, 0
    for ex in examples:
        ce, k = sequence_loss(params, ex.ids, ex.target_mask)
        ce_sum += ce
        n_tgt += k
    return float(np.exp(ce_sum / n_tgt))
