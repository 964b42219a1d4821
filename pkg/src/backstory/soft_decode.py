"""Gradient-steered soft decoding.

The decoder keeps a soft lattice: one final-layer state row per response
position.  Each iteration ascends the constraint objective

    L = lambda_c * log q(o, c) - lambda_d * cross_entropy(s, W o / tau)

by a few normalized gradient steps on the rows (the model and classifier
stay frozen), then re-mixes the rows with a fresh autoregressive forward
pass so the text stays fluent:

    o_j = gamma * o_forward_j + (1 - gamma) * o_backward_j

where position j's forward state consumes the expected embedding of the
already-mixed distribution at j - 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .consistency import ClassifierParams, entail_prob, grad_log_entail
from .decode import greedy_decode
from .errors import NumericError, ValidationError
from .model import DecodeSession, LMParams, softmax_rows
from .vocab import EOS_ID, Vocabulary

REALIZE_MODES = ("argmax", "sample")
ATTRIBUTE_MODES = ("sample", "argmax")


@dataclass
class DecodeConfig:
    lambda_c: float = 1.0
    lambda_d: float = 1.0
    gamma: float = 0.45
    tau: float = 1.0
    iterations: int = 5
    backward_steps: int = 3
    step_size: float = 0.04
    grad_epsilon: float = 1e-8
    max_len: int = 100
    realize_mode: str = "argmax"
    attribute_mode: str = "sample"
    history_window: int = 4
    hard_forward: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lambda_c < 0 or self.lambda_d < 0:
            raise ValidationError("lambda_c and lambda_d must be nonnegative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError("gamma must lie in (0, 1]")
        if self.tau <= 0:
            raise ValidationError("tau must be positive")
        if self.iterations < 0 or self.backward_steps < 0:
            raise ValidationError("iteration counts must be nonnegative")
        if self.step_size <= 0 or self.grad_epsilon <= 0:
            raise ValidationError("step_size and grad_epsilon must be positive")
        if self.max_len < 0:
            raise ValidationError("max_len must be nonnegative")
        if self.realize_mode not in REALIZE_MODES:
            raise ValidationError(f"unknown realize_mode: {self.realize_mode!r}")
        if self.attribute_mode not in ATTRIBUTE_MODES:
            raise ValidationError(
                f"unknown attribute_mode: {self.attribute_mode!r}")
        if self.history_window < 1:
            raise ValidationError("history_window must be at least 1")


@dataclass
class SoftLattice:
    states: np.ndarray          # (T, d) mutable rows, row i feeds token i
    context_ids: list[int]      # frozen conditioning prefix
    init_ids: list[int]         # greedy tokens the lattice started from

    def __len__(self) -> int:
        return self.states.shape[0]

    def copy(self) -> "SoftLattice":
        return SoftLattice(self.states.copy(), list(self.context_ids),
                           list(self.init_ids))


@dataclass
class LossBreakdown:
    total: float
    entail_term: float
    story_ce: float
    position_ce: list[float] = field(default_factory=list)


def lattice_distributions(params: LMParams, states: np.ndarray,
                          tau: float) -> np.ndarray:
    """Token distribution per row: softmax(W o_i / tau)."""
    return softmax_rows((states @ params.w_embed.T) / tau)


def init_lattice(params: LMParams, context_ids: list[int],
                 cfg: DecodeConfig) -> SoftLattice:
    """Greedy-decode exactly ``cfg.max_len`` positions to seed the lattice.

    End-of-sequence is treated as an ordinary token here; realization takes
    care of truncation once optimization is done.
    """
    ids, states = greedy_decode(params, context_ids, cfg.max_len,
                                stop_at_eos=False)
    return SoftLattice(states=states, context_ids=list(context_ids),
                       init_ids=ids)


def _check_story_ids(story_ids: list[int], vocab_size: int) -> None:
    if any(not 0 <= s < vocab_size for s in story_ids):
        raise ValidationError("story token id outside the model vocabulary")


def constraint_loss(params: LMParams, cls: ClassifierParams,
                    lattice: SoftLattice, story_ids: list[int],
                    attr_embedding: np.ndarray,
                    cfg: DecodeConfig) -> LossBreakdown:
    """Evaluate the objective on the current lattice rows."""
    _check_story_ids(story_ids, params.dims.vocab_size)
    t = len(lattice)
    if t == 0:
        return LossBreakdown(total=0.0, entail_term=0.0, story_ce=0.0)
    m = min(t, len(story_ids))
    probs = lattice_distributions(params, lattice.states[:m], cfg.tau)
    position_ce = [float(-np.log(probs[i, story_ids[i]])) for i in range(m)]
    story_ce = float(sum(position_ce))
    entail_term = float(np.log(entail_prob(cls, lattice.states,
                                           attr_embedding)))
    total = cfg.lambda_c * entail_term - cfg.lambda_d * story_ce
    return LossBreakdown(total=total, entail_term=entail_term,
                         story_ce=story_ce, position_ce=position_ce)


def constraint_grad(params: LMParams, cls: ClassifierParams,
                    lattice: SoftLattice, story_ids: list[int],
                    attr_embedding: np.ndarray,
                    cfg: DecodeConfig) -> np.ndarray:
    """Analytic gradient of the objective with respect to the lattice rows."""
    _check_story_ids(story_ids, params.dims.vocab_size)
    t = len(lattice)
    grad = np.zeros_like(lattice.states)
    if t == 0:
        return grad
    if cfg.lambda_c != 0.0:
        grad += cfg.lambda_c * grad_log_entail(cls, lattice.states,
                                               attr_embedding)
    m = min(t, len(story_ids))
    if cfg.lambda_d != 0.0 and m > 0:
        probs = lattice_distributions(params, lattice.states[:m], cfg.tau)
        probs[np.arange(m), story_ids[:m]] -= 1.0
        grad[:m] -= (cfg.lambda_d / cfg.tau) * (probs @ params.w_embed)
    return grad


def backward_pass(params: LMParams, cls: ClassifierParams,
                  lattice: SoftLattice, story_ids: list[int],
                  attr_embedding: np.ndarray,
                  cfg: DecodeConfig) -> SoftLattice:
    """Ascend the objective: per-row normalized gradient steps."""
    out = lattice.copy()
    for _ in range(cfg.backward_steps):
        grad = constraint_grad(params, cls, out, story_ids, attr_embedding,
                               cfg)
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite constraint gradient")
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        out.states += cfg.step_size * grad / (norms + cfg.grad_epsilon)
    return out


def forward_mix_pass(params: LMParams, lattice_b: SoftLattice,
                     cfg: DecodeConfig) -> SoftLattice:
    """Blend fresh forward states into the optimized rows, position by position.

    The forward state for position j consumes the expected embedding of the
    mixed distribution at j - 1, so fluency information propagates left to
    right through the updated lattice.
    """
    out = lattice_b.copy()
    t = len(out)
    if t == 0:
        return out
    session = DecodeSession(params)
    f_state = session.prime(out.context_ids)[-1]
    for j in range(t):
        if j > 0:
            prev = out.states[j - 1]
            if cfg.hard_forward:
                logits = (prev @ params.w_embed.T) / cfg.tau
                f_state = session.feed_token(int(np.argmax(logits)))
            else:
                dist = softmax_rows((prev @ params.w_embed.T)[None, :]
                                    / cfg.tau)[0]
                f_state = session.feed_soft(dist)
        if cfg.gamma == 1.0:
            out.states[j] = f_state
        else:
            out.states[j] = (cfg.gamma * f_state
                             + (1.0 - cfg.gamma) * lattice_b.states[j])
    return out


def realize(params: LMParams, lattice: SoftLattice, vocab: Vocabulary,
            cfg: DecodeConfig) -> tuple[list[int], str]:
    """Read tokens off the lattice and detokenize, truncating at end marker."""
    if len(lattice) == 0:
        return [], ""
    probs = lattice_distributions(params, lattice.states, cfg.tau)
    if cfg.realize_mode == "argmax":
        ids = np.argmax(probs, axis=1).tolist()
    else:
        rng = np.random.default_rng(cfg.seed)
        ids = [int(rng.choice(probs.shape[1], p=row / row.sum()))
               for row in probs]
    if EOS_ID in ids:
        ids = ids[: ids.index(EOS_ID)]
    return ids, vocab.decode(ids)
