"""Greedy and nucleus decoding on top of the incremental forward pass."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .model import DecodeSession, LMParams, softmax_rows
from .vocab import EOS_ID


def _check_room(params: LMParams, context_ids, max_len: int) -> None:
    if max_len < 0:
        raise ValidationError("max_len must be non-negative")
    if not context_ids:
        raise ValidationError("empty context")
    if len(context_ids) + max_len > params.dims.t_max:
        raise ValidationError(
            f"context of {len(context_ids)} tokens leaves no room for "
            f"{max_len} generated tokens within t_max={params.dims.t_max}")


def greedy_decode(params: LMParams, context_ids: list[int], max_len: int,
                  *, eos_id: int = EOS_ID,
                  stop_at_eos: bool = True) -> tuple[list[int], np.ndarray]:
    """Argmax decoding.

    Returns the generated ids together with the producing states: row j is
    the final-layer state whose logits selected token j, so
    ``argmax(states @ W.T, axis=1) == ids`` by construction.  With
    ``stop_at_eos=False`` the sequence is padded with further greedy steps to
    exactly ``max_len`` tokens.
    """
    _check_room(params, context_ids, max_len)
    sess = DecodeSession(params)
    prod = sess.prime(context_ids)[-1]
    out: list[int] = []
    states: list[np.ndarray] = []
    for _ in range(max_len):
        tok = int(np.argmax(sess.logits_of(prod)))
        out.append(tok)
        states.append(prod)
        if stop_at_eos and tok == eos_id:
            break
        if len(out) < max_len:
            prod = sess.feed_token(tok)
    stacked = np.stack(states) if states else np.zeros((0, params.dims.d_model))
    return out, stacked


def nucleus_pick(probs: np.ndarray, p: float, rng: np.random.Generator) -> int:
    """Sample from the smallest prefix of the sorted distribution with mass >= p."""
    if not 0.0 < p <= 1.0:
        raise ValidationError("nucleus p must lie in (0, 1]")
    order = np.argsort(-probs, kind="stable")
    cum = np.cumsum(probs[order])
    k = int(np.searchsorted(cum, p - 1e-12)) + 1
    k = min(k, len(order))
    pool = order[:k]
    pool_p = probs[pool] / probs[pool].sum()
    return int(rng.choice(pool, p=pool_p))


def nucleus_decode(params: LMParams, context_ids: list[int], max_len: int,
                   p: float, seed: int, *, eos_id: int = EOS_ID) -> list[int]:
    """Top-p ancestral sampling; deterministic for a fixed seed."""
    if not 0.0 < p <= 1.0:
        raise ValidationError("nucleus p must lie in (0, 1]")
    _check_room(params, context_ids, max_len)
    rng = np.random.default_rng(seed)
    sess = DecodeSession(params)
    prod = sess.prime(context_ids)[-1]
    out: list[int] = []
    for _ in range(max_len):
        probs = softmax_rows(sess.logits_of(prod))
        tok = nucleus_pick(probs, p, rng)
        out.append(tok)
        if tok == eos_id:
            break
        if len(out) < max_len:
            prod = sess.feed_token(tok)
    return out
