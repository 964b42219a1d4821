"""Tiny decoder-only transformer with tied input/output embeddings.

All math is float64 numpy.  Forward passes cache every intermediate so the
training gradients come out in closed form; the test suite checks them
against central finite differences.  Layers are pre-norm residual blocks:

    x   = W[ids] + P[:T]
    x  += attn(ln1(x))        # causal multi-head self-attention
    x  += mlp(ln2(x))         # GELU feed-forward, width 4d
    o   = ln_f(x)             # final states
    logits = o @ W.T          # tied output projection
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import NumericError, ValidationError

LN_EPS = 1e-5
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715

_LAYER_FIELDS = ("ln1_g", "ln1_b", "wq", "wk", "wv", "wo",
                 "ln2_g", "ln2_b", "w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class ModelDims:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    t_max: int = 192
    vocab_size: int = 0

    def __post_init__(self):
        if min(self.d_model, self.n_layers, self.n_heads,
               self.t_max, self.vocab_size) <= 0:
            raise ValidationError("model dimensions must be positive")
        if self.d_model % self.n_heads:
            raise ValidationError("d_model must be divisible by n_heads")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def d_ff(self) -> int:
        return 4 * self.d_model


@dataclass
class LayerParams:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class LMParams:
    dims: ModelDims
    w_embed: np.ndarray  # (V, d) tied input embedding / output projection
    p_embed: np.ndarray  # (t_max, d) learned positions
    layers: list[LayerParams]
    lnf_g: np.ndarray
    lnf_b: np.ndarray

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Parameter tensors in their serialization order."""
        yield "w_embed", self.w_embed
        yield "p_embed", self.p_embed
        for i, lp in enumerate(self.layers):
            for name in _LAYER_FIELDS:
                yield f"layers.{i}.{name}", getattr(lp, name)
        yield "lnf_g", self.lnf_g
        yield "lnf_b", self.lnf_b

    def copy(self) -> "LMParams":
        layers = [LayerParams(**{f.name: getattr(lp, f.name).copy()
                                 for f in fields(LayerParams)})
                  for lp in self.layers]
        return LMParams(self.dims, self.w_embed.copy(), self.p_embed.copy(),
                        layers, self.lnf_g.copy(), self.lnf_b.copy())

    def fingerprint(self) -> str:
        """Stable 16-hex-digit digest of the float32 parameter bytes."""
        h = hashlib.sha256()
        for name, arr in self.named_arrays():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return h.hexdigest()[:16]


def zero_grads(params: LMParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.named_arrays()}


def init_lm(dims: ModelDims, seed: int = 0) -> LMParams:
    rng = np.random.default_rng(seed)
    d, ff = dims.d_model, dims.d_ff
    s_attn = d ** -0.5
    # Residual-branch outputs start an order of magnitude below the token
    # embeddings so the stream is identity-dominated at init; training grows
    # them as needed.
    s_resid = 0.1 * (2 * dims.n_layers) ** -0.5
    layers = []
    for _ in range(dims.n_layers):
        layers.append(LayerParams(
            ln1_g=np.ones(d), ln1_b=np.zeros(d),
            wq=rng.normal(0.0, s_attn, (d, d)),
            wk=rng.normal(0.0, s_attn, (d, d)),
            wv=rng.normal(0.0, s_attn, (d, d)),
            wo=rng.normal(0.0, s_resid * s_attn, (d, d)),
            ln2_g=np.ones(d), ln2_b=np.zeros(d),
            w1=rng.normal(0.0, s_attn, (d, ff)), b1=np.zeros(ff),
            w2=rng.normal(0.0, s_resid * ff ** -0.5, (ff, d)), b2=np.zeros(d),
        ))
    return LMParams(
        dims=dims,
        w_embed=rng.normal(0.0, 0.1, (dims.vocab_size, d)),
        p_embed=rng.normal(0.0, 0.02, (dims.t_max, d)),
        layers=layers,
        lnf_g=np.ones(d),
        lnf_b=np.zeros(d),
    )


# ---------------------------------------------------------------- primitives

def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, xhat, inv


def _layernorm_grad(dy, g, xhat, inv):
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    dx = inv * (dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _gelu(x):
    u = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), t


def _gelu_grad(x, t):
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Row softmax; -inf entries come out exactly zero."""
    m = np.max(z, axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class _LayerCache:
    xhat1: np.ndarray
    inv1: np.ndarray
    a_in: np.ndarray
    qh: np.ndarray
    kh: np.ndarray
    vh: np.ndarray
    att: np.ndarray
    ctx: np.ndarray
    xhat2: np.ndarray
    inv2: np.ndarray
    m_in: np.ndarray
    h1: np.ndarray
    tanh1: np.ndarray
    gact: np.ndarray


@dataclass
class _ForwardCache:
    layer: list[_LayerCache]
    xhatf: np.ndarray
    invf: np.ndarray
    o: np.ndarray


def _split_heads(x, n_heads, d_head):
    t = x.shape[0]
    return x.reshape(t, n_heads, d_head).transpose(1, 0, 2)  # (H, T, dh)


def _merge_heads(x):
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def _forward_from_x0(params: LMParams, x0: np.ndarray,
                     need_cache: bool) -> tuple[np.ndarray, _ForwardCache | None]:
    """Run the residual stack over initial embeddings x0 (T, d)."""
    dims = params.dims
    t = x0.shape[0]
    scale = dims.d_head ** -0.5
    mask = np.triu(np.full((t, t), -np.inf), k=1)  # causal: no peeking right
    caches: list[_LayerCache] = []
    x = x0
    for lp in params.layers:
        a_in, xhat1, inv1 = _layernorm(x, lp.ln1_g, lp.ln1_b)
        qh = _split_heads(a_in @ lp.wq, dims.n_heads, dims.d_head)
        kh = _split_heads(a_in @ lp.wk, dims.n_heads, dims.d_head)
        vh = _split_heads(a_in @ lp.wv, dims.n_heads, dims.d_head)
        scores = qh @ kh.transpose(0, 2, 1) * scale + mask
        att = softmax_rows(scores)
        ctx = _merge_heads(att @ vh)
        x = x + ctx @ lp.wo
        m_in, xhat2, inv2 = _layernorm(x, lp.ln2_g, lp.ln2_b)
        h1 = m_in @ lp.w1 + lp.b1
        gact, tanh1 = _gelu(h1)
        x = x + gact @ lp.w2 + lp.b2
        if need_cache:
            caches.append(_LayerCache(xhat1, inv1, a_in, qh, kh, vh, att, ctx,
                                      xhat2, inv2, m_in, h1, tanh1, gact))
    o, xhatf, invf = _layernorm(x, params.lnf_g, params.lnf_b)
    cache = _ForwardCache(caches, xhatf, invf, o) if need_cache else None
    return o, cache


def _embed_hard(params: LMParams, ids: Sequence[int]) -> np.ndarray:
    idx = np.asarray(ids, dtype=np.int64)
    return params.w_embed[idx] + params.p_embed[: len(ids)]


def _check_ids(params: LMParams, ids: Sequence[int], room: int = 0) -> None:
    if len(ids) == 0:
        raise ValidationError("empty token sequence")
    if len(ids) + room > params.dims.t_max:
        raise ValidationError(
            f"sequence of {len(ids)} tokens (+{room}) exceeds t_max={params.dims.t_max}")
    arr = np.asarray(ids)
    if arr.min() < 0 or arr.max() >= params.dims.vocab_size:
        raise ValidationError("token id out of vocabulary range")


def forward(params: LMParams, ids: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Final-layer states (T, d) and tied logits (T, V) for a hard prefix."""
    _check_ids(params, ids)
    o, _ = _forward_from_x0(params, _embed_hard(params, ids), need_cache=False)
    logits = o @ params.w_embed.T
    if not np.all(np.isfinite(logits)):
        raise NumericError("numeric overflow in forward pass")
    return o, logits


def forward_soft(params: LMParams, prefix_ids: Sequence[int],
                 soft_rows: np.ndarray) -> np.ndarray:
    """States for a hard prefix followed by token distributions.

    Each soft row is a distribution over the vocabulary; its input embedding
    is the expectation ``row @ W`` so the pass stays differentiable in the
    rows.  Returns states for the full length ``len(prefix) + len(soft)``.
    """
    soft = np.asarray(soft_rows, dtype=np.float64)
    if soft.ndim != 2 or soft.shape[1] != params.dims.vocab_size:
        raise ValidationError("soft rows must be (n, vocab_size)")
    if np.any(soft < -1e-12) or np.any(np.abs(soft.sum(axis=1) - 1.0) > 1e-6):
        raise ValidationError("soft row is not a distribution")
    n = len(prefix_ids) + soft.shape[0]
    if n == 0:
        raise ValidationError("empty token sequence")
    if n > params.dims.t_max:
        raise ValidationError(f"sequence of {n} positions exceeds t_max")
    if prefix_ids:
        _check_ids(params, prefix_ids, room=soft.shape[0])
        x0 = np.concatenate([params.w_embed[np.asarray(prefix_ids)], soft @ params.w_embed])
    else:
        x0 = soft @ params.w_embed
    x0 = x0 + params.p_embed[:n]
    o, _ = _forward_from_x0(params, x0, need_cache=False)
    if not np.all(np.isfinite(o)):
        raise NumericError("numeric overflow in soft forward pass")
    return o


# ------------------------------------------------------------------ backward

def sequence_loss(params: LMParams, ids: Sequence[int],
                  target_mask: np.ndarray) -> tuple[float, int]:
    """Summed next-token cross-entropy over masked targets (no gradients)."""
    _check_ids(params, ids)
    mask = np.asarray(target_mask, dtype=bool)
    if mask.shape != (len(ids),) or (len(ids) and mask[0]):
        raise ValidationError("bad target mask")
    _, logits = forward(params, ids)
    tgt_pos = np.nonzero(mask)[0]
    probs = softmax_rows(logits[tgt_pos - 1])
    picked = probs[np.arange(len(tgt_pos)), np.asarray(ids)[tgt_pos]]
    return float(-np.log(np.maximum(picked, 1e-300)).sum()), len(tgt_pos)


def loss_and_grads(params: LMParams, ids: Sequence[int],
                   target_mask: np.ndarray,
                   grads: dict[str, np.ndarray] | None = None) -> tuple[float, int, dict]:
    """Summed next-token cross-entropy over masked targets, with gradients.

    ``target_mask[j]`` marks token ``ids[j]`` as a prediction target (scored
    from position j-1).  Gradient tensors are accumulated into ``grads`` so a
    batch can share one accumulator; the returned loss is the raw sum, with
    the target count alongside for normalization by the caller.
    """
    _check_ids(params, ids)
    mask = np.asarray(target_mask, dtype=bool)
    if mask.shape != (len(ids),):
        raise ValidationError("target mask must align with the token sequence")
    if mask[0]:
        raise ValidationError("position 0 has no preceding context to score from")
    if grads is None:
        grads = zero_grads(params)

    dims = params.dims
    t = len(ids)
    x0 = _embed_hard(params, ids)
    o, cache = _forward_from_x0(params, x0, need_cache=True)
    logits = o @ params.w_embed.T
    if not np.all(np.isfinite(logits)):
        raise NumericError("numeric overflow in forward pass")

    tgt_pos = np.nonzero(mask)[0]          # token positions being predicted
    pred_rows = tgt_pos - 1                # rows the predictions come from
    probs = softmax_rows(logits[pred_rows])
    tgt_ids = np.asarray(ids)[tgt_pos]
    picked = probs[np.arange(len(tgt_pos)), tgt_ids]
    loss = float(-np.log(np.maximum(picked, 1e-300)).sum())

    dlogits = np.zeros_like(logits)
    dprobs = probs.copy()
    dprobs[np.arange(len(tgt_pos)), tgt_ids] -= 1.0
    dlogits[pred_rows] = dprobs

    # tied output projection: logits = o @ W.T
    grads["w_embed"] += dlogits.T @ o
    d_o = dlogits @ params.w_embed

    dx = _backprop_states(params, cache, d_o, grads)

    # embedding path: x0 = W[ids] + P[:T]
    np.add.at(grads["w_embed"], np.asarray(ids), dx)
    grads["p_embed"][:t] += dx
    return loss, len(tgt_pos), grads


def _backprop_states(params: LMParams, cache: _ForwardCache,
                     d_o: np.ndarray, grads: dict[str, np.ndarray]) -> np.ndarray:
    """Push a gradient on the final states back to x0, accumulating grads."""
    dims = params.dims
    scale = dims.d_head ** -0.5
    dx, dgf, dbf = _layernorm_grad(d_o, params.lnf_g, cache.xhatf, cache.invf)
    grads["lnf_g"] += dgf
    grads["lnf_b"] += dbf

    for i in range(dims.n_layers - 1, -1, -1):
        lp, lc = params.layers[i], cache.layer[i]
        pfx = f"layers.{i}."
        # mlp block: x_out = x_mid + gelu(ln2(x_mid) @ w1 + b1) @ w2 + b2
        d_mlp = dx
        grads[pfx + "w2"] += lc.gact.T @ d_mlp
        grads[pfx + "b2"] += d_mlp.sum(axis=0)
        d_gact = d_mlp @ lp.w2.T
        dh1 = d_gact * _gelu_grad(lc.h1, lc.tanh1)
        grads[pfx + "w1"] += lc.m_in.T @ dh1
        grads[pfx + "b1"] += dh1.sum(axis=0)
        d_m_in = dh1 @ lp.w1.T
        dx_ln2, dg2, db2 = _layernorm_grad(d_m_in, lp.ln2_g, lc.xhat2, lc.inv2)
        grads[pfx + "ln2_g"] += dg2
        grads[pfx + "ln2_b"] += db2
        dx_mid = dx + dx_ln2
        # attention block: x_mid = x_in + merge(att @ v) @ wo
        d_attn = dx_mid
        grads[pfx + "wo"] += lc.ctx.T @ d_attn
        dctxh = _split_heads(d_attn @ lp.wo.T, dims.n_heads, dims.d_head)
        datt = dctxh @ lc.vh.transpose(0, 2, 1)
        dvh = lc.att.transpose(0, 2, 1) @ dctxh
        ds = lc.att * (datt - (datt * lc.att).sum(axis=-1, keepdims=True))
        dqh = ds @ lc.kh * scale
        dkh = ds.transpose(0, 2, 1) @ lc.qh * scale
        dq, dk, dv = _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)
        grads[pfx + "wq"] += lc.a_in.T @ dq
        grads[pfx + "wk"] += lc.a_in.T @ dk
        grads[pfx + "wv"] += lc.a_in.T @ dv
        d_a_in = dq @ lp.wq.T + dk @ lp.wk.T + dv @ lp.wv.T
        dx_ln1, dg1, db1 = _layernorm_grad(d_a_in, lp.ln1_g, lc.xhat1, lc.inv1)
        grads[pfx + "ln1_g"] += dg1
        grads[pfx + "ln1_b"] += db1
        dx = dx_mid + dx_ln1
    return dx


# --------------------------------------------------------------- incremental

class DecodeSession:
    """Incremental forward pass with per-layer key/value buffers.

    Feed positions one at a time (hard token, soft distribution, or a raw
    embedding row) and get back the final-layer state for that position.
    A primed prefix is processed in one vectorized pass.
    """

    def __init__(self, params: LMParams):
        self.params = params
        dims = params.dims
        self.pos = 0
        self._k = [np.empty((dims.n_heads, dims.t_max, dims.d_head)) for _ in params.layers]
        self._v = [np.empty((dims.n_heads, dims.t_max, dims.d_head)) for _ in params.layers]

    def prime(self, ids: Sequence[int]) -> np.ndarray:
        """Feed a hard prefix; returns its final-layer states (T, d)."""
        if self.pos:
            raise ValidationError("session already primed")
        _check_ids(self.params, ids)
        dims = self.params.dims
        x = _embed_hard(self.params, ids)
        t = x.shape[0]
        scale = dims.d_head ** -0.5
        mask = np.triu(np.full((t, t), -np.inf), k=1)
        for i, lp in enumerate(self.params.layers):
            a_in, _, _ = _layernorm(x, lp.ln1_g, lp.ln1_b)
            qh = _split_heads(a_in @ lp.wq, dims.n_heads, dims.d_head)
            kh = _split_heads(a_in @ lp.wk, dims.n_heads, dims.d_head)
            vh = _split_heads(a_in @ lp.wv, dims.n_heads, dims.d_head)
            self._k[i][:, :t] = kh
            self._v[i][:, :t] = vh
            att = softmax_rows(qh @ kh.transpose(0, 2, 1) * scale + mask)
            x = x + _merge_heads(att @ vh) @ lp.wo
            m_in, _, _ = _layernorm(x, lp.ln2_g, lp.ln2_b)
            gact, _ = _gelu(m_in @ lp.w1 + lp.b1)
            x = x + gact @ lp.w2 + lp.b2
        self.pos = t
        o, _, _ = _layernorm(x, self.params.lnf_g, self.params.lnf_b)
        return o

    def feed_token(self, token_id: int) -> np.ndarray:
        """Feed one hard token; returns the final-layer state row (d,)."""
        if not 0 <= token_id < self.params.dims.vocab_size:
            raise ValidationError("token id out of vocabulary range")
        return self._feed(self.params.w_embed[token_id])

    def feed_soft(self, dist: np.ndarray) -> np.ndarray:
        """Feed one token distribution via its expected embedding."""
        return self._feed(dist @ self.params.w_embed)

    def _feed(self, emb: np.ndarray) -> np.ndarray:
        dims = self.params.dims
        if self.pos >= dims.t_max:
            raise ValidationError(f"sequence exceeds t_max={dims.t_max}")
        scale = dims.d_head ** -0.5
        x = emb + self.p_embed_row(self.pos)
        x = x[None, :]  # (1, d)
        n = self.pos + 1
        for i, lp in enumerate(self.params.layers):
            a_in, _, _ = _layernorm(x, lp.ln1_g, lp.ln1_b)
            qh = _split_heads(a_in @ lp.wq, dims.n_heads, dims.d_head)  # (H,1,dh)
            kh = _split_heads(a_in @ lp.wk, dims.n_heads, dims.d_head)
            vh = _split_heads(a_in @ lp.wv, dims.n_heads, dims.d_head)
            self._k[i][:, self.pos] = kh[:, 0]
            self._v[i][:, self.pos] = vh[:, 0]
            att = softmax_rows(qh @ self._k[i][:, :n].transpose(0, 2, 1) * scale)
            x = x + _merge_heads(att @ self._v[i][:, :n]) @ lp.wo
            m_in, _, _ = _layernorm(x, lp.ln2_g, lp.ln2_b)
            gact, _ = _gelu(m_in @ lp.w1 + lp.b1)
            x = x + gact @ lp.w2 + lp.b2
        self.pos += 1
        o, _, _ = _layernorm(x, self.params.lnf_g, self.params.lnf_b)
        if not np.all(np.isfinite(o)):
            raise NumericError("numeric overflow in incremental forward")
        return o[0]

    def p_embed_row(self, pos: int) -> np.ndarray:
        return self.params.p_embed[pos]

    def logits_of(self, o_row: np.ndarray) -> np.ndarray:
        return o_row @ self.params.w_embed.T
