"""Attribute-consistency scoring for candidate responses.

A bilinear head over pooled language-model states:

    z = pool(resp) @ M @ attr + a @ pool(resp) + b @ attr + bias
    P(entail) = sigmoid(2 z)            # softmax over the scores (z, -z)

``pool`` is the row mean, so the log-probability gradient with respect to
the response states has the closed form

    d log P / d resp_i = (1 - P) * 2 * (M @ attr + a) / T

replicated across the T rows.  That gradient is what steers the lattice
during decoding; the head itself is trained by plain full-batch gradient
descent with the language model frozen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError
from .model import LMParams
from .retrieval import embed_tokens
from .train import TrainConfig
from .vocab import Vocabulary

LABELS = ("entail", "neutral")


@dataclass
class ClassifierParams:
    m: np.ndarray   # (d, d)
    a: np.ndarray   # (d,)
    b: np.ndarray   # (d,)
    bias: float

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.m.copy(), self.a.copy(), self.b.copy(),
                                float(self.bias))


def zero_classifier(d: int) -> ClassifierParams:
    return ClassifierParams(m=np.zeros((d, d)), a=np.zeros(d), b=np.zeros(d),
                            bias=0.0)


def pool(states: np.ndarray) -> np.ndarray:
    """Mean over rows; the order-invariant sequence summary."""
    arr = np.asarray(states, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValidationError("pool needs a non-empty (T, d) array")
    return arr.mean(axis=0)


def _score(cls: ClassifierParams, resp_vec: np.ndarray, attr_vec: np.ndarray) -> float:
    return float(resp_vec @ cls.m @ attr_vec + cls.a @ resp_vec
                 + cls.b @ attr_vec + cls.bias)


# saturation bound on the logit: keeps exp() in range and log(p) finite
_Z_CLAMP = 60.0


def _sigmoid2(z):
    return 1.0 / (1.0 + np.exp(-2.0 * np.clip(z, -_Z_CLAMP, _Z_CLAMP)))


def entail_prob(cls: ClassifierParams, response_states: np.ndarray,
                attr_vec: np.ndarray) -> float:
    """P(response entails attribute) in (0, 1)."""
    z = _score(cls, pool(response_states), np.asarray(attr_vec, dtype=np.float64))
    if not np.isfinite(z):
        raise NumericError("non-finite entailment score")
    return float(_sigmoid2(z))


def grad_log_entail(cls: ClassifierParams, response_states: np.ndarray,
                    attr_vec: np.ndarray) -> np.ndarray:
    """d log P(entail) / d response_states, shape (T, d)."""
    states = np.asarray(response_states, dtype=np.float64)
    t = states.shape[0]
    p = entail_prob(cls, states, attr_vec)
    row = (1.0 - p) * 2.0 * (cls.m @ np.asarray(attr_vec, dtype=np.float64)
                             + cls.a) / t
    return np.tile(row, (t, 1))


def encode_attribute(params: LMParams, vocab: Vocabulary, attribute: str) -> np.ndarray:
    """Frozen pooled embedding of a persona attribute."""
    return pool(embed_tokens(params, vocab, attribute))


@dataclass
class ClassifierReport:
    holdout_accuracy: float
    n_train: int
    n_holdout: int
    final_loss: float


def train_classifier(pairs: list[dict], lm: LMParams, vocab: Vocabulary,
                     cfg: TrainConfig) -> tuple[ClassifierParams, ClassifierReport]:
    """Fit the head on (attribute, response, label) rows, LM frozen.

    Labels are "entail" or "neutral".  Every fifth pair is held out for the
    accuracy report.  Optimization is full-batch gradient descent, so the
    trajectory is exactly reproducible and label flips mirror it.
    """
    if not pairs:
        raise ValidationError("empty pair set")
    feats: list[tuple[np.ndarray, np.ndarray, float]] = []
    labels_seen = set()
    for row in pairs:
        if not {"attribute", "response", "label"} <= set(row):
            raise ValidationError("pairs need attribute/response/label fields")
        if row["label"] not in LABELS:
            raise ValidationError(f"unknown label: {row['label']!r}")
        labels_seen.add(row["label"])
        resp_vec = pool(embed_tokens(lm, vocab, row["response"]))
        attr_vec = encode_attribute(lm, vocab, row["attribute"])
        feats.append((resp_vec, attr_vec, 1.0 if row["label"] == "entail" else 0.0))
    if len(labels_seen) < 2:
        raise ValidationError("degenerate labels: need both entail and neutral")

    holdout = feats[4::5]
    trainset = [f for i, f in enumerate(feats) if i % 5 != 4]
    if not trainset:
        trainset = feats

    d = lm.dims.d_model
    cls = zero_classifier(d)
    resp = np.stack([f[0] for f in trainset])
    attr = np.stack([f[1] for f in trainset])
    y = np.array([f[2] for f in trainset])
    n = len(trainset)
    final_loss = float("nan")
    for step in range(cfg.steps):
        z = np.einsum("nd,de,ne->n", resp, cls.m, attr) \
            + resp @ cls.a + attr @ cls.b + cls.bias
        p = _sigmoid2(z)
        eps = 1e-12
        final_loss = float(-(y * np.log(p + eps)
                             + (1.0 - y) * np.log(1.0 - p + eps)).mean())
        if not np.isfinite(final_loss):
            raise NumericError("classifier training diverged")
        dz = 2.0 * (p - y) / n
        cls.m -= cfg.lr * np.einsum("n,nd,ne->de", dz, resp, attr)
        cls.a -= cfg.lr * (dz @ resp)
        cls.b -= cfg.lr * (dz @ attr)
        cls.bias -= cfg.lr * float(dz.sum())

    correct = 0
    eval_set = holdout if holdout else feats
    for resp_vec, attr_vec, label in eval_set:
        z = _score(cls, resp_vec, attr_vec)
        correct += int((z > 0) == bool(label))
    report = ClassifierReport(holdout_accuracy=correct / len(eval_set),
                              n_train=len(trainset), n_holdout=len(holdout),
                              final_loss=final_loss)
    return cls, report
