"""Personas, dialog histories, and the attribute chooser p(c | h).

The chooser is similarity-based: history and each attribute are encoded by
the language model, mean-pooled, and compared by cosine; a softmax over the
similarities (divided by a temperature) gives the sampling distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import LMParams, forward, softmax_rows
from .vocab import AGENT_ID, BOS_ID, SEP_ID, USER_ID, Vocabulary

SPEAKERS = ("agent", "user")
DEFAULT_TEMPERATURE = 0.5
DEFAULT_WINDOW = 4


@dataclass
class Turn:
    speaker: str
    text: str


@dataclass
class Persona:
    attributes: list[str]

    def check(self, vocab: Vocabulary) -> None:
        if not self.attributes:
            raise ValidationError("persona has no attributes")
        for attr in self.attributes:
            if not vocab.encode(attr):
                raise ValidationError(f"attribute tokenizes empty: {attr!r}")


@dataclass
class DialogHistory:
    turns: list[Turn] = field(default_factory=list)

    def check(self) -> None:
        for i, turn in enumerate(self.turns):
            if turn.speaker not in SPEAKERS:
                raise ValidationError(f"unknown speaker: {turn.speaker!r}")
            if i > 0 and turn.speaker == self.turns[i - 1].speaker:
                raise ValidationError("speakers must alternate")

    def last(self, window: int) -> list[Turn]:
        return self.turns[-window:] if window > 0 else []


def _marker(speaker: str) -> int:
    return AGENT_ID if speaker == "agent" else USER_ID


def encode_history(history: DialogHistory, vocab: Vocabulary,
                   window: int = DEFAULT_WINDOW) -> list[int]:
    """Flatten the last ``window`` turns as [marker, tokens...] blocks."""
    history.check()
    ids: list[int] = []
    for turn in history.last(window):
        ids.append(_marker(turn.speaker))
        ids.extend(vocab.encode(turn.text))
    return ids


def encode_context(history: DialogHistory, attribute: str, vocab: Vocabulary,
                   window: int = DEFAULT_WINDOW) -> list[int]:
    """Conditioning prefix for the dialog model.

    Layout: begin-of-sequence, the windowed history with speaker markers,
    the attribute separator and attribute tokens, then the agent marker
    that prompts the response.
    """
    attr_ids = vocab.encode(attribute)
    if not attr_ids:
        raise ValidationError(f"attribute tokenizes empty: {attribute!r}")
    return ([BOS_ID] + encode_history(history, vocab, window)
            + [SEP_ID] + attr_ids + [AGENT_ID])


def _pooled(params: LMParams, ids: list[int]) -> np.ndarray:
    states, _ = forward(params, [BOS_ID] + ids)
    return states[1:].mean(axis=0)


def attribute_distribution(params: LMParams, history: DialogHistory,
                           persona: Persona, vocab: Vocabulary,
                           temperature: float = DEFAULT_TEMPERATURE,
                           window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Softmax over cosine(history encoding, attribute encoding) / temperature.

    An empty history carries no signal and yields the uniform distribution.
    """
    if temperature <= 0:
        raise ValidationError("temperature must be positive")
    persona.check(vocab)
    history.check()
    n = len(persona.attributes)
    hist_ids = encode_history(history, vocab, window)
    if not hist_ids:
        return np.full(n, 1.0 / n)
    h = _pooled(params, hist_ids)
    h_norm = np.linalg.norm(h)
    sims = np.zeros(n)
    for i, attr in enumerate(persona.attributes):
        a = _pooled(params, vocab.encode(attr))
        denom = h_norm * np.linalg.norm(a)
        sims[i] = (h @ a) / denom if denom > 0 else 0.0
    return softmax_rows(sims[None, :] / temperature)[0]


def sample_attribute(dist: np.ndarray, seed: int, greedy: bool = False) -> int:
    """Seeded categorical draw from ``dist`` (argmax when ``greedy``)."""
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.size == 0 or np.any(dist < 0) \
            or abs(dist.sum() - 1.0) > 1e-6:
        raise ValidationError("not a probability distribution")
    if greedy:
        return int(np.argmax(dist))
    rng = np.random.default_rng(seed)
    return int(rng.choice(dist.size, p=dist / dist.sum()))
