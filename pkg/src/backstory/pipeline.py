"""End-to-end response generation.

One call runs the whole pipeline: choose a persona attribute from the
history, retrieve the best-matching story, rewrite it to first person,
then adapt it into a response by iterative lattice optimization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .consistency import ClassifierParams, encode_attribute
from .model import LMParams
from .narrative import adapt_story
from .persona import (DialogHistory, Persona, attribute_distribution,
                      encode_context, sample_attribute)
from .retrieval import StoryIndex, retrieve
from .soft_decode import (DecodeConfig, LossBreakdown, backward_pass,
                          constraint_loss, forward_mix_pass, init_lattice,
                          realize)
from .vocab import Vocabulary


@dataclass
class DecodedResponse:
    text: str
    token_ids: list[int]
    attribute: str
    attribute_index: int
    story_id: str
    story_text: str
    trace: list[LossBreakdown] = field(default_factory=list)
    realize_mode: str = "argmax"
    warning: str | None = None


def respond(params: LMParams, cls: ClassifierParams, index: StoryIndex,
            vocab: Vocabulary, history: DialogHistory, persona: Persona,
            cfg: DecodeConfig) -> DecodedResponse:
    """Generate one agent response for the current dialog state."""
    persona.check(vocab)
    dist = attribute_distribution(params, history, persona, vocab,
                                  window=cfg.history_window)
    idx = sample_attribute(dist, cfg.seed,
                           greedy=cfg.attribute_mode == "argmax")
    attribute = persona.attributes[idx]

    entry, _ = retrieve(index, attribute)
    story = adapt_story(entry.story_id, entry.text)
    story_ids = vocab.encode(story.text)
    attr_embedding = encode_attribute(params, vocab, attribute)

    context = encode_context(history, attribute, vocab, cfg.history_window)
    lattice = init_lattice(params, context, cfg)
    trace: list[LossBreakdown] = []
    for _ in range(cfg.iterations):
        stepped = backward_pass(params, cls, lattice, story_ids,
                                attr_embedding, cfg)
        lattice = forward_mix_pass(params, stepped, cfg)
        trace.append(constraint_loss(params, cls, lattice, story_ids,
                                     attr_embedding, cfg))
    ids, text = realize(params, lattice, vocab, cfg)
    return DecodedResponse(text=text, token_ids=ids, attribute=attribute,
                           attribute_index=idx, story_id=story.story_id,
                           story_text=story.text, trace=trace,
                           realize_mode=cfg.realize_mode,
                           warning=story.warning)
