"""Attribute chooser and dialog-context encoding."""

from __future__ import annotations

import numpy as np
import pytest

from backstory.errors import ValidationError
from backstory.model import ModelDims, init_lm
from backstory.persona import (DialogHistory, Persona, Turn,
                               attribute_distribution, encode_context,
                               encode_history, sample_attribute)
from backstory.vocab import (AGENT_ID, BOS_ID, SEP_ID, USER_ID, Vocabulary,
                             build_vocab)


@pytest.fixture(scope="module")
def setup():
    texts = ["i like gardening", "i love cooking", "i play guitar",
             "what do you do for fun", "tell me about your day",
             "my garden is doing well"]
    vocab = build_vocab(texts, max_size=100)
    params = init_lm(ModelDims(d_model=16, n_layers=1, n_heads=2, t_max=64,
                               vocab_size=len(vocab)), seed=0)
    return params, vocab


def test_encode_history_layout():
    vocab = build_vocab(["hi there", "hello"], max_size=50)
    hist = DialogHistory([Turn("user", "hi there"), Turn("agent", "hello")])
    ids = encode_history(hist, vocab)
    hi, there, hello = vocab.encode("hi there") + vocab.encode("hello")
    assert ids == [USER_ID, hi, there, AGENT_ID, hello]


def test_encode_context_layout():
    vocab = build_vocab(["hi", "i like tea"], max_size=50)
    hist = DialogHistory([Turn("user", "hi")])
    ids = encode_context(hist, "i like tea", vocab)
    hi = vocab.encode("hi")
    attr = vocab.encode("i like tea")
    assert ids == [BOS_ID, USER_ID] + hi + [SEP_ID] + attr + [AGENT_ID]


def test_encode_history_window_truncates():
    vocab = build_vocab(["a", "b", "c"], max_size=50)
    turns = [Turn("user", "a"), Turn("agent", "b"), Turn("user", "c")]
    ids = encode_history(DialogHistory(turns), vocab, window=2)
    assert ids == [AGENT_ID] + vocab.encode("b") + [USER_ID] + vocab.encode("c")


def test_non_alternating_speakers_rejected():
    hist = DialogHistory([Turn("user", "a"), Turn("user", "b")])
    with pytest.raises(ValidationError, match="alternate"):
        hist.check()


def test_unknown_speaker_rejected():
    with pytest.raises(ValidationError, match="speaker"):
        DialogHistory([Turn("bot", "a")]).check()


def test_single_attribute_is_certain(setup):
    params, vocab = setup
    hist = DialogHistory([Turn("user", "what do you do for fun")])
    dist = attribute_distribution(params, hist, Persona(["i like gardening"]),
                                  vocab)
    np.testing.assert_allclose(dist, [1.0], atol=1e-12)


def test_identical_attributes_split_evenly(setup):
    params, vocab = setup
    hist = DialogHistory([Turn("user", "tell me about your day")])
    persona = Persona(["i like gardening", "i like gardening"])
    dist = attribute_distribution(params, hist, persona, vocab)
    np.testing.assert_allclose(dist, [0.5, 0.5], atol=1e-12)


def test_distribution_sums_to_one(setup):
    params, vocab = setup
    hist = DialogHistory([Turn("user", "what do you do for fun")])
    persona = Persona(["i like gardening", "i love cooking", "i play guitar"])
    dist = attribute_distribution(params, hist, persona, vocab)
    assert np.all(dist > 0)
    assert abs(dist.sum() - 1.0) < 1e-9


def test_attribute_permutation_permutes_probabilities(setup):
    params, vocab = setup
    hist = DialogHistory([Turn("user", "my garden is doing well")])
    attrs = ["i like gardening", "i love cooking", "i play guitar"]
    dist = attribute_distribution(params, hist, Persona(attrs), vocab)
    rolled = attribute_distribution(params, hist,
                                    Persona(attrs[1:] + attrs[:1]), vocab)
    np.testing.assert_allclose(np.roll(dist, -1), rolled, atol=1e-12)


def test_low_temperature_sharpens_to_argmax(setup):
    params, vocab = setup
    hist = DialogHistory([Turn("user", "my garden is doing well")])
    persona = Persona(["i like gardening", "i love cooking", "i play guitar"])
    warm = attribute_distribution(params, hist, persona, vocab, temperature=0.5)
    cold = attribute_distribution(params, hist, persona, vocab,
                                  temperature=1e-6)
    assert np.argmax(cold) == np.argmax(warm)
    assert cold[np.argmax(cold)] > 1.0 - 1e-9


def test_argmax_invariant_to_temperature(setup):
    params, vocab = setup
    hist = DialogHistory([Turn("user", "what do you do for fun")])
    persona = Persona(["i like gardening", "i love cooking", "i play guitar"])
    argmaxes = {
        int(np.argmax(attribute_distribution(params, hist, persona, vocab,
                                             temperature=t)))
        for t in (0.1, 0.5, 2.0, 10.0)
    }
    assert len(argmaxes) == 1


def test_window_ignores_older_turns(setup):
    params, vocab = setup
    persona = Persona(["i like gardening", "i love cooking"])
    recent = [Turn("agent", "tell me about your day"),
              Turn("user", "my garden is doing well")]
    short = DialogHistory(recent)
    long = DialogHistory([Turn("agent", "i play guitar"),
                          Turn("user", "what do you do for fun")] + recent)
    d_short = attribute_distribution(params, short, persona, vocab, window=2)
    d_long = attribute_distribution(params, long, persona, vocab, window=2)
    np.testing.assert_allclose(d_short, d_long, atol=1e-12)


def test_empty_history_is_uniform(setup):
    params, vocab = setup
    persona = Persona(["i like gardening", "i love cooking", "i play guitar"])
    dist = attribute_distribution(params, DialogHistory(), persona, vocab)
    np.testing.assert_allclose(dist, np.full(3, 1 / 3), atol=1e-12)


def test_empty_persona_rejected(setup):
    params, vocab = setup
    with pytest.raises(ValidationError, match="persona"):
        attribute_distribution(params, DialogHistory(), Persona([]), vocab)


def test_bad_temperature_rejected(setup):
    params, vocab = setup
    with pytest.raises(ValidationError, match="temperature"):
        attribute_distribution(params, DialogHistory(),
                               Persona(["i like gardening"]), vocab,
                               temperature=0.0)


def test_sample_one_hot_always_that_index():
    dist = np.array([0.0, 1.0, 0.0])
    assert all(sample_attribute(dist, seed) == 1 for seed in range(20))


def test_sample_same_seed_same_index():
    dist = np.array([0.3, 0.4, 0.3])
    assert sample_attribute(dist, 11) == sample_attribute(dist, 11)


def test_sample_uniform_frequencies():
    dist = np.full(4, 0.25)
    counts = np.zeros(4)
    for seed in range(10_000):
        counts[sample_attribute(dist, seed)] += 1
    freqs = counts / 10_000
    assert np.all(np.abs(freqs - 0.25) < 0.04)


def test_sample_greedy_is_argmax():
    dist = np.array([0.2, 0.5, 0.3])
    assert sample_attribute(dist, 0, greedy=True) == 1


def test_sample_rejects_bad_distribution():
    with pytest.raises(ValidationError):
        sample_attribute(np.array([0.5, 0.2]), 0)
