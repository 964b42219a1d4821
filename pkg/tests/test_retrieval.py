import numpy as np
import pytest

from backstory.errors import ValidationError
from backstory.model import ModelDims, init_lm
from backstory.retrieval import (embed_tokens, greedy_match_f1, index_stories,
                                 load_index, retrieve, save_index)
from backstory.vocab import build_vocab


CORPUS = [
    "the garden was full of roses and tulips",
    "she planted vegetables near the old fence",
    "the kitchen smelled of bread and garlic",
    "he cooked pasta with tomatoes every friday",
    "the orchestra played a quiet violin piece",
    "my sister sailed a small boat across the lake",
]


@pytest.fixture(scope="module")
def lm():
    vocab = build_vocab(CORPUS)
    dims = ModelDims(d_model=16, n_layers=1, n_heads=2, t_max=64,
                     vocab_size=len(vocab))
    return init_lm(dims, seed=3), vocab


def test_self_match_is_one():
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(7, 12))
    score = greedy_match_f1(emb, emb)
    assert abs(score.f1 - 1.0) < 1e-9
    assert abs(score.precision - 1.0) < 1e-9
    assert abs(score.recall - 1.0) < 1e-9


def test_orthogonal_extra_reference_row_halves_recall():
    # candidate {e1} against reference {e1, e2}: precision 1, recall 1/2.
    e1 = np.array([[1.0, 0.0]])
    e2 = np.array([[0.0, 1.0]])
    score = greedy_match_f1(e1, np.vstack([e1, e2]))
    assert abs(score.precision - 1.0) < 1e-9
    assert abs(score.recall - 0.5) < 1e-9
    assert abs(score.f1 - 2.0 / 3.0) < 1e-9


def test_match_is_order_invariant():
    rng = np.random.default_rng(1)
    cand, ref = rng.normal(size=(4, 8)), rng.normal(size=(5, 8))
    perm = rng.permutation(5)
    a = greedy_match_f1(cand, ref)
    b = greedy_match_f1(cand, ref[perm])
    assert a.f1 == b.f1 and a.precision == b.precision and a.recall == b.recall


def test_match_rejects_bad_shapes():
    good = np.ones((2, 4))
    with pytest.raises(ValidationError):
        greedy_match_f1(good, np.ones((0, 4)))
    with pytest.raises(ValidationError):
        greedy_match_f1(np.ones(4), good)
    with pytest.raises(ValidationError):
        greedy_match_f1(good, np.ones((2, 5)))
    with pytest.raises(ValidationError):
        greedy_match_f1(good, np.zeros((2, 4)))


def test_embed_single_content_token_is_one_row(lm):
    params, vocab = lm
    emb = embed_tokens(params, vocab, "garden")
    assert emb.shape == (1, params.dims.d_model)


def test_embed_glue_only_text_keeps_rows(lm):
    params, vocab = lm
    emb = embed_tokens(params, vocab, "the of and")
    assert emb.shape[0] == 3


def test_embed_drops_glue_rows(lm):
    params, vocab = lm
    full = embed_tokens(params, vocab, "the garden of roses")
    assert full.shape[0] == 2  # garden, roses


def test_embed_empty_text_raises(lm):
    params, vocab = lm
    with pytest.raises(ValidationError):
        embed_tokens(params, vocab, "")


def test_retrieve_prefers_shared_content(lm):
    params, vocab = lm
    stories = [{"id": f"s{i}", "text": t} for i, t in enumerate(CORPUS)]
    index = index_stories(params, vocab, stories)
    entry, score = retrieve(index, "i love my garden roses")
    assert entry.story_id == "s0"
    assert 0.0 < score.f1 <= 1.0


def test_retrieve_tie_breaks_on_lowest_id(lm):
    params, vocab = lm
    stories = [{"id": "b", "text": CORPUS[0]}, {"id": "a", "text": CORPUS[0]}]
    index = index_stories(params, vocab, stories)
    entry, _ = retrieve(index, "garden roses")
    assert entry.story_id == "a"


def test_index_order_does_not_change_result(lm):
    params, vocab = lm
    stories = [{"id": f"s{i}", "text": t} for i, t in enumerate(CORPUS)]
    fwd = index_stories(params, vocab, stories)
    rev = index_stories(params, vocab, stories[::-1])
    a, sa = retrieve(fwd, "cooked pasta with garlic")
    b, sb = retrieve(rev, "cooked pasta with garlic")
    assert a.story_id == b.story_id
    assert abs(sa.f1 - sb.f1) < 1e-9


def test_index_rejects_bad_rows(lm):
    params, vocab = lm
    with pytest.raises(ValidationError):
        index_stories(params, vocab, [])
    with pytest.raises(ValidationError):
        index_stories(params, vocab, [{"id": "x"}])
    with pytest.raises(ValidationError):
        index_stories(params, vocab,
                      [{"id": "x", "text": CORPUS[0]},
                       {"id": "x", "text": CORPUS[1]}])


def test_save_load_round_trip_scores(tmp_path, lm):
    params, vocab = lm
    stories = [{"id": f"s{i}", "text": t} for i, t in enumerate(CORPUS)]
    index = index_stories(params, vocab, stories)
    path = tmp_path / "stories.idx"
    save_index(path, index)
    loaded = load_index(path, params=params, vocab=vocab)
    assert loaded.ids() == index.ids()
    for query in ("garden roses", "violin piece", "boat across the lake"):
        a, sa = retrieve(index, query)
        b, sb = retrieve(loaded, query)
        assert a.story_id == b.story_id
        assert sa.f1 == sb.f1  # float32 at build time: reload is bit-exact
    for fresh, orig in zip(loaded.entries, index.entries):
        assert fresh.token_ids == orig.token_ids
        assert np.array_equal(fresh.embedding, orig.embedding)


def test_load_rejects_wrong_model(tmp_path, lm):
    params, vocab = lm
    stories = [{"id": "s0", "text": CORPUS[0]}]
    index = index_stories(params, vocab, stories)
    path = tmp_path / "stories.idx"
    save_index(path, index)
    other = init_lm(params.dims, seed=99)
    with pytest.raises(ValidationError):
        load_index(path, params=other, vocab=vocab)


def test_load_rejects_garbage(tmp_path):
    path = tmp_path / "junk.idx"
    path.write_bytes(b"NOTANIDX" + b"\x00" * 64)
    with pytest.raises(ValidationError):
        load_index(path)


def test_load_rejects_truncation(tmp_path, lm):
    params, vocab = lm
    stories = [{"id": f"s{i}", "text": t} for i, t in enumerate(CORPUS)]
    index = index_stories(params, vocab, stories)
    path = tmp_path / "stories.idx"
    save_index(path, index)
    blob = path.read_bytes()
    path.write_bytes(blob[:-5])
    with pytest.raises(ValidationError):
        load_index(path)


def test_loaded_index_without_model_cannot_query(tmp_path, lm):
    params, vocab = lm
    index = index_stories(params, vocab, [{"id": "s0", "text": CORPUS[0]}])
    path = tmp_path / "stories.idx"
    save_index(path, index)
    bare = load_index(path)
    assert bare.lm_fingerprint == params.fingerprint()
    with pytest.raises(ValidationError):
        retrieve(bare, "garden")
