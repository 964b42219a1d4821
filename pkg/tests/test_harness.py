"""Training-data assembly and experiment-harness tests."""

import json

import pytest

from backstory.errors import ValidationError
from backstory.harness import (ExperimentConfig, build_dialog_examples,
                               decode_system, dialog_to_example,
                               eval_systems, first_person_story,
                               gold_attribute, multitask_stream,
                               pseudo_label_corpus, run_eval, run_sweep,
                               story_to_example)
from backstory.retrieval import StoryIndex
from backstory.soft_decode import DecodeConfig
from backstory.vocab import EOS_ID

FAST_DECODE = DecodeConfig(max_len=12, iterations=2, step_size=2.5,
                           gamma=0.45, lambda_c=2.0, seed=100)


# ----------------------------------------------------------- example assembly

def test_gold_attribute_prefers_content_overlap():
    row = {"persona": ["i like stars and telescope",
                       "i enjoy my garden and plants"],
           "response": "i spent all day in my garden with the plants"}
    assert gold_attribute(row) == 1


def test_gold_attribute_zero_overlap_falls_back_to_first():
    row = {"persona": ["i like stars", "i like rivers"],
           "response": "completely unrelated words here"}
    assert gold_attribute(row) == 0


def test_dialog_example_masks_only_the_response(bundle):
    row = bundle.corpora.dialogs[0]
    ex = dialog_to_example(row, bundle.vocab)
    resp = bundle.vocab.encode(row["response"]) + [EOS_ID]
    assert ex.ids[-len(resp):] == resp
    assert ex.target_mask.tolist() == (
        [False] * (len(ex.ids) - len(resp)) + [True] * len(resp))
    assert ex.kind == "dialog"


def test_story_example_covers_all_next_tokens(bundle):
    row = bundle.corpora.stories[0]
    ex = story_to_example(row, bundle.vocab)
    assert ex.ids[-1] == EOS_ID
    assert ex.target_mask.tolist() == [False] + [True] * (len(ex.ids) - 1)
    assert ex.kind == "story"


def test_build_dialog_examples_rejects_empty():
    with pytest.raises(ValidationError):
        build_dialog_examples([], None)


# ------------------------------------------------------------ pseudo labeling

def test_first_person_story_is_rewritten(bundle):
    story = first_person_story(bundle.index, "i enjoy my garden and plants")
    assert story.story_id in {e.story_id for e in bundle.index.entries}
    words = story.text.split()
    assert "I" in words or "my" in (w.lower() for w in words)


def test_pseudo_label_ratio_zero_is_identity(bundle):
    dialogs = bundle.corpora.dialogs[:10]
    out = pseudo_label_corpus(dialogs, bundle.index, 0.0, seed=1)
    assert out == dialogs
    assert out is not dialogs  # caller's corpus is never mutated


def test_pseudo_label_replaces_floor_ratio_count(bundle):
    dialogs = bundle.corpora.dialogs[:10]
    out = pseudo_label_corpus(dialogs, bundle.index, 0.55, seed=1)
    changed = [i for i, (a, b) in enumerate(zip(dialogs, out))
               if a["response"] != b["response"]]
    assert len(changed) == 5  # floor(0.55 * 10)
    rewrites = {first_person_story(bundle.index, e.text).text
                for e in bundle.index.entries}
    for i in changed:
        assert out[i]["response"] in rewrites
        assert out[i]["history"] == dialogs[i]["history"]


def test_pseudo_label_is_seeded(bundle):
    dialogs = bundle.corpora.dialogs[:12]
    a = pseudo_label_corpus(dialogs, bundle.index, 0.5, seed=3)
    b = pseudo_label_corpus(dialogs, bundle.index, 0.5, seed=3)
    c = pseudo_label_corpus(dialogs, bundle.index, 0.5, seed=4)
    assert a == b
    assert a != c


def test_pseudo_label_validates_inputs(bundle):
    dialogs = bundle.corpora.dialogs[:4]
    with pytest.raises(ValidationError):
        pseudo_label_corpus(dialogs, bundle.index, 1.5, seed=0)
    empty = StoryIndex(entries=[], lm_fingerprint="none")
    with pytest.raises(ValidationError):
        pseudo_label_corpus(dialogs, empty, 0.5, seed=0)


# ----------------------------------------------------------- multitask stream

def test_multitask_stream_mixes_near_requested_ratio(bundle):
    stream = multitask_stream(bundle.corpora.dialogs, bundle.corpora.stories,
                              bundle.vocab, ratio=0.3, seed=0, n=1000)
    frac = sum(ex.kind == "story" for ex in stream) / len(stream)
    assert abs(frac - 0.3) < 0.05


def test_multitask_stream_cycles_both_corpora(bundle):
    dialogs = bundle.corpora.dialogs[:3]
    stories = bundle.corpora.stories[:2]
    stream = multitask_stream(dialogs, stories, bundle.vocab,
                              ratio=0.5, seed=0, n=40)
    kinds = {ex.kind for ex in stream}
    assert kinds == {"dialog", "story"}
    assert len(stream) == 40


def test_multitask_stream_default_length(bundle):
    stream = multitask_stream(bundle.corpora.dialogs, bundle.corpora.stories,
                              bundle.vocab, ratio=0.5, seed=0)
    assert len(stream) == (len(bundle.corpora.dialogs)
                           + len(bundle.corpora.stories))


def test_multitask_stream_is_seeded(bundle):
    def kinds(seed):
        return [ex.kind for ex in multitask_stream(
            bundle.corpora.dialogs, bundle.corpora.stories, bundle.vocab,
            ratio=0.4, seed=seed, n=64)]
    assert kinds(7) == kinds(7)
    assert kinds(7) != kinds(8)


def test_multitask_stream_rejects_degenerate_ratio(bundle):
    for ratio in (0.0, 1.0, -0.2):
        with pytest.raises(ValidationError):
            multitask_stream(bundle.corpora.dialogs, bundle.corpora.stories,
                             bundle.vocab, ratio=ratio, seed=0)


# -------------------------------------------------------------- system decode

def test_decode_system_rejects_unknown_names(bundle):
    with pytest.raises(ValidationError):
        decode_system("beam", bundle.params, bundle.cls, bundle.index,
                      bundle.vocab, bundle.corpora.dialogs[:1], FAST_DECODE)


def test_pseudo_system_requires_its_model(bundle):
    with pytest.raises(ValidationError):
        decode_system("pseudo", bundle.params, bundle.cls, bundle.index,
                      bundle.vocab, bundle.corpora.dialogs[:1], FAST_DECODE)


def test_retrieval_system_responses_equal_their_stories(bundle):
    results = decode_system("retrieval", bundle.params, bundle.cls,
                            bundle.index, bundle.vocab,
                            bundle.corpora.dialogs[:6], FAST_DECODE)
    for r in results:
        assert r.response == r.story


def test_eval_systems_report_shape(bundle):
    prompts = bundle.corpora.dialogs[:4]
    report = eval_systems(["retrieval", "nucleus"], bundle.params, bundle.cls,
                          bundle.index, bundle.vocab, prompts, FAST_DECODE)
    assert set(report) == {"retrieval", "nucleus"}
    for row in report.values():
        assert set(row) == {"d1", "d2", "entr", "n", "mean_overlap_f1"}
        assert row["n"] == 4
    assert report["retrieval"]["mean_overlap_f1"] == pytest.approx(1.0,
                                                                   abs=1e-9)


def test_systems_share_attribute_and_story_per_prompt(bundle):
    prompts = bundle.corpora.dialogs[:4]
    nucleus = decode_system("nucleus", bundle.params, bundle.cls, bundle.index,
                            bundle.vocab, prompts, FAST_DECODE)
    retrieval = decode_system("retrieval", bundle.params, bundle.cls,
                              bundle.index, bundle.vocab, prompts, FAST_DECODE)
    assert [r.attribute for r in nucleus] == [r.attribute for r in retrieval]
    assert [r.story for r in nucleus] == [r.story for r in retrieval]


# -------------------------------------------------------- file-level orchestra

def _experiment(artifacts, tmp_path, **kw):
    return ExperimentConfig(
        dialogs_path=artifacts / "dialogs.jsonl",
        vocab_path=artifacts / "vocab.json",
        lm_path=artifacts / "lm.bin",
        classifier_path=artifacts / "cls.bin",
        index_path=artifacts / "stories.idx",
        report_dir=tmp_path / "reports",
        decode=FAST_DECODE,
        **kw,
    )


def test_run_eval_writes_report_files(bundle, artifacts, tmp_path):
    cfg = _experiment(artifacts, tmp_path,
                      systems=["retrieval", "nucleus"], n_prompts=4)
    paths = run_eval(cfg)
    report = json.loads(paths["json"].read_text())
    assert set(report) == {"retrieval", "nucleus"}
    table = paths["table"].read_text()
    assert "retrieval" in table and "ENTR" in table


def test_run_eval_missing_artifact_names_the_path(artifacts, tmp_path):
    cfg = _experiment(artifacts, tmp_path, n_prompts=2)
    cfg.lm_path = tmp_path / "nowhere.bin"
    with pytest.raises(ValidationError, match="nowhere.bin"):
        run_eval(cfg)


def test_run_sweep_rows_keyed_by_lambda(bundle, artifacts, tmp_path):
    cfg = _experiment(artifacts, tmp_path, sweep=[0.05, 5.0], n_prompts=3)
    paths = run_sweep(cfg)
    report = json.loads(paths["json"].read_text())
    assert set(report) == {"lambda_d=0.05", "lambda_d=5"}


def test_reports_are_idempotent(bundle, artifacts, tmp_path):
    cfg = _experiment(artifacts, tmp_path,
                      systems=["retrieval", "greedy"], n_prompts=3)
    first = {k: p.read_bytes() for k, p in run_eval(cfg).items()}
    second = {k: p.read_bytes() for k, p in run_eval(cfg).items()}
    assert first == second
