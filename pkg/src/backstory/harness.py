"""Experiment orchestration: example assembly, baselines, evaluation runs.

The functions here glue corpora, trained models and the decoder into the
flows the command-line tool exposes: building masked training examples from
dialog rows, pseudo-labeling a corpus with retrieved stories, mixing dialog
and story examples for multitask training, and decoding a shared prompt set
under several systems to produce a metrics report.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_classifier, load_lm
from .consistency import ClassifierParams
from .decode import greedy_decode, nucleus_decode
from .errors import ValidationError
from .metrics import evaluate_corpus, format_table
from .model import LMParams
from .narrative import Story, adapt_story
from .persona import (DialogHistory, Persona, Turn, attribute_distribution,
                      encode_context, sample_attribute)
from .pipeline import respond
from .retrieval import StoryIndex, load_index, retrieve
from .soft_decode import DecodeConfig
from .toydata import content_words, read_jsonl
from .train import TrainExample
from .vocab import BOS_ID, EOS_ID, Vocabulary

EVAL_SYSTEMS = ("greedy", "nucleus", "retrieval", "pseudo", "multitask",
                "backstory", "backstory-noentail")
DEFAULT_NUCLEUS_P = 0.9


# ----------------------------------------------------------- example assembly

def gold_attribute(row: dict) -> int:
    """Index of the persona attribute sharing the most content words with
    the response; ties and zero-overlap rows fall back to the lowest index."""
    resp_words = content_words(row["response"])
    best, best_overlap = 0, -1
    for i, attr in enumerate(row["persona"]):
        overlap = len(resp_words & content_words(attr))
        if overlap > best_overlap:
            best, best_overlap = i, overlap
    return best


def _history_of(row: dict) -> DialogHistory:
    return DialogHistory([Turn(t["speaker"], t["text"])
                          for t in row["history"]])


def dialog_to_example(row: dict, vocab: Vocabulary,
                      window: int = 4) -> TrainExample:
    """Masked-context example: loss only on the response tokens and EOS."""
    attr = row["persona"][gold_attribute(row)]
    ctx = encode_context(_history_of(row), attr, vocab, window)
    resp = vocab.encode(row["response"]) + [EOS_ID]
    mask = [False] * len(ctx) + [True] * len(resp)
    return TrainExample(ids=ctx + resp, target_mask=np.array(mask),
                        kind="dialog")


def story_to_example(row: dict, vocab: Vocabulary) -> TrainExample:
    """Plain next-token example over a whole story."""
    ids = [BOS_ID] + vocab.encode(row["text"]) + [EOS_ID]
    mask = [False] + [True] * (len(ids) - 1)
    return TrainExample(ids=ids, target_mask=np.array(mask), kind="story")


def build_dialog_examples(dialogs: list[dict], vocab: Vocabulary,
                          window: int = 4) -> list[TrainExample]:
    if not dialogs:
        raise ValidationError("empty dialog corpus")
    return [dialog_to_example(row, vocab, window) for row in dialogs]


# ------------------------------------------------------------ pseudo labeling

def first_person_story(index: StoryIndex, attribute: str) -> Story:
    """Top-retrieved story for the attribute, rewritten to first person."""
    entry, _ = retrieve(index, attribute)
    return adapt_story(entry.story_id, entry.text)


def pseudo_label_corpus(dialogs: list[dict], index: StoryIndex, ratio: float,
                        seed: int) -> list[dict]:
    """Replace a seeded ``⌊ratio·N⌋``-subset of responses with retrieved
    stories, first-personified, for each example's sampled attribute."""
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError("ratio must lie in [0, 1]")
    if len(index) == 0:
        raise ValidationError("empty story index")
    if index.params is None or index.vocab is None:
        raise ValidationError("index has no attached language model")
    out = copy.deepcopy(dialogs)
    n_swap = math.floor(ratio * len(out))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(out), size=n_swap, replace=False)
    for i in sorted(int(j) for j in chosen):
        row = out[i]
        dist = attribute_distribution(index.params, _history_of(row),
                                      Persona(list(row["persona"])),
                                      index.vocab)
        pick = sample_attribute(dist, int(rng.integers(2 ** 31)))
        story = first_person_story(index, row["persona"][pick])
        row["response"] = story.text
    return out


# ----------------------------------------------------------- multitask stream

def multitask_stream(dialogs: list[dict], stories: list[dict],
                     vocab: Vocabulary, ratio: float, seed: int,
                     n: int | None = None,
                     window: int = 4) -> list[TrainExample]:
    """Seeded interleave of masked dialog examples and plain story examples.

    Each position draws a story example with probability ``ratio``; both
    corpora are cycled in order so every row eventually appears.
    """
    if not 0.0 < ratio < 1.0:
        raise ValidationError("mix ratio must lie in (0, 1)")
    if not dialogs or not stories:
        raise ValidationError("both corpora must be non-empty")
    if n is None:
        n = len(dialogs) + len(stories)
    rng = np.random.default_rng(seed)
    stream: list[TrainExample] = []
    di = si = 0
    for _ in range(n):
        if rng.random() < ratio:
            stream.append(story_to_example(stories[si % len(stories)], vocab))
            si += 1
        else:
            stream.append(dialog_to_example(dialogs[di % len(dialogs)],
                                            vocab, window))
            di += 1
    return stream


# -------------------------------------------------------------- system decode

@dataclass
class PromptResult:
    response: str
    story: str          # first-person story paired with this prompt
    attribute: str


def _shared_choice(params: LMParams, index: StoryIndex, vocab: Vocabulary,
                   row: dict, cfg: DecodeConfig) -> tuple[str, Story]:
    """Attribute + story the pipeline would pick for this prompt and seed.

    Baselines reuse this choice so the overlap column is comparable
    across systems: every row is scored against the same story.
    """
    history = _history_of(row)
    persona = Persona(list(row["persona"]))
    dist = attribute_distribution(params, history, persona, vocab,
                                  window=cfg.history_window)
    idx = sample_attribute(dist, cfg.seed,
                           greedy=cfg.attribute_mode == "argmax")
    attribute = persona.attributes[idx]
    return attribute, first_person_story(index, attribute)


def decode_system(system: str, params: LMParams, cls: ClassifierParams,
                  index: StoryIndex, vocab: Vocabulary, prompts: list[dict],
                  cfg: DecodeConfig, nucleus_p: float = DEFAULT_NUCLEUS_P,
                  alt_params: LMParams | None = None) -> list[PromptResult]:
    """Decode every prompt under one named system.

    ``alt_params`` carries the pseudo- or multitask-trained model for those
    two systems; all other systems run on the base ``params``.
    """
    if system not in EVAL_SYSTEMS:
        raise ValidationError(f"unknown system: {system!r}")
    if system in ("pseudo", "multitask") and alt_params is None:
        raise ValidationError(f"system {system!r} needs its trained model")
    results: list[PromptResult] = []
    for i, row in enumerate(prompts):
        pcfg = replace(cfg, seed=cfg.seed + i)
        attribute, story = _shared_choice(params, index, vocab, row, pcfg)
        if system in ("backstory", "backstory-noentail"):
            rcfg = pcfg if system == "backstory" else replace(pcfg,
                                                              lambda_c=0.0)
            dec = respond(params, cls, index, vocab, _history_of(row),
                          Persona(list(row["persona"])), rcfg)
            text = dec.text
        elif system == "retrieval":
            text = story.text
        else:
            model = alt_params if system in ("pseudo", "multitask") else params
            ctx = encode_context(_history_of(row), attribute, vocab,
                                 pcfg.history_window)
            if system == "greedy":
                ids, _ = greedy_decode(model, ctx, cfg.max_len)
            else:
                ids = nucleus_decode(model, ctx, cfg.max_len, nucleus_p,
                                     seed=pcfg.seed)
            text = vocab.decode(ids)
        results.append(PromptResult(response=text, story=story.text,
                                    attribute=attribute))
    return results


def eval_systems(systems: list[str], params: LMParams, cls: ClassifierParams,
                 index: StoryIndex, vocab: Vocabulary, prompts: list[dict],
                 cfg: DecodeConfig, nucleus_p: float = DEFAULT_NUCLEUS_P,
                 pseudo_params: LMParams | None = None,
                 multitask_params: LMParams | None = None) -> dict:
    """Metrics row per system over a shared prompt set."""
    if not prompts:
        raise ValidationError("empty prompt set")
    report: dict[str, dict] = {}
    for system in systems:
        alt = {"pseudo": pseudo_params,
               "multitask": multitask_params}.get(system)
        results = decode_system(system, params, cls, index, vocab, prompts,
                                cfg, nucleus_p, alt_params=alt)
        report[system] = evaluate_corpus([r.response for r in results],
                                         [r.story for r in results])
    return report


def sweep_lambda(values: list[float], params: LMParams, cls: ClassifierParams,
                 index: StoryIndex, vocab: Vocabulary, prompts: list[dict],
                 cfg: DecodeConfig) -> dict:
    """Story-copy study: metrics row per λ_d value."""
    if not values:
        raise ValidationError("sweep list must be non-empty")
    if not prompts:
        raise ValidationError("empty prompt set")
    report: dict[str, dict] = {}
    for lam in values:
        results = decode_system("backstory", params, cls, index, vocab,
                                prompts, replace(cfg, lambda_d=lam))
        report[f"lambda_d={lam:g}"] = evaluate_corpus(
            [r.response for r in results], [r.story for r in results])
    return report


# -------------------------------------------------------- file-level orchestra

@dataclass
class ExperimentConfig:
    dialogs_path: str | Path
    vocab_path: str | Path
    lm_path: str | Path
    classifier_path: str | Path
    index_path: str | Path
    report_dir: str | Path
    systems: list[str] = field(
        default_factory=lambda: [s for s in EVAL_SYSTEMS
                                 if s not in ("pseudo", "multitask")])
    pseudo_lm_path: str | Path | None = None
    multitask_lm_path: str | Path | None = None
    sweep: list[float] = field(default_factory=lambda: [0.05, 1.0, 5.0])
    n_prompts: int | None = None
    nucleus_p: float = DEFAULT_NUCLEUS_P
    decode: DecodeConfig = field(default_factory=DecodeConfig)


def _require(path: str | Path | None, what: str) -> Path:
    if path is None or not Path(path).exists():
        raise ValidationError(f"missing artifact: {what} at {path}")
    return Path(path)


def _load_shared(cfg: ExperimentConfig):
    vocab = Vocabulary.load(_require(cfg.vocab_path, "vocabulary"))
    params = load_lm(_require(cfg.lm_path, "language model"))
    cls, _ = load_classifier(_require(cfg.classifier_path, "classifier"))
    index = load_index(_require(cfg.index_path, "story index"),
                       params=params, vocab=vocab)
    dialogs = read_jsonl(_require(cfg.dialogs_path, "dialog corpus"))
    prompts = dialogs[:cfg.n_prompts] if cfg.n_prompts else dialogs
    return params, cls, index, vocab, prompts


def _write_report(report: dict, out_dir: Path, stem: str) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{stem}.json"
    txt_path = out_dir / f"{stem}.txt"
    json_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    txt_path.write_text(format_table(report), encoding="utf-8")
    return {"json": json_path, "table": txt_path}


def run_eval(cfg: ExperimentConfig) -> dict[str, Path]:
    """Decode the prompt set under each selected system; write the report."""
    params, cls, index, vocab, prompts = _load_shared(cfg)
    pseudo = multitask = None
    if "pseudo" in cfg.systems:
        pseudo = load_lm(_require(cfg.pseudo_lm_path, "pseudo-trained model"))
    if "multitask" in cfg.systems:
        multitask = load_lm(_require(cfg.multitask_lm_path,
                                     "multitask-trained model"))
    report = eval_systems(cfg.systems, params, cls, index, vocab,
                          prompts, cfg.decode, cfg.nucleus_p,
                          pseudo_params=pseudo, multitask_params=multitask)
    return _write_report(report, Path(cfg.report_dir), "report")


def run_sweep(cfg: ExperimentConfig) -> dict[str, Path]:
    """λ_d story-copy sweep; writes sweep.json / sweep.txt."""
    params, cls, index, vocab, prompts = _load_shared(cfg)
    report = sweep_lambda(cfg.sweep, params, cls, index, vocab,
                          prompts, cfg.decode)
    return _write_report(report, Path(cfg.report_dir), "sweep")
