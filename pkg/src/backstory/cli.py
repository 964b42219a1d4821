"""Command-line interface: one subcommand per pipeline stage.

Exit status: 0 on success, 1 on validation errors (bad flags, malformed
files, missing artifacts), 2 on numeric failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .checkpoint import (load_classifier, load_lm, save_classifier, save_lm)
from .configio import load_decode_config
from .consistency import train_classifier
from .errors import NumericError, ValidationError
from .harness import (ExperimentConfig, build_dialog_examples,
                      multitask_stream, pseudo_label_corpus, run_eval,
                      run_sweep)
from .model import ModelDims, init_lm
from .persona import DialogHistory, Persona, Turn
from .pipeline import respond
from .retrieval import index_stories, load_index, save_index
from .soft_decode import DecodeConfig
from .toydata import ToySizes, corpus_texts, generate_toy_corpora, read_jsonl, write_jsonl
from .train import TrainConfig, train_lm
from .vocab import Vocabulary, build_vocab


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors."""

    def error(self, message):
        raise ValidationError(message)


def _corpora_from_dir(data_dir: Path):
    from .toydata import ToyCorpora
    names = ("dialogs", "stories", "personas", "pairs")
    rows = {}
    for name in names:
        path = data_dir / f"{name}.jsonl"
        if not path.exists():
            raise ValidationError(f"missing corpus file: {path}")
        rows[name] = read_jsonl(path)
    return ToyCorpora(**rows)


def _load_vocab(path: Path, corpora=None, max_size: int = 2000) -> Vocabulary:
    if path.exists():
        return Vocabulary.load(path)
    if corpora is None:
        raise ValidationError(f"missing vocabulary file: {path}")
    vocab = build_vocab(corpus_texts(corpora), max_size=max_size)
    vocab.save(path)
    return vocab


def _decode_config(args) -> DecodeConfig:
    cfg = DecodeConfig()
    if getattr(args, "config", None):
        cfg = load_decode_config(args.config, base=cfg)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = ToySizes(dialogs=args.dialogs, stories=args.stories,
                     personas=args.personas, pairs=args.pairs)
    corpora = generate_toy_corpora(args.seed, sizes)
    for name in ("dialogs", "stories", "personas", "pairs"):
        write_jsonl(out / f"{name}.jsonl", getattr(corpora, name))
    print(f"wrote 4 corpora to {out}")
    return 0


def cmd_train_lm(args) -> int:
    data_dir = Path(args.data)
    corpora = _corpora_from_dir(data_dir)
    vocab = _load_vocab(Path(args.vocab), corpora, max_size=args.vocab_size)
    dims = ModelDims(d_model=args.dim, n_layers=args.layers,
                     n_heads=args.heads, t_max=args.t_max,
                     vocab_size=len(vocab))
    tcfg = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                       lr=args.lr, seed=args.seed)

    if args.mode == "dialog":
        dialogs = corpora.dialogs
    elif args.mode == "pseudo":
        if not args.index:
            raise ValidationError("--index is required for --mode pseudo")
        base = load_lm(args.base_lm) if args.base_lm else None
        if base is None:
            raise ValidationError("--base-lm is required for --mode pseudo")
        index = load_index(args.index, params=base, vocab=vocab)
        dialogs = pseudo_label_corpus(corpora.dialogs, index, args.ratio,
                                      args.seed)
    else:  # multitask
        dialogs = None

    if args.mode == "multitask":
        examples = multitask_stream(corpora.dialogs, corpora.stories, vocab,
                                    args.ratio, args.seed)
    else:
        examples = build_dialog_examples(dialogs, vocab)

    result = train_lm(examples, init_lm(dims, seed=args.seed), tcfg)
    save_lm(args.out, result.params)
    final = result.losses[-1][1] if result.losses else float("nan")
    print(f"trained {args.mode} model: {args.steps} steps, "
          f"final loss {final:.4f} -> {args.out}")
    return 0


def cmd_train_classifier(args) -> int:
    pairs = read_jsonl(args.pairs)
    lm = load_lm(args.lm)
    vocab = Vocabulary.load(args.vocab)
    tcfg = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                       lr=args.lr, seed=args.seed)
    cls, report = train_classifier(pairs, lm, vocab, tcfg)
    save_classifier(args.out, cls, lm.fingerprint())
    print(f"classifier holdout accuracy {report.holdout_accuracy:.3f} "
          f"-> {args.out}")
    return 0


def cmd_index(args) -> int:
    stories = read_jsonl(args.stories)
    lm = load_lm(args.lm)
    vocab = Vocabulary.load(args.vocab)
    index = index_stories(lm, vocab, stories)
    save_index(args.out, index)
    print(f"indexed {len(index)} stories -> {args.out}")
    return 0


def _parse_turn(raw: str) -> Turn:
    if ":" not in raw:
        raise ValidationError(
            f"--turn needs 'speaker: text', got {raw!r}")
    speaker, text = raw.split(":", 1)
    return Turn(speaker.strip(), text.strip())


def cmd_decode(args) -> int:
    lm = load_lm(args.lm)
    vocab = Vocabulary.load(args.vocab)
    cls, fingerprint = load_classifier(args.classifier)
    if fingerprint != lm.fingerprint():
        raise ValidationError(
            "classifier was trained against a different model checkpoint")
    index = load_index(args.index, params=lm, vocab=vocab)
    cfg = _decode_config(args)
    history = DialogHistory([_parse_turn(t) for t in args.turn])
    persona = Persona([a.strip() for a in args.persona.split(";") if a.strip()])
    decoded = respond(lm, cls, index, vocab, history, persona, cfg)
    print(decoded.text)
    if args.out:
        payload = {
            "text": decoded.text,
            "token_ids": decoded.token_ids,
            "attribute": decoded.attribute,
            "story_id": decoded.story_id,
            "story_text": decoded.story_text,
            "warning": decoded.warning,
            "trace": [{"total": t.total, "entail_term": t.entail_term,
                       "story_ce": t.story_ce} for t in decoded.trace],
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n",
                                  encoding="utf-8")
    return 0


def _experiment_config(args) -> ExperimentConfig:
    systems = ([s.strip() for s in args.systems.split(",") if s.strip()]
               if args.systems else None)
    kwargs = dict(
        dialogs_path=args.dialogs, vocab_path=args.vocab, lm_path=args.lm,
        classifier_path=args.classifier, index_path=args.index,
        report_dir=args.report_dir, n_prompts=args.n_prompts,
        nucleus_p=args.nucleus_p, decode=_decode_config(args),
        pseudo_lm_path=args.pseudo_lm, multitask_lm_path=args.multitask_lm,
    )
    if systems is not None:
        kwargs["systems"] = systems
    if getattr(args, "values", None):
        kwargs["sweep"] = [float(v) for v in args.values.split(",")]
    return ExperimentConfig(**kwargs)


def cmd_eval(args) -> int:
    paths = run_eval(_experiment_config(args))
    print(f"report written: {paths['json']} and {paths['table']}")
    return 0


def cmd_sweep(args) -> int:
    paths = run_sweep(_experiment_config(args))
    print(f"sweep written: {paths['json']} and {paths['table']}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_state, create_app

    state = build_state(lm_path=args.lm, classifier_path=args.classifier,
                        index_path=args.index, vocab_path=args.vocab,
                        personas_path=args.personas,
                        decode=_decode_config(args),
                        session_log=args.session_log, seed=args.seed or 0,
                        static_dir=args.static_dir)
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_artifact_flags(p, *, dialogs=False, personas=False):
    p.add_argument("--lm", required=True, help="language model checkpoint")
    p.add_argument("--classifier", required=True,
                   help="entailment classifier checkpoint")
    p.add_argument("--index", required=True, help="story index file")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    if dialogs:
        p.add_argument("--dialogs", required=True, help="dialog corpus JSONL")
    if personas:
        p.add_argument("--personas", required=True,
                       help="persona corpus JSONL")


def _add_train_flags(p, steps, batch_size, lr):
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--batch-size", type=int, default=batch_size)
    p.add_argument("--lr", type=float, default=lr)


def build_parser() -> _Parser:
    parser = _Parser(prog="backstory",
                     description="Story-grounded dialog response pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the toy corpora")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dialogs", type=int, default=120)
    p.add_argument("--stories", type=int, default=40)
    p.add_argument("--personas", type=int, default=10)
    p.add_argument("--pairs", type=int, default=120)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-lm", help="train a language model")
    p.add_argument("--data", required=True,
                   help="directory holding the gen-data corpora")
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--vocab", required=True,
                   help="vocabulary path (built and saved if absent)")
    p.add_argument("--mode", choices=("dialog", "pseudo", "multitask"),
                   default="dialog")
    p.add_argument("--index", help="story index (pseudo mode)")
    p.add_argument("--base-lm", help="model that embedded the index "
                                     "(pseudo mode)")
    p.add_argument("--ratio", type=float, default=0.5,
                   help="pseudo replacement / multitask story ratio")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=24)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--t-max", type=int, default=192)
    p.add_argument("--vocab-size", type=int, default=2000)
    _add_train_flags(p, steps=800, batch_size=16, lr=3e-3)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("train-classifier",
                       help="train the entailment classifier")
    p.add_argument("--pairs", required=True, help="attribute/response pairs")
    p.add_argument("--lm", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p, steps=150, batch_size=8, lr=0.01)
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("index", help="embed and index the story corpus")
    p.add_argument("--stories", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("decode", help="generate one grounded response")
    _add_artifact_flags(p)
    p.add_argument("--turn", action="append", default=[],
                   help="history turn as 'speaker: text' (repeatable)")
    p.add_argument("--persona", required=True,
                   help="semicolon-separated persona attributes")
    p.add_argument("--config", help="decode config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the full decode record as JSON")
    p.set_defaults(func=cmd_decode)

    for name, func, extra in (("eval", cmd_eval, False),
                              ("sweep-lambda", cmd_sweep, True)):
        p = sub.add_parser(name, help=f"run the {name} harness")
        _add_artifact_flags(p, dialogs=True)
        p.add_argument("--report-dir", required=True)
        p.add_argument("--systems", help="comma-separated system subset")
        p.add_argument("--n-prompts", type=int)
        p.add_argument("--nucleus-p", type=float, default=0.9)
        p.add_argument("--pseudo-lm", help="pseudo-trained model checkpoint")
        p.add_argument("--multitask-lm",
                       help="multitask-trained model checkpoint")
        p.add_argument("--config", help="decode config file")
        p.add_argument("--seed", type=int)
        if extra:
            p.add_argument("--values", help="comma-separated weights, "
                                            "default 0.05,1,5")
        p.set_defaults(func=func)

    p = sub.add_parser("serve", help="run the chat HTTP service")
    _add_artifact_flags(p, personas=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--config", help="decode config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--session-log",
                   help="append-only JSONL transcript log path")
    p.add_argument("--static-dir", default="frontend/dist",
                   help="directory with the built chat UI (optional)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
