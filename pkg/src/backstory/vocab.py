"""Word-level vocabulary with a rule-based tokenizer.

Tokens are whitespace/punctuation splits of the text: words, digit runs,
apostrophe suffixes (``'s``, ``'m``, ...) and single punctuation marks each
become one token.  Everything is case-folded except the pronoun "I", which is
kept canonical.  A fixed block of reserved marker tokens occupies the lowest
ids so that encoded corpora stay valid across vocabulary rebuilds.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ValidationError

PAD = "<pad>"
BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"
SPEAKER_AGENT = "<agent>"
SPEAKER_USER = "<user>"
ATTR_SEP = "<attr>"

RESERVED = (PAD, BOS, EOS, UNK, SPEAKER_AGENT, SPEAKER_USER, ATTR_SEP)

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
AGENT_ID = 4
USER_ID = 5
SEP_ID = 6

# words | digit runs | apostrophe suffixes | any other non-space character
_TOKEN_RE = re.compile(r"[A-Za-z]+|[0-9]+|'[A-Za-z]+|[^\sA-Za-z0-9]")

# tokens glued onto the previous one when rendering text
_ATTACH_LEFT = {".", ",", "!", "?", ";", ":", ")", "]", "%"}

# Function and glue words carrying no topical content.  Used wherever text
# is reduced to its content words: retrieval matching and synthetic-data
# overlap guarantees.
STOPWORDS = frozenset("""
a about all always an and are around at before behind beside busy by each
enjoy every evening for friends from fun he her his hello hi hours house how
i in into is it keep kept later like lot loved me meet morning my near
neighbors nice of often on once one praised she some spend spent street
summer talked tell the their them these they time to told was watched were
weekend what when with work years yes you your yourself do days day
""".split())


def split_tokens(text: str) -> list[str]:
    """Split into word/punctuation tokens, preserving case."""
    return _TOKEN_RE.findall(text)


def fold_token(token: str) -> str:
    if token in ("I", "i"):
        return "I"
    return token.lower()


def tokenize(text: str) -> list[str]:
    """Split and case-fold (the pronoun "I" keeps its capital)."""
    return [fold_token(t) for t in split_tokens(text)]


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens with spaces, attaching punctuation and clitics."""
    out: list[str] = []
    for tok in tokens:
        if out and (tok.startswith("'") or tok in _ATTACH_LEFT):
            out[-1] += tok
        else:
            out.append(tok)
    return " ".join(out)


@dataclass
class Vocabulary:
    """Dense token <-> id mapping with the reserved block at the front."""

    tokens: list[str]
    _ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(RESERVED)]) != RESERVED:
            raise ValidationError("reserved tokens must occupy the lowest ids")
        self._ids = {t: i for i, t in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise ValidationError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise ValidationError(f"token id {idx} out of range")
        return self.tokens[idx]

    def encode(self, text: str) -> list[int]:
        """Tokenize and map to ids; unknown types map to the <unk> id."""
        return [self.id_of(t) for t in tokenize(text)]

    def decode_tokens(self, ids: Sequence[int], skip_special: bool = True) -> list[str]:
        toks = [self.token_of(i) for i in ids]
        if skip_special:
            toks = [t for t in toks if t not in RESERVED]
        return toks

    def decode(self, ids: Sequence[int], skip_special: bool = True) -> str:
        return detokenize(self.decode_tokens(ids, skip_special=skip_special))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = fh.read().splitlines()
        if not tokens:
            raise ValidationError(f"empty vocabulary file: {path}")
        return cls(tokens)


def build_vocab(corpus: Sequence[str], max_size: int = 2000) -> Vocabulary:
    """Count token types over ``corpus`` and keep the most frequent.

    ``max_size`` caps the total vocabulary size including the reserved block.
    Ties on frequency break lexicographically.
    """
    if not corpus:
        raise ValidationError("empty corpus")
    if max_size <= len(RESERVED):
        raise ValidationError(f"max_size must exceed the {len(RESERVED)} reserved ids")
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(t for t in tokenize(text) if t not in RESERVED)
    room = max_size - len(RESERVED)
    kept = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:room]
    return Vocabulary(list(RESERVED) + [tok for tok, _ in kept])
