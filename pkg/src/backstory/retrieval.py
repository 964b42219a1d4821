"""Story retrieval by greedy token-embedding matching.

Stories are scored against a query with a symmetric greedy-alignment F1 over
contextual token embeddings: precision is the mean, over candidate rows, of
the best cosine against any reference row; recall is the mirror image.  The
embeddings are the language model's final-layer states, so the same tiny LM
that generates text also ranks stories.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .model import LMParams, forward
from .vocab import BOS_ID, STOPWORDS, Vocabulary

IDX_MAGIC = b"PBSTIDX1"
_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class MatchScore:
    precision: float
    recall: float
    f1: float


@dataclass
class StoryEntry:
    story_id: str
    text: str
    token_ids: list[int]
    embedding: np.ndarray  # (n_tokens, d) float32


@dataclass
class StoryIndex:
    """Embedded story collection, persistable and reloadable bit-exactly."""

    entries: list[StoryEntry]
    lm_fingerprint: str
    params: LMParams | None = field(default=None, repr=False)
    vocab: Vocabulary | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.story_id for e in self.entries]


def embed_tokens(params: LMParams, vocab: Vocabulary, text: str) -> np.ndarray:
    """Contextual embedding rows for the content tokens of ``text``.

    The forward pass runs over the whole text; rows at glue-word positions
    are then dropped so matching is driven by topical tokens.  A text made
    of glue words alone keeps all its rows rather than failing.
    """
    ids = vocab.encode(text)
    if not ids:
        raise ValidationError("no content tokens to embed")
    states, _ = forward(params, [BOS_ID] + ids)
    emb = states[1:]
    keep = [i for i, tok in enumerate(vocab.token_of(t) for t in ids)
            if tok.lower() not in STOPWORDS]
    if keep:
        emb = emb[keep]
    if np.any(np.linalg.norm(emb, axis=1) < _NORM_FLOOR):
        raise ValidationError("degenerate embedding (zero-norm row)")
    return emb


def greedy_match_f1(candidate: np.ndarray, reference: np.ndarray) -> MatchScore:
    """Greedy best-cosine alignment in both directions, combined as F1."""
    cand = np.asarray(candidate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if cand.ndim != 2 or ref.ndim != 2 or cand.shape[0] == 0 or ref.shape[0] == 0:
        raise ValidationError("match inputs must be non-empty 2-d arrays")
    if cand.shape[1] != ref.shape[1]:
        raise ValidationError("embedding widths differ")
    cn = np.linalg.norm(cand, axis=1)
    rn = np.linalg.norm(ref, axis=1)
    if np.any(cn < _NORM_FLOOR) or np.any(rn < _NORM_FLOOR):
        raise ValidationError("degenerate embedding (zero-norm row)")
    sims = (cand / cn[:, None]) @ (ref / rn[:, None]).T
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    denom = precision + recall
    f1 = 2.0 * precision * recall / denom if denom > 0 else 0.0
    return MatchScore(precision=precision, recall=recall, f1=f1)


def index_stories(params: LMParams, vocab: Vocabulary,
                  stories: list[dict]) -> StoryIndex:
    """Embed each story once; entries keep id, raw text and token ids.

    ``stories`` rows are ``{"id": ..., "text": ...}`` mappings.  Embeddings
    are quantized to float32 at build time so that persisting and reloading
    the index reproduces every score exactly.
    """
    if not stories:
        raise ValidationError("empty story corpus")
    entries: list[StoryEntry] = []
    seen: set[str] = set()
    for row in stories:
        if "id" not in row or "text" not in row:
            raise ValidationError("story rows need 'id' and 'text' fields")
        sid = str(row["id"])
        if sid in seen:
            raise ValidationError(f"duplicate story id: {sid}")
        seen.add(sid)
        text = row["text"]
        emb = embed_tokens(params, vocab, text).astype(np.float32)
        entries.append(StoryEntry(story_id=sid, text=text,
                                  token_ids=vocab.encode(text), embedding=emb))
    return StoryIndex(entries=entries, lm_fingerprint=params.fingerprint(),
                      params=params, vocab=vocab)


def retrieve(index: StoryIndex, attribute: str) -> tuple[StoryEntry, MatchScore]:
    """Best-matching story for a persona attribute; ties take the lowest id."""
    if index.params is None or index.vocab is None:
        raise ValidationError("index has no attached language model")
    if not index.entries:
        raise ValidationError("empty story index")
    query = embed_tokens(index.params, index.vocab, attribute).astype(np.float32)
    best: tuple[float, str, int] | None = None
    scores: list[MatchScore] = []
    for pos, entry in enumerate(index.entries):
        score = greedy_match_f1(query, entry.embedding)
        scores.append(score)
        key = (-score.f1, entry.story_id, pos)
        if best is None or key < best:
            best = key
    assert best is not None
    pos = best[2]
    return index.entries[pos], scores[pos]


def save_index(path, index: StoryIndex) -> None:
    with open(path, "wb") as fh:
        fh.write(IDX_MAGIC)
        fh.write(struct.pack("<I", 1))  # format version
        fh.write(index.lm_fingerprint.encode("ascii"))
        fh.write(struct.pack("<I", len(index.entries)))
        for e in index.entries:
            sid = e.story_id.encode("utf-8")
            text = e.text.encode("utf-8")
            fh.write(struct.pack("<I", len(sid)) + sid)
            fh.write(struct.pack("<I", len(text)) + text)
            # embedding rows can be fewer than tokens (glue rows are dropped)
            fh.write(struct.pack("<III", len(e.token_ids),
                                 e.embedding.shape[0], e.embedding.shape[1]))
            fh.write(np.asarray(e.token_ids, dtype="<u4").tobytes())
            fh.write(np.ascontiguousarray(e.embedding, dtype="<f4").tobytes())


def load_index(path, params: LMParams | None = None,
               vocab: Vocabulary | None = None) -> StoryIndex:
    """Reload an index; attaching the LM re-enables querying.

    Raises if the attached model's fingerprint differs from the one the
    embeddings were built with.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != IDX_MAGIC:
        raise ValidationError(f"not a story index (bad magic): {path}")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != 1:
        raise ValidationError(f"unsupported index version {version}")
    fingerprint = blob[12:28].decode("ascii")
    (count,) = struct.unpack_from("<I", blob, 28)
    offset = 32
    entries: list[StoryEntry] = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            sid = blob[offset: offset + n].decode("utf-8")
            offset += n
            (n,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            text = blob[offset: offset + n].decode("utf-8")
            offset += n
            n_tok, n_rows, d = struct.unpack_from("<III", blob, offset)
            offset += 12
            token_ids = np.frombuffer(blob, dtype="<u4", count=n_tok,
                                      offset=offset).astype(int).tolist()
            offset += 4 * n_tok
            emb = np.frombuffer(blob, dtype="<f4", count=n_rows * d,
                                offset=offset).reshape(n_rows, d).copy()
            offset += 4 * n_rows * d
            entries.append(StoryEntry(sid, text, token_ids, emb))
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        raise ValidationError(f"corrupt story index: {exc}") from exc
    if offset != len(blob):
        raise ValidationError(f"trailing bytes in story index: {path}")
    if params is not None and params.fingerprint() != fingerprint:
        raise ValidationError("index was built with a different model checkpoint")
    return StoryIndex(entries=entries, lm_fingerprint=fingerprint,
                      params=params, vocab=vocab)
