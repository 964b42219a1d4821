"""Diversity and overlap metrics over realized responses.

All statistics pool n-grams across the whole response list (corpus-pooled,
not per-response averaged) and count whitespace tokens of the final text.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


@dataclass
class CorpusStats:
    tables: dict[int, Counter] = field(default_factory=dict)
    totals: dict[int, int] = field(default_factory=dict)
    n_responses: int = 0


def corpus_stats(responses: list[str], orders: tuple[int, ...] = (1, 2, 3)
                 ) -> CorpusStats:
    if not responses:
        raise ValidationError("empty response list")
    stats = CorpusStats(n_responses=len(responses))
    for n in orders:
        table: Counter = Counter()
        for text in responses:
            table.update(_ngrams(text.split(), n))
        stats.tables[n] = table
        stats.totals[n] = sum(table.values())
    return stats


def distinct_n(responses: list[str], n: int, pooled: bool = True) -> float:
    """Percentage of distinct n-grams among all n-gram occurrences.

    Pooled over the corpus by default; pooled=False averages the
    per-response percentage instead (responses shorter than n are skipped).
    """
    if not responses:
        raise ValidationError("empty response list")
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not pooled:
        scores = []
        for text in responses:
            grams = _ngrams(text.split(), n)
            if grams:
                scores.append(100.0 * len(set(grams)) / len(grams))
        if not scores:
            raise ValidationError("no n-grams")
        return float(np.mean(scores))
    table: Counter = Counter()
    for text in responses:
        table.update(_ngrams(text.split(), n))
    total = sum(table.values())
    if total == 0:
        raise ValidationError("no n-grams")
    return 100.0 * len(table) / total


def _entropy(table: Counter) -> float:
    total = sum(table.values())
    probs = np.array([c / total for c in table.values()])
    return float(-(probs * np.log(probs)).sum())


def entr(responses: list[str]) -> float:
    """Geometric mean of the pooled 1/2/3-gram Shannon entropies."""
    stats = corpus_stats(responses)
    if stats.totals[3] == 0:
        raise ValidationError("no n-grams")
    entropies = [_entropy(stats.tables[n]) for n in (1, 2, 3)]
    if any(h == 0.0 for h in entropies):
        return 0.0
    return float(np.exp(np.mean(np.log(entropies))))


def overlap_f1(response: str, story: str) -> float:
    """Unigram multiset F1 between two texts."""
    a = Counter(response.split())
    b = Counter(story.split())
    if not a or not b:
        raise ValidationError("overlap_f1 needs non-empty texts")
    matched = sum((a & b).values())
    precision = matched / sum(a.values())
    recall = matched / sum(b.values())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate_corpus(responses: list[str],
                    stories: list[str] | None = None) -> dict:
    """One report row: diversity metrics plus story overlap if available."""
    row = {
        "d1": distinct_n(responses, 1),
        "d2": distinct_n(responses, 2),
        "entr": entr(responses),
        "n": len(responses),
    }
    if stories is not None:
        if len(stories) != len(responses):
            raise ValidationError("responses and stories differ in length")
        row["mean_overlap_f1"] = float(np.mean(
            [overlap_f1(r, s) for r, s in zip(responses, stories)]))
    else:
        row["mean_overlap_f1"] = None
    return row


def format_table(report: dict[str, dict]) -> str:
    """Aligned plain-text table, one row per system."""
    headers = ["system", "D-1", "D-2", "ENTR", "overlap-F1", "n"]
    rows = []
    for system, row in report.items():
        overlap = row.get("mean_overlap_f1")
        rows.append([
            system,
            f"{row['d1']:.2f}",
            f"{row['d2']:.2f}",
            f"{row['entr']:.3f}",
            "-" if overlap is None else f"{overlap:.3f}",
            str(row["n"]),
        ])
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"
