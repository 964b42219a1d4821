"""Independent oracles used to freeze expected values in the tests.

Everything here is deliberately brute force: central finite differences for
gradients, direct counting for n-gram statistics.  The production code must
agree with these, never the other way around.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Callable

import numpy as np


def fd_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. array x, in place."""
    g = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = g.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = f()
        flat_x[i] = orig - h
        fm = f()
        flat_x[i] = orig
        flat_g[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest |a - n| scaled by the largest magnitude in the numeric gradient."""
    denom = max(float(np.max(np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / denom


def ngram_counts(token_lists: list[list[str]], n: int) -> Counter:
    counts: Counter = Counter()
    for toks in token_lists:
        for i in range(len(toks) - n + 1):
            counts[tuple(toks[i: i + n])] += 1
    return counts


def shannon_entropy(counts: Counter) -> float:
    total = sum(counts.values())
    return -sum((c / total) * math.log(c / total) for c in counts.values())
