"""Ranking quality of graph scores via normalised discounted cumulative gain."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from segrefine.errors import EmptyList


def dcg(relevances: Sequence[float]) -> float:
    rel = np.asarray(relevances, dtype=np.float64)
    if rel.size == 0:
        raise EmptyList("DCG of an empty ranking")
    discounts = np.log2(np.arange(rel.size, dtype=np.float64) + 2.0)
    return float(np.sum((2.0**rel - 1.0) / discounts))


def ndcg(relevances: Sequence[float]) -> float:
    """DCG of the given order over the DCG of the descending order.

    A ranking whose ideal DCG is zero (all relevances zero) scores 1.
    """
    rel = np.asarray(relevances, dtype=np.float64)
    if rel.size == 0:
        raise EmptyList("nDCG of an empty ranking")
    if np.any(rel < 0):
        raise ValueError("relevances must be non-negative")
    ideal = dcg(np.sort(rel)[::-1])
    if ideal == 0.0:
        return 1.0
    return float(min(1.0, dcg(rel) / ideal))


def dense_relevance(scores: Sequence[float]) -> list[int]:
    """0 for the lowest score, +1 per distinct higher value."""
    if len(scores) == 0:
        raise EmptyList("no scores to rank")
    return [int(value) - 1 for value in rankdata(np.asarray(scores, dtype=np.float64), method="dense")]


def order_by(keys: Sequence[float], *, descending: bool = True) -> list[int]:
    """Stable ordering of indices by ``keys``; ties keep later items first."""
    indices = list(range(len(keys)))[::-1]
    return sorted(indices, key=lambda index: keys[index], reverse=descending)


def ranking_table(relevances: Sequence[int], scorer_scores: Sequence[float]) -> dict[str, float]:
    """nDCG of the ideal, minimum, insertion (latest first) and scorer orders."""
    if len(relevances) != len(scorer_scores):
        raise ValueError("relevances and scores must have equal length")
    rel = list(relevances)
    ascending = order_by(rel, descending=False)
    latest_first = list(range(len(rel)))[::-1]
    by_scorer = order_by(scorer_scores)
    return {
        "ideal": ndcg(sorted(rel, reverse=True)),
        "minimum": ndcg([rel[index] for index in ascending]),
        "so_order": ndcg([rel[index] for index in latest_first]),
        "scorer": ndcg([rel[index] for index in by_scorer]),
    }
