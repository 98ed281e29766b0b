"""Full-ranking top-K evaluation: Recall@K, NDCG@K, and the sparsity
diagnostic on normalized edge differences.

Every item the user trained on is excluded from the candidate list; ties
break by ascending item index so rankings are reproducible.  Users with no
held-out items are excluded from metric averages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class EvalError(ValueError):
    pass


@dataclass
class GroundTruth:
    """Per-user held-out items plus the training items to exclude."""

    test_items: list[np.ndarray]
    train_items: list[np.ndarray]

    def __post_init__(self):
        if len(self.test_items) != len(self.train_items):
            raise EvalError("test/train lists must cover the same users")
        for u, (te, tr) in enumerate(zip(self.test_items, self.train_items)):
            if np.intersect1d(te, tr).size:
                raise EvalError(f"user {u} has overlapping train/test items")

    @property
    def num_users(self) -> int:
        return len(self.test_items)


def score_users(E_K: np.ndarray, users, num_users: int) -> np.ndarray:
    """Inner-product scores of each given user against all items.

    E_K stacks user rows [0, n) above item rows [n, n+m).
    """
    E_K = np.asarray(E_K, dtype=np.float64)
    users = np.asarray(users, dtype=np.int64)
    if users.size and (users.min() < 0 or users.max() >= num_users):
        raise EvalError(f"user index out of range [0, {num_users})")
    return E_K[users] @ E_K[num_users:].T


def top_k(scores: np.ndarray, exclude, K: int) -> np.ndarray:
    """Indices of the K best non-excluded items, ties by ascending index."""
    if K < 1:
        raise EvalError(f"K must be >= 1, got {K}")
    scores = np.asarray(scores, dtype=np.float64).copy()
    exclude = np.asarray(list(exclude), dtype=np.int64)
    if exclude.size:
        scores[exclude] = -np.inf
    # lexsort: last key dominates -> sort by descending score, then index
    order = np.lexsort((np.arange(len(scores)), -scores))
    budget = min(K, len(scores) - exclude.size)
    return order[:budget]


def recall_at_k(ranked: list[np.ndarray], truth: GroundTruth, K: int) -> float:
    """Mean over users (with nonempty test sets) of |hits| / |test items|."""
    vals = []
    for r, te in zip(ranked, truth.test_items):
        if len(te) == 0:
            continue
        hits = np.isin(r[:K], te).sum()
        vals.append(hits / len(te))
    if not vals:
        raise EvalError("no user has a nonempty test set")
    return float(np.mean(vals))


def ndcg_at_k(ranked: list[np.ndarray], truth: GroundTruth, K: int) -> float:
    """Binary-relevance NDCG; the ideal DCG is truncated at min(K, |test|)."""
    discounts = 1.0 / np.log2(np.arange(2, K + 2))
    vals = []
    for r, te in zip(ranked, truth.test_items):
        if len(te) == 0:
            continue
        rel = np.isin(r[:K], te).astype(np.float64)
        dcg = float(rel @ discounts[: len(rel)])
        idcg = float(discounts[: min(K, len(te))].sum())
        vals.append(dcg / idcg)
    if not vals:
        raise EvalError("no user has a nonempty test set")
    return float(np.mean(vals))


def sparsity_ratio(edge_diffs: np.ndarray, threshold: float = 0.2) -> float:
    """Fraction of entries with |x| strictly below the threshold."""
    if threshold <= 0:
        raise EvalError(f"threshold must be positive, got {threshold}")
    edge_diffs = np.asarray(edge_diffs)
    if edge_diffs.size == 0:
        raise EvalError("empty edge-difference matrix")
    return float(np.mean(np.abs(edge_diffs) < threshold))


def rank_all_users(E_K: np.ndarray, truth: GroundTruth, K: int,
                   num_users: int) -> list[np.ndarray]:
    """Full ranking for every user, training items excluded."""
    ranked = []
    chunk = 512
    for start in range(0, truth.num_users, chunk):
        users = np.arange(start, min(start + chunk, truth.num_users))
        scores = score_users(E_K, users, num_users)
        for row, u in zip(scores, users):
            ranked.append(top_k(row, truth.train_items[u], K))
    return ranked


def evaluate_model(E_K: np.ndarray, truth: GroundTruth, ks, num_users: int) -> list[dict]:
    """Metric rows {metric, K, value, n_users} for each requested cutoff."""
    n_eval = sum(1 for te in truth.test_items if len(te) > 0)
    rows = []
    for K in ks:
        ranked = rank_all_users(E_K, truth, K, num_users)
        rows.append({"metric": "recall", "K": K,
                     "value": recall_at_k(ranked, truth, K), "n_users": n_eval})
        rows.append({"metric": "ndcg", "K": K,
                     "value": ndcg_at_k(ranked, truth, K), "n_users": n_eval})
    return rows


def write_metrics_json(rows: list[dict], path) -> None:
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
