"""Summary-quality metrics (mAP, mAD) and retrieval metrics (R@K, median rank).

Summaries live on a uniform grid of ``L`` subshots; a summary is the list of
grid cells it selects, one per sentence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .embedding_store import compatibility_matrix
from .errors import DimensionMismatch


@dataclass
class SegmentList:
    grid: int
    segments: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.segments = [int(s) for s in self.segments]
        if self.grid < 1:
            raise ValueError(f"grid length must be >= 1, got {self.grid}")
        bad = [s for s in self.segments if not 0 <= s < self.grid]
        if bad:
            raise ValueError(f"segment indices {bad} outside grid [0, {self.grid})")


@dataclass
class RankList:
    ranks: list[int]
    pool_size: int

    def __post_init__(self):
        self.ranks = [int(r) for r in self.ranks]
        bad = [r for r in self.ranks if not 1 <= r <= self.pool_size]
        if bad:
            raise ValueError(f"ranks {bad} outside [1, {self.pool_size}]")


def _check_grid(pred: SegmentList, refs: Sequence[SegmentList]):
    if not refs:
        raise ValueError("need at least one reference summary")
    for r in refs:
        if r.grid != pred.grid:
            raise ValueError(f"grid mismatch: prediction L={pred.grid}, reference L={r.grid}")


def average_precision(pred: Sequence[int], ref: Sequence[int]) -> float:
    """AP of the predicted list, in its given order, against a reference set.

    A prediction is a hit when its grid cell is in the reference and that
    cell has not already been matched by an earlier prediction.
    """
    ref_set = set(ref)
    if not ref_set:
        return 0.0
    matched: set[int] = set()
    hits, total = 0, 0.0
    for pos, seg in enumerate(pred, start=1):
        if seg in ref_set and seg not in matched:
            matched.add(seg)
            hits += 1
            total += hits / pos
    return total / len(ref_set)


def mean_average_precision(pred: SegmentList, refs: Sequence[SegmentList]) -> float:
    _check_grid(pred, refs)
    return 100.0 * float(np.mean([average_precision(pred.segments, r.segments) for r in refs]))


def average_distance(pred: Sequence[int], ref: Sequence[int], grid: int) -> float:
    """Mean distance from each reference cell to its nearest predicted cell, as a fraction of ``grid``."""
    if len(pred) == 0:
        raise ValueError("prediction is empty")
    d = np.abs(np.asarray(ref)[:, None] - np.asarray(pred)[None, :]).min(axis=1)
    return float(d.mean()) / grid


def mean_average_distance(pred: SegmentList, refs: Sequence[SegmentList]) -> float:
    """mAD in percent of the grid length; lower is better."""
    _check_grid(pred, refs)
    if not pred.segments:
        raise ValueError("prediction is empty")
    return 100.0 * float(np.mean([average_distance(pred.segments, r.segments, pred.grid) for r in refs]))


def _ranks_of(ranks) -> np.ndarray:
    return np.asarray(ranks.ranks if isinstance(ranks, RankList) else ranks)


def recall_at_k(ranks, K: int) -> float:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    r = _ranks_of(ranks)
    return float((r <= K).mean()) if r.size else 0.0


def median_rank_percent(ranks: RankList) -> float:
    if not ranks.ranks:
        raise ValueError("no ranks given")
    return 100.0 * float(np.median(ranks.ranks)) / ranks.pool_size


def rank_from_scores(scores, correct: int) -> int:
    """1-based rank of ``correct`` under descending score, ties to the smaller index."""
    scores = np.asarray(scores)
    if not 0 <= correct < scores.size:
        raise IndexError(f"correct index {correct} out of range for {scores.size} candidates")
    s = scores[correct]
    better = np.count_nonzero(scores > s)
    tied_before = np.count_nonzero(scores[:correct] == s)
    return int(better + tied_before + 1)


def rank_items(query, candidates, correct: int) -> int:
    scores = compatibility_matrix(candidates, np.atleast_2d(query))[:, 0]
    return rank_from_scores(scores, correct)


def retrieval_ranks(queries, candidates) -> RankList:
    """Rank of candidate ``i`` for query ``i``, for every query row."""
    S = compatibility_matrix(queries, candidates)
    if S.shape[0] > S.shape[1]:
        raise DimensionMismatch(f"{S.shape[0]} queries but only {S.shape[1]} candidates")
    return RankList([rank_from_scores(S[i], i) for i in range(S.shape[0])], S.shape[1])
