"""Comparison baselines and the low-text summary modes.

The two text baselines match each reference-summary sentence against the
ground-truth sentence annotations of the video directly, in text-embedding
space. ``video_mmr`` and ``uniform_sample`` pick keyframes with no text at
all, and ``duplicate_sentence`` turns one sentence into an N-sentence input
for the regular decoders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding_store import EmbeddingMatrix, compatibility_matrix
from .decoders import TIE_RTOL, first_argmax


@dataclass
class Assignment:
    indices: list[int]
    score: float


@dataclass
class KeyframeSet:
    indices: list[int]
    lam: float | None = None


def greedy_select(ref_sents, gt_sents) -> Assignment:
    """Independent best ground-truth match per reference sentence (repeats allowed)."""
    sim = compatibility_matrix(ref_sents, gt_sents)
    return greedy_from_similarity(sim)


def greedy_from_similarity(sim) -> Assignment:
    sim = np.asarray(sim, dtype=np.float64)
    idx = [first_argmax(row) for row in sim]
    return Assignment(idx, float(sum(sim[r, g] for r, g in enumerate(idx))))


def ordered_subshot_dp(ref_sents, gt_sents) -> Assignment:
    sim = compatibility_matrix(ref_sents, gt_sents)
    return ordered_from_similarity(sim)


def ordered_from_similarity(sim) -> Assignment:
    """Strictly increasing assignment with maximal total similarity.

    ``best[r, g]`` is the best total for references ``r..R-1`` using ground
    truth indices ``>= g``. Reading the table front to back and taking the
    smallest optimal index yields the lexicographically smallest optimum.
    """
    sim = np.asarray(sim, dtype=np.float64)
    R, G = sim.shape
    if G < R:
        raise ValueError(f"need at least as many ground-truth sentences as references ({G} < {R})")
    best = np.full((R + 1, G + 1), -np.inf)
    best[R, :] = 0.0
    for r in range(R - 1, -1, -1):
        # reference r may take g only if G - g >= R - r
        for g in range(G - (R - r), -1, -1):
            best[r, g] = max(best[r, g + 1], sim[r, g] + best[r + 1, g + 1])
    idx = []
    g = 0
    for r in range(R):
        target = best[r, g]
        tol = TIE_RTOL * max(1.0, abs(target))
        while sim[r, g] + best[r + 1, g + 1] < target - tol:
            g += 1
        idx.append(g)
        g += 1
    return Assignment(idx, float(sum(sim[r, q] for r, q in enumerate(idx))))


def _unit_rows(frames) -> np.ndarray:
    X = frames.data if isinstance(frames, EmbeddingMatrix) else EmbeddingMatrix(frames).data
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def video_mmr(frames, count: int, lam: float = 0.5) -> KeyframeSet:
    """Video-MMR keyframe selection.

    The first keyframe is the frame with the highest mean cosine to all other
    frames. Each later pick maximises
    ``lam * mean_sim(f, unselected - {f}) - (1 - lam) * max_sim(f, selected)``.
    Runs in O(count * F * dim) without forming the F x F similarity matrix.
    """
    X = _unit_rows(frames)
    F = X.shape[0]
    if not (1 <= count <= F):
        raise ValueError(f"count must be in [1, {F}], got {count}")
    if not (0.0 <= lam <= 1.0):
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    self_sim = np.einsum("ij,ij->i", X, X)
    # sim_to_unselected[f] = sum of cos(f, g) over unselected g, f itself included
    sim_to_unselected = X @ X.sum(axis=0)
    first = first_argmax((sim_to_unselected - self_sim) / max(F - 1, 1))
    selected = [first]
    unselected = np.ones(F, dtype=bool)
    unselected[first] = False
    sim_first = X @ X[first]
    sim_to_unselected -= sim_first
    redundancy = sim_first
    while len(selected) < count:
        cand = np.flatnonzero(unselected)
        n_other = cand.size - 1
        rel = (sim_to_unselected[cand] - self_sim[cand]) / n_other if n_other > 0 else np.zeros(cand.size)
        score = lam * rel - (1.0 - lam) * redundancy[cand]
        pick = int(cand[first_argmax(score)])
        selected.append(pick)
        unselected[pick] = False
        sim_pick = X @ X[pick]
        sim_to_unselected -= sim_pick
        redundancy = np.maximum(redundancy, sim_pick)
    return KeyframeSet(selected, lam)


def uniform_sample(F: int, count: int) -> KeyframeSet:
    if not (1 <= count <= F):
        raise ValueError(f"count must be in [1, {F}], got {count}")
    return KeyframeSet([i * F // count for i in range(count)])


def duplicate_sentence(sentence, n: int) -> EmbeddingMatrix:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    v = sentence.data[0] if isinstance(sentence, EmbeddingMatrix) else np.asarray(sentence, dtype=np.float64).ravel()
    return EmbeddingMatrix(np.tile(v, (n, 1)), kind="sentence")
