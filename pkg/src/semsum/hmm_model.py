"""HMM over sampled frames with sentences as the observation sequence.

States are frames ``0..F-1`` in temporal order, observations are the
sentences in order. Transitions only move forward in time and are uniform
over the successors of a state; the emission table keeps, for each
sentence, only its ``k`` best-scoring frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible


def transition_prob(i: int, j: int, F: int) -> float:
    if not (0 <= i < F and 0 <= j < F):
        raise IndexError(f"state indices ({i}, {j}) out of range for F={F}")
    return 1.0 / (F - 1 - i) if j > i else 0.0


def transition_matrix(F: int) -> np.ndarray:
    """Dense F x F forward-only transition table (last row is all zero)."""
    A = np.zeros((F, F))
    for i in range(F - 1):
        A[i, i + 1:] = 1.0 / (F - 1 - i)
    return A


def nonnegative_scores(S) -> np.ndarray:
    """Map cosine scores from [-1, 1] onto [0, 1]; rank order is unchanged."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2:
        raise ValueError(f"compatibility matrix must be 2-D, got shape {S.shape}")
    return np.clip((S + 1.0) / 2.0, 0.0, 1.0)


class ScoreTable:
    """Compatibility scores mapped onto [0, 1], stored sentence-major (N, F).

    Build one per compatibility matrix and hand it to ``minimal_k`` and
    ``build_emission`` to avoid re-mapping the scores on every call.
    """

    def __init__(self, S):
        S = np.asarray(S, dtype=np.float64)
        if S.ndim != 2:
            raise ValueError(f"compatibility matrix must be 2-D, got shape {S.shape}")
        self.F, self.N = S.shape
        T = np.empty((self.N, self.F))
        np.add(S.T, 1.0, out=T)
        T *= 0.5
        np.clip(T, 0.0, 1.0, out=T)
        self.by_sentence = T


def _table(S) -> ScoreTable:
    return S if isinstance(S, ScoreTable) else ScoreTable(S)


def candidate_order(S, K: int | None = None) -> np.ndarray:
    """The K best frames of every sentence column, best first, shape (K, N).

    Ties go to the smaller frame index. Selection is linear in F per column;
    only the K survivors are sorted.
    """
    tab = _table(S)
    F = tab.F
    K = F if K is None else K
    _check_k(K, F)
    out = np.empty((K, tab.N), dtype=np.intp)
    for j, col in enumerate(tab.by_sentence):
        if K == F:
            idx = np.arange(F)
        else:
            kth = col[np.argpartition(-col, K - 1)[K - 1]]
            above = np.flatnonzero(col > kth)
            tied = np.flatnonzero(col == kth)[: K - above.size]
            idx = np.concatenate([above, tied])
        # primary key: score descending, secondary: frame index ascending
        out[:, j] = idx[np.lexsort((idx, -col[idx]))]
    return out


def _check_k(k, F):
    if not (1 <= k <= F):
        raise ValueError(f"k must be in [1, {F}], got {k}")


@dataclass(frozen=True)
class SparseEmission:
    """Top-k emission table.

    ``indices[j]`` holds the k candidate frames of sentence ``j`` (best
    first) and ``values[j]`` their emission probabilities after the dense
    F x N table has been row-normalised.
    """

    F: int
    N: int
    k: int
    indices: np.ndarray  # (N, k) int
    values: np.ndarray  # (N, k) float

    def dense(self) -> np.ndarray:
        return self.dense_by_sentence().T.copy()

    def dense_by_sentence(self) -> np.ndarray:
        """The dense table transposed to (N, F)."""
        Bt = np.zeros((self.N, self.F))
        np.put_along_axis(Bt, self.indices, self.values, axis=1)
        return Bt

    def column(self, j: int) -> list[tuple[int, float]]:
        return list(zip(self.indices[j].tolist(), self.values[j].tolist()))


def build_emission(S, k: int) -> SparseEmission:
    tab = _table(S)
    F, N = tab.F, tab.N
    _check_k(k, F)
    idx = np.ascontiguousarray(candidate_order(tab, k).T)  # (N, k)
    kept = np.take_along_axis(tab.by_sentence, idx, axis=1)
    # row-normalise the dense F x N table: divide by each frame's total kept mass
    row_sum = np.zeros(F)
    np.add.at(row_sum, idx.ravel(), kept.ravel())
    denom = row_sum[idx]
    values = np.divide(kept, denom, out=np.zeros_like(kept), where=denom > 0)
    return SparseEmission(F=F, N=N, k=k, indices=idx, values=values)


def topk_sets(S, k: int) -> list[set[int]]:
    order = candidate_order(S, k)
    return [set(order[:, j].tolist()) for j in range(order.shape[1])]


def is_feasible(sets) -> bool:
    """True iff some strictly increasing choice q_1 < ... < q_N has q_t in sets[t]."""
    prev = -1
    for s in sets:
        later = [q for q in s if q > prev]
        if not later:
            return False
        prev = min(later)
    return True


def _feasible_at(order: np.ndarray, k: int) -> bool:
    prev = -1
    for t in range(order.shape[1]):
        cand = order[:k, t]
        later = cand[cand > prev]
        if later.size == 0:
            return False
        prev = later.min()
    return True


def minimal_k(S, k_init: int = 1) -> int:
    """Smallest k >= k_init whose top-k candidate sets admit a forward path.

    Top-k sets are nested in k, so feasibility is monotone: the search
    gallops upward from ``k_init`` and then bisects. Candidate rankings are
    only materialised as deep as the search needs.
    """
    tab = _table(S)
    F, N = tab.F, tab.N
    if N > F:
        raise Infeasible(f"{N} sentences cannot map to distinct increasing frames among {F}")
    _check_k(k_init, F)
    depth = min(F, max(2 * k_init, 32))
    order = candidate_order(tab, depth)
    if _feasible_at(order, k_init):
        return k_init
    lo, step = k_init, 1
    while True:
        hi = min(lo + step, F)
        if hi > depth:
            depth = min(F, max(2 * depth, hi))
            order = candidate_order(tab, depth)
        if _feasible_at(order, hi):
            break
        lo, step = hi, step * 2
    # lo infeasible, hi feasible
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _feasible_at(order, mid):
            hi = mid
        else:
            lo = mid
    return hi


def initial_distribution(F: int, kind: str = "uniform", emission=None) -> np.ndarray:
    """Initial state distribution.

    ``uniform`` gives 1/F per frame. ``emission-weighted`` weights each frame
    by its total emission mass across all sentences (``emission`` may be a
    SparseEmission or a dense F x N table).
    """
    if kind == "uniform":
        return np.full(F, 1.0 / F)
    if kind == "emission-weighted":
        if emission is None:
            raise ValueError("emission-weighted initial distribution needs the emission table")
        B = emission.dense() if isinstance(emission, SparseEmission) else np.asarray(emission)
        w = B.sum(axis=1)
        return w / w.sum()
    raise ValueError(f"unknown initial distribution {kind!r}")
