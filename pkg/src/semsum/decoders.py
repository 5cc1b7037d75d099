"""Decoders that turn a compatibility matrix into one frame per sentence.

``decode_marginal`` is the main one: it picks, per sentence, the frame with
the largest marginal posterior p(q_t | O) computed by a scaled
forward-backward pass. Because the transition out of frame ``i`` is uniform
over all later frames, each forward step is a prefix sum and each backward
step a suffix sum, so a full pass costs O(F N).

Ties are broken toward the smaller frame index everywhere; values within a
relative ``TIE_RTOL`` of the maximum count as tied, so that paths which are
equally likely in exact arithmetic are not split by rounding.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InstanceTooLarge, TotalProbabilityZero
from .hmm_model import ScoreTable, SparseEmission, build_emission, initial_distribution, minimal_k, transition_matrix

TIE_RTOL = 1e-12
BRUTE_FORCE_LIMIT = 10**7

DecoderName = Literal["fb_marginal", "viterbi", "dtw", "brute_marginal", "brute_map"]


@dataclass
class ForwardBackwardTables:
    """Scaled forward/backward tables, one row per sentence.

    ``alpha[t]`` sums to one; the unscaled forward value is
    ``alpha[t] * prod(scale[:t+1])`` and the unscaled backward value is
    ``beta[t] * prod(scale[t+1:])``.
    """

    alpha: np.ndarray
    scale: np.ndarray
    beta: np.ndarray | None = None

    def unscaled_alpha(self) -> np.ndarray:
        return self.alpha * np.cumprod(self.scale)[:, None]

    def unscaled_beta(self) -> np.ndarray:
        tail = np.append(np.cumprod(self.scale[::-1])[::-1][1:], 1.0)
        return self.beta * tail[:, None]

    def posterior(self) -> np.ndarray:
        """p(q_t = i | O); each row sums to one."""
        return self.alpha * self.beta

    def log_likelihood(self) -> float:
        return float(np.log(self.scale).sum())


@dataclass
class SummaryPath:
    path: list[int]
    k_used: int | None
    decoder: str
    scores: list[float] | None = None
    probability: float | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.path)


def first_argmax(x, rtol: float = TIE_RTOL) -> int:
    """Index of the first entry within ``rtol`` of the maximum."""
    x = np.asarray(x)
    m = x.max()
    return int(np.flatnonzero(x >= m - rtol * abs(m))[0])


def _dense(B) -> np.ndarray:
    if isinstance(B, SparseEmission):
        return B.dense()
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2:
        raise ValueError(f"emission table must be F x N, got shape {B.shape}")
    return B


def _by_sentence(B) -> np.ndarray:
    """Emission table laid out (N, F) so each sentence's column is contiguous."""
    if isinstance(B, SparseEmission):
        return B.dense_by_sentence()
    return np.ascontiguousarray(_dense(B).T)


def _successor_weights(F: int) -> np.ndarray:
    """1 / (number of successors) per state; zero for the last state."""
    w = np.zeros(F)
    w[:-1] = 1.0 / np.arange(F - 1, 0, -1)
    return w


def _resolve_pi(pi, F: int, emission=None) -> np.ndarray:
    if pi is None:
        pi = "uniform"
    if isinstance(pi, str):
        return initial_distribution(F, pi, emission)
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (F,):
        raise ValueError(f"initial distribution has shape {pi.shape}, expected ({F},)")
    return pi


def forward(B, pi=None) -> ForwardBackwardTables:
    Bt = _by_sentence(B)
    N, F = Bt.shape
    pi = _resolve_pi(pi, F, Bt.T)
    w = _successor_weights(F)
    alpha = np.empty((N, F))
    scale = np.empty(N)
    a = pi * Bt[0]
    prefix = np.empty(F)
    for t in range(N):
        if t > 0:
            # sum over i < j of alpha_{t-1}(i) / (F-1-i)
            prefix[0] = 0.0
            np.cumsum(alpha[t - 1, :-1] * w[:-1], out=prefix[1:])
            a = Bt[t] * prefix
        c = a.sum()
        if not c > 0.0:
            raise TotalProbabilityZero(t)
        alpha[t] = a / c
        scale[t] = c
    return ForwardBackwardTables(alpha=alpha, scale=scale)


def backward(B, scale) -> np.ndarray:
    """Backward table scaled by the forward pass's constants."""
    Bt = _by_sentence(B)
    N, F = Bt.shape
    scale = np.asarray(scale, dtype=np.float64)
    w = _successor_weights(F)
    beta = np.empty((N, F))
    beta[N - 1] = 1.0
    suffix = np.empty(F)
    for t in range(N - 2, -1, -1):
        v = Bt[t + 1] * beta[t + 1]
        # sum over j > i of v[j]
        suffix[-1] = 0.0
        suffix[:-1] = np.cumsum(v[:0:-1])[::-1]
        b = w * suffix
        if not b.any():
            raise TotalProbabilityZero(t)
        beta[t] = b / scale[t + 1]
    return beta


def forward_backward(B, pi=None) -> ForwardBackwardTables:
    Bt = _by_sentence(B)
    tables = forward(Bt.T, pi)
    tables.beta = backward(Bt.T, tables.scale)
    return tables


def _emission_for(S, k):
    tab = ScoreTable(S)
    if k is None:
        k = minimal_k(tab)
    return build_emission(tab, k), k


def marginal_path(B, pi=None) -> tuple[list[int], list[float]]:
    post = forward_backward(B, pi).posterior()
    path = [first_argmax(row) for row in post]
    return path, [float(post[t, q]) for t, q in enumerate(path)]


def decode_marginal(S, k: int | None = None, pi=None) -> SummaryPath:
    """Per-sentence argmax of the marginal posterior.

    With ``k=None`` the minimal feasible k is used. The resulting frame
    sequence is returned as-is; it is not forced to be increasing.
    """
    emission, k = _emission_for(S, k)
    path, scores = marginal_path(emission, _resolve_pi(pi, emission.F, emission))
    return SummaryPath(path=path, k_used=k, decoder="fb_marginal", scores=scores)


def path_probability(B, pi, path) -> float:
    """Joint p(Q, O) of a given state sequence."""
    B = _dense(B)
    F = B.shape[0]
    pi = _resolve_pi(pi, F, B)
    p = pi[path[0]] * B[path[0], 0]
    for t in range(1, len(path)):
        i, j = path[t - 1], path[t]
        p *= (1.0 / (F - 1 - i) if j > i else 0.0) * B[j, t]
    return float(p)


def viterbi_path(B, pi=None) -> list[int]:
    """MAP state sequence; among equally likely paths the lexicographically smallest.

    The max-product recursion runs from the last sentence backwards so the
    path can then be read off front to back, taking the smallest admissible
    frame at every step.
    """
    Bt = _by_sentence(B)
    N, F = Bt.shape
    pi = _resolve_pi(pi, F, Bt.T)
    w = _successor_weights(F)
    # V[t, i]: best (rescaled) probability of sentences t+1.. given q_t = i
    V = np.empty((N, F))
    V[N - 1] = 1.0
    for t in range(N - 2, -1, -1):
        u = Bt[t + 1] * V[t + 1]
        sufmax = np.zeros(F)
        sufmax[:-1] = np.maximum.accumulate(u[:0:-1])[::-1]
        v = w * sufmax
        m = v.max()
        if not m > 0.0:
            raise TotalProbabilityZero(t)
        V[t] = v / m
    start = pi * Bt[0] * V[0]
    if not start.max() > 0.0:
        raise TotalProbabilityZero(0)
    path = [first_argmax(start)]
    for t in range(1, N):
        q = path[-1]
        cand = Bt[t, q + 1:] * V[t, q + 1:]
        path.append(q + 1 + first_argmax(cand))
    return path


def decode_viterbi(S, k: int | None = None, pi=None) -> SummaryPath:
    emission, k = _emission_for(S, k)
    pi = _resolve_pi(pi, emission.F, emission)
    B = emission.dense()
    path = viterbi_path(B, pi)
    return SummaryPath(path=path, k_used=k, decoder="viterbi", probability=path_probability(B, pi, path))


def dtw_alignment(cost) -> list[tuple[int, int]]:
    """Minimum-cost warping path from (0, 0) to (F-1, N-1).

    Steps are (1,0), (0,1) and (1,1). On equal cost the traceback prefers the
    diagonal, then the frame-axis step, then the sentence-axis step.
    """
    cost = np.asarray(cost, dtype=np.float64)
    F, N = cost.shape
    D = np.full((F + 1, N + 1), np.inf)
    D[0, 0] = 0.0
    c = cost.tolist()
    Dl = D.tolist()
    for i in range(1, F + 1):
        prev, cur, ci = Dl[i - 1], Dl[i], c[i - 1]
        for j in range(1, N + 1):
            cur[j] = ci[j - 1] + min(prev[j - 1], prev[j], cur[j - 1])
    D = np.asarray(Dl)
    i, j = F, N
    steps = [(F - 1, N - 1)]
    while (i, j) != (1, 1):
        options = ((D[i - 1, j - 1], i - 1, j - 1), (D[i - 1, j], i - 1, j), (D[i, j - 1], i, j - 1))
        best = min(o[0] for o in options)
        _, i, j = next(o for o in options if o[0] == best)
        steps.append((i - 1, j - 1))
    return steps[::-1]


def decode_dtw(S) -> SummaryPath:
    """DTW baseline over cost 1 - S; each sentence takes its best aligned frame."""
    S = np.asarray(S, dtype=np.float64)
    F, N = S.shape
    if F < N:
        raise ValueError(f"DTW needs at least as many frames as sentences (F={F}, N={N})")
    aligned: list[list[int]] = [[] for _ in range(N)]
    for i, j in dtw_alignment(1.0 - S):
        aligned[j].append(i)
    path = []
    for j, frames in enumerate(aligned):
        frames = np.asarray(frames)
        path.append(int(frames[first_argmax(S[frames, j])]))
    return SummaryPath(path=path, k_used=None, decoder="dtw", scores=[float(S[q, j]) for j, q in enumerate(path)])


def joint_table(B, pi=None) -> np.ndarray:
    """p(Q, O) for every state sequence, as an array of shape (F,) * N."""
    B = _dense(B)
    F, N = B.shape
    if float(F) ** N > BRUTE_FORCE_LIMIT:
        raise InstanceTooLarge(f"F^N = {F}^{N} exceeds {BRUTE_FORCE_LIMIT}")
    pi = _resolve_pi(pi, F, B)
    A = transition_matrix(F)
    J = pi * B[:, 0]
    for t in range(1, N):
        J = J[..., None] * (A * B[:, t][None, :])
    return J


def decode_bruteforce(S=None, k: int | None = None, pi=None, *, B=None) -> tuple[SummaryPath, SummaryPath]:
    """Exhaustive marginal-argmax and MAP paths; a test oracle for small instances.

    Pass either a compatibility matrix ``S`` (with optional ``k``) or an
    emission table ``B`` directly.
    """
    if B is None:
        emission, k = _emission_for(S, k)
        pi = _resolve_pi(pi, emission.F, emission)
        B = emission.dense()
    J = joint_table(B, pi)
    N = J.ndim
    total = J.sum()
    if not total > 0.0:
        raise TotalProbabilityZero(N - 1)
    marg_path, marg_scores = [], []
    for t in range(N):
        m = J.sum(axis=tuple(a for a in range(N) if a != t))
        q = first_argmax(m)
        marg_path.append(q)
        marg_scores.append(float(m[q] / total))
    flat = J.ravel()
    best = first_argmax(flat)  # C order is lexicographic order of paths
    map_path = [int(q) for q in np.unravel_index(best, J.shape)]
    return (
        SummaryPath(marg_path, k, "brute_marginal", scores=marg_scores),
        SummaryPath(map_path, k, "brute_map", probability=float(flat[best])),
    )


DECODERS = {
    "fb": decode_marginal,
    "viterbi": decode_viterbi,
    "dtw": lambda S, k=None, pi=None: decode_dtw(S),
}


def decode(S, decoder: str = "fb", k: int | None = None, pi=None) -> SummaryPath:
    try:
        fn = DECODERS[decoder]
    except KeyError:
        raise ValueError(f"unknown decoder {decoder!r}; choose from {sorted(DECODERS)}") from None
    return fn(S, k=k, pi=pi)


def decode_many(matrices, decoder: str = "fb", k: int | None = None, pi=None, workers: int | None = None):
    """Decode independent compatibility matrices concurrently."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda S: decode(S, decoder, k=k, pi=pi), matrices))
