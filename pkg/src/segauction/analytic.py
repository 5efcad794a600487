"""Closed-form results for Gumbel-perturbed score auctions.

Everything here is exact math on numpy arrays, no sampling: the softmax
allocation law, winner-set probabilities by inclusion-exclusion, ranking
position marginals, expected second-price payments, and the logarithmic
social-welfare objectives with their maximizers.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .core import all_subsets

__all__ = [
    "softmax_allocation",
    "set_win_probability",
    "position_marginals",
    "top_k_marginals",
    "myerson_expected_payment",
    "lsw",
    "log_lsw",
    "lsw_maximizer",
    "clsw",
    "log_clsw",
    "clsw_maximizer",
    "set_relevance_heuristic",
    "decompose_set_relevance",
    "combinatorial_set_weights",
    "combinatorial_allocation",
]

_MAX_N = 20


def _weights(q, b) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if q.shape != b.shape or q.ndim != 1:
        raise ValueError("q and b must be 1-d arrays of equal length")
    if np.any(q < 0) or np.any(b < 0):
        raise ValueError("q and b must be nonnegative")
    return q * b


def softmax_allocation(q, b) -> np.ndarray:
    """Win probabilities x_i = q_i b_i / sum_j q_j b_j.

    This is the exact distribution of argmax_i q_i b_i e^{eps_i} under
    independent Gumbel noise.
    """

    w = _weights(q, b)
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one q_i * b_i must be positive")
    return w / total


def set_win_probability(q, b, members: Sequence[int], k: int | None = None) -> float:
    """Probability that `members` is exactly the top-k set of perturbed scores.

    Inclusion-exclusion over the nonempty subsets of the candidate set:

        P(S) = sum_{T subset S, T nonempty} (-1)^{|T|+1}
               (sum_{j in T} w_j) / (sum_{i in S-bar or T} w_i)

    with w_i = q_i b_i.  Partial sums are accumulated with math.fsum; the
    2^k subset enumeration is guarded at n <= 20 candidates.
    """

    w = _weights(q, b)
    n = w.size
    if n > _MAX_N:
        raise ValueError(f"n={n} exceeds the inclusion-exclusion guard ({_MAX_N})")
    S = tuple(members)
    if len(set(S)) != len(S) or any(not (0 <= j < n) for j in S):
        raise ValueError("members must be distinct indices into the roster")
    if k is None:
        k = len(S)
    if len(S) != k:
        raise ValueError(f"|S|={len(S)} but k={k}")
    positive = int(np.count_nonzero(w > 0))
    if positive < k:
        raise ValueError("fewer positive-weight candidates than k")
    if any(w[j] == 0 for j in S):
        return 0.0
    outside = w[[i for i in range(n) if i not in set(S)]].sum()
    terms = []
    for r in range(1, k + 1):
        for T in itertools.combinations(S, r):
            num = math.fsum(w[j] for j in T)
            terms.append((-1.0) ** (r + 1) * num / (outside + num))
    return math.fsum(terms)


def position_marginals(q, b, positions: int) -> np.ndarray:
    """P(ad i takes rank t) for t < positions under the perturbed ranking.

    Exact dynamic program over chosen-so-far subsets (sequential softmax
    without replacement), O(2^n * n); guarded at n <= 15.  Row t sums to 1.
    """

    w = _weights(q, b)
    n = w.size
    if n > 15:
        raise ValueError("position marginals are enumerated only up to n=15")
    if not (1 <= positions <= int(np.count_nonzero(w > 0))):
        raise ValueError("positions must lie in [1, #positive-weight ads]")
    total = w.sum()
    out = np.zeros((positions, n), dtype=np.float64)
    # prob[mask] = P(the chosen-so-far set is exactly `mask`)
    prob = {0: 1.0}
    for t in range(positions):
        nxt: dict[int, float] = {}
        for mask, p in prob.items():
            if p == 0.0:
                continue
            remaining = total - math.fsum(w[j] for j in range(n) if mask >> j & 1)
            for i in range(n):
                if mask >> i & 1 or w[i] == 0.0:
                    continue
                step = p * w[i] / remaining
                out[t, i] += step
                key = mask | 1 << i
                nxt[key] = nxt.get(key, 0.0) + step
        prob = nxt
    return out


def top_k_marginals(q, b, k: int) -> np.ndarray:
    """P(ad i lands in the top k of the perturbed ranking)."""

    return position_marginals(q, b, k).sum(axis=0)


def myerson_expected_payment(q, b, i: int) -> float:
    """Expected per-click payment of ad i in the single-winner auction.

    With w = q_i b_i and W = sum of the rivals' q_j b_j:

        (W / q_i) * (log((w + W) / W) - w / (W + w))

    equal to E[1{i wins} z_i] over the Gumbel noise.  Zero when ad i can
    never win or has no rival.
    """

    w = _weights(q, b)
    wi = w[i]
    wm = w.sum() - wi
    if wi <= 0.0 or wm <= 0.0:
        return 0.0
    qi = np.asarray(q, dtype=np.float64)[i]
    return (wm / qi) * (math.log1p(wi / wm) - wi / (wm + wi))


# --------------------------------------------------------------------------
# welfare objectives


def log_lsw(x, q, v) -> float:
    """log of the relevance-weighted Nash welfare sum_i v_i q_i log x_i.

    Zero-weight ads contribute nothing even at x_i = 0; a positive-weight ad
    allocated zero probability sends the objective to -inf.
    """

    x = np.asarray(x, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    wt = v * q
    terms = []
    for wi, xi in zip(wt, x):
        if wi == 0.0:
            continue
        if xi <= 0.0:
            return -math.inf
        terms.append(wi * math.log(xi))
    return math.fsum(terms)


def lsw(x, q, v) -> float:
    """prod_i x_i^{v_i q_i}; the exponential of log_lsw."""

    return math.exp(log_lsw(x, q, v))


def lsw_maximizer(q, v) -> np.ndarray:
    """The allocation maximizing lsw over the simplex: x_i = v_i q_i / sum."""

    wt = np.asarray(q, dtype=np.float64) * np.asarray(v, dtype=np.float64)
    total = wt.sum()
    if total <= 0:
        raise ValueError("at least one v_i * q_i must be positive")
    return wt / total


def log_clsw(x_sets, member_scores, v, sets=None) -> float:
    """Set-level analogue of log_lsw.

    member_scores[a][i] is the decomposed relevance q_{A,i} of ad i inside
    set A (indexed like `sets`); the objective is
    sum_i v_i sum_{A containing i} q_{A,i} log x_A, folded here into
    sum_A W_A log x_A with W_A = sum_{i in A} v_i q_{A,i}.
    """

    W = _set_welfare_weights(member_scores, v, sets)
    x = np.asarray(x_sets, dtype=np.float64)
    terms = []
    for WA, xA in zip(W, x):
        if WA == 0.0:
            continue
        if xA <= 0.0:
            return -math.inf
        terms.append(WA * math.log(xA))
    return math.fsum(terms)


def clsw(x_sets, member_scores, v, sets=None) -> float:
    return math.exp(log_clsw(x_sets, member_scores, v, sets))


def clsw_maximizer(member_scores, v, sets=None) -> np.ndarray:
    """Distribution over sets maximizing clsw: x_A proportional to W_A."""

    W = _set_welfare_weights(member_scores, v, sets)
    total = W.sum()
    if total <= 0:
        raise ValueError("at least one set must have positive welfare weight")
    return W / total


def _set_welfare_weights(member_scores, v, sets) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    W = []
    for a, row in enumerate(member_scores):
        if sets is not None:
            W.append(math.fsum(v[i] * row[pos] for pos, i in enumerate(sets[a])))
        else:
            row = np.asarray(row, dtype=np.float64)
            W.append(float(np.dot(v[: row.size], row)))
    return np.asarray(W, dtype=np.float64)


# --------------------------------------------------------------------------
# combinatorial set scoring


def set_relevance_heuristic(q, pairwise, alpha: float, beta: float,
                            members: Sequence[int]) -> float:
    """Set relevance q_A = alpha * sum_{i in A} q_i + beta * sum_{i<j} rel(i, j)."""

    q = np.asarray(q, dtype=np.float64)
    total = alpha * math.fsum(q[i] for i in members)
    if beta != 0.0:
        if pairwise is None:
            raise ValueError("beta != 0 requires a pairwise similarity matrix")
        P = np.asarray(pairwise, dtype=np.float64)
        total += beta * math.fsum(
            P[i][j] for i, j in itertools.combinations(members, 2)
        )
    return total


def decompose_set_relevance(q_set: float, q, members: Sequence[int]) -> np.ndarray:
    """Split a set score across members: q_{A,i} = q_A * q_i / sum_{j in A} q_j."""

    q = np.asarray(q, dtype=np.float64)
    denom = math.fsum(q[i] for i in members)
    if denom <= 0.0:
        return np.zeros(len(members), dtype=np.float64)
    return q_set * q[list(members)] / denom


def combinatorial_set_weights(member_scores, b, sets) -> np.ndarray:
    """Auction weight of each set: w_A = sum_{i in A} q_{A,i} b_i."""

    b = np.asarray(b, dtype=np.float64)
    return np.asarray(
        [
            math.fsum(b[i] * row[pos] for pos, i in enumerate(A))
            for A, row in zip(sets, member_scores)
        ],
        dtype=np.float64,
    )


def combinatorial_allocation(member_scores, b, sets) -> np.ndarray:
    """Win probability of each set: the softmax of the set weights."""

    w = combinatorial_set_weights(member_scores, b, sets)
    total = w.sum()
    if total <= 0:
        raise ValueError("at least one set must have positive weight")
    return w / total


def static_set_relevances(q, pairwise, alpha: float, beta: float, n: int,
                          k: int) -> tuple[list[tuple[int, ...]], list[np.ndarray]]:
    """Heuristic scores for every k-subset of an n-ad roster.

    Returns (sets, member_scores) aligned with core.all_subsets(n, k).
    """

    sets = all_subsets(n, k)
    member_scores = []
    for A in sets:
        qA = set_relevance_heuristic(q, pairwise, alpha, beta, A)
        member_scores.append(decompose_set_relevance(qA, q, A))
    return sets, member_scores
