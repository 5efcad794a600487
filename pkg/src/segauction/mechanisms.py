"""Auction mechanisms, from one draw to a full session.

The draw-level functions are pure: given relevance, bids and a noise
vector they return winners, per-click prices and the perturbed scores.
Scores compare in the log domain (log(q_i b_i) + eps_i) so that prices can
be formed as bid * exp(nonpositive difference), which keeps price <= bid
exact in floating point.  The session runners add the orchestration: a
relevance lookup per ad per segment, one generator call per segment,
winner removal for the without-replacement variant, and call counters.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np

from . import sampling
from .core import (
    Ad,
    AuctionOutcome,
    Mechanism,
    NegativePaymentPolicy,
    NoEligibleAdsError,
    NoiseDraw,
    NotEnoughCompetitorsError,
    QueryCounters,
    Scenario,
    SegmentRecord,
)

__all__ = [
    "single_allocation",
    "multi_allocation",
    "naive_two_allocation",
    "combinatorial_auction",
    "run_session",
]


def _log_scores(logw: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return logw + eps


def single_allocation(q, b, eps) -> tuple[int, float, np.ndarray]:
    """Second-price single-winner auction on perturbed scores.

    Returns (winner index, per-click price, linear scores).  The price is
    the runner-up's perturbed score divided by the winner's quality-noise
    factor, i.e. the lowest bid at which the winner still wins.
    """

    logw = sampling.log_weights(q, b)
    logs = _log_scores(logw, np.asarray(eps, dtype=np.float64))
    winner = int(np.argmax(logs))
    if not np.isfinite(logs[winner]):
        raise NoEligibleAdsError("no candidate with positive q * b")
    rest = np.delete(logs, winner)
    price = 0.0
    if rest.size and np.max(rest) > -np.inf:
        b_arr = np.asarray(b, dtype=np.float64)
        price = float(b_arr[winner] * math.exp(float(np.max(rest)) - logs[winner]))
    return winner, price, np.exp(logs)


def multi_allocation(q, b, eps, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-k auction with next-score pricing.

    Winner at rank i pays the (k+1)-th perturbed score divided by its own
    quality-noise factor.  With k equal to the roster size every ad wins at
    price zero.
    """

    logw = sampling.log_weights(q, b)
    logs = _log_scores(logw, np.asarray(eps, dtype=np.float64))
    n = logs.size
    if not (1 <= k <= n):
        raise ValueError(f"k={k} outside [1, {n}]")
    eligible = int(np.count_nonzero(np.isfinite(logw)))
    if k < n and eligible < k:
        raise NotEnoughCompetitorsError(
            f"{eligible} positive-score ads for {k} slots"
        )
    order = np.argsort(-logs, kind="stable")
    top = order[:k]
    b_arr = np.asarray(b, dtype=np.float64)
    if k < n:
        kth = logs[order[k]]
        with np.errstate(invalid="ignore"):
            prices = np.where(
                np.isfinite(logs[top]) & np.isfinite(kth),
                b_arr[top] * np.exp(kth - logs[top]),
                0.0,
            )
    else:
        prices = np.zeros(k, dtype=np.float64)
    return top.astype(np.int64), prices.astype(np.float64), np.exp(logs)


def naive_two_allocation(b, eps) -> tuple[int, float, np.ndarray]:
    """Single-winner auction that scores bids alone, ignoring relevance."""

    ones = np.ones_like(np.asarray(b, dtype=np.float64))
    return single_allocation(ones, b, eps)


def combinatorial_auction(
    member_scores: Sequence[np.ndarray],
    b,
    sets: Sequence[tuple[int, ...]],
    eps_sets,
    policy: NegativePaymentPolicy = NegativePaymentPolicy.CLAMP_TO_ZERO,
) -> tuple[int, np.ndarray, np.ndarray]:
    """One-shot auction over candidate sets with VCG-style pricing.

    member_scores[a][pos] is the decomposed relevance of sets[a][pos]
    inside set a; the set's auction weight is sum of member relevance *
    bid.  Each member i of the winning set pays

        (best excluding-i score - noise-scaled weight of the others) /
        (member's own quality-noise factor)

    which can be negative; the policy decides whether to clamp at zero.
    Returns (winning set index, per-member prices, linear set scores).
    """

    b_arr = np.asarray(b, dtype=np.float64)
    weights = np.asarray(
        [
            math.fsum(b_arr[i] * row[pos] for pos, i in enumerate(A))
            for A, row in zip(sets, member_scores)
        ],
        dtype=np.float64,
    )
    eps_sets = np.asarray(eps_sets, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logs = np.log(weights) + eps_sets
    star = int(np.argmax(logs))
    if not np.isfinite(logs[star]):
        raise NoEligibleAdsError("every candidate set has zero weight")
    A = sets[star]
    qA = np.asarray(member_scores[star], dtype=np.float64)
    e_star = math.exp(eps_sets[star])
    prices = np.zeros(len(A), dtype=np.float64)
    for pos, i in enumerate(A):
        if qA[pos] * b_arr[i] <= 0.0:
            continue
        rivals = [a for a, S in enumerate(sets) if i not in S]
        if not rivals:
            continue  # no i-excluding set exists (k == n): pays zero
        excl_logs = logs[rivals].max()
        if not np.isfinite(excl_logs):
            s_excl = 0.0
        else:
            # exp of a nonpositive log difference: s_excl <= s_star exactly
            s_excl = weights[star] * e_star * math.exp(excl_logs - logs[star])
        others = math.fsum(
            b_arr[j] * qA[p] for p, j in enumerate(A) if p != pos
        )
        p_i = (s_excl - others * e_star) / (qA[pos] * e_star)
        # the VCG price never exceeds the member's bid in exact arithmetic;
        # min() only strips float dust from the division above
        p_i = min(p_i, b_arr[i])
        if policy is NegativePaymentPolicy.CLAMP_TO_ZERO:
            p_i = max(p_i, 0.0)
        prices[pos] = p_i
    with np.errstate(invalid="ignore"):
        linear = np.where(weights > 0, weights * np.exp(eps_sets), 0.0)
    return star, prices, linear


# --------------------------------------------------------------------------
# sessions


def _segment_relevance(provider, query: str, ads: Sequence[Ad], segment: int,
                       context: Sequence[str], counters: QueryCounters) -> np.ndarray:
    q = np.empty(len(ads), dtype=np.float64)
    for idx, ad in enumerate(ads):
        q[idx] = provider.score(query, ad, segment, context)
        counters.relevance_calls += 1
    return q


def _generate(generator, query, winner_ads, segment, context, mode,
              counters) -> str:
    if generator is None:
        return ""
    counters.generator_calls += 1
    return generator.generate(query, winner_ads, segment, context, mode)


def run_session(
    scenario: Scenario,
    relevance,
    generator=None,
    set_relevance=None,
    trial: int = 0,
    collect_text: bool = True,
) -> AuctionOutcome:
    """Run one full session of scenario.segments auctions.

    relevance is a per-ad provider (score(query, ad, segment, context));
    set_relevance is required for the combinatorial mechanism and maps a
    member list to its decomposed scores.  Noise for trial j, segment t
    comes from sampling.stream(scenario.seed, j, t), so outcomes are
    reproducible and independent across (trial, segment) pairs.
    """

    mech = scenario.mechanism
    ads = scenario.ads
    b = scenario.bids()
    counters = QueryCounters()
    records: list[SegmentRecord] = []
    context: list[str] = []
    won_already: set[int] = set()

    for t in range(scenario.segments):
        rng = sampling.stream(scenario.seed, trial, t)
        if mech is Mechanism.COMBINATORIAL:
            record = _combinatorial_segment(
                scenario, set_relevance, rng, t, context, counters
            )
        else:
            q = _segment_relevance(relevance, scenario.query, ads, t, context, counters)
            record = _per_ad_segment(scenario, q, b, rng, t, won_already)
        winner_ads = [ads[i] for i in record.winner_indices]
        text = _generate(
            generator, scenario.query, winner_ads, t, context,
            record.composition, counters,
        )
        if collect_text and text:
            record = dataclasses.replace(record, text=text)
        context.append(record.text)
        records.append(record)
    return AuctionOutcome(segments=tuple(records), counters=counters)


def _per_ad_segment(scenario: Scenario, q: np.ndarray, b: np.ndarray,
                    rng, t: int, won_already: set[int]) -> SegmentRecord:
    mech = scenario.mechanism
    ads = scenario.ads
    n = len(ads)
    eps = sampling.gumbel_draw(rng, n)
    noise = NoiseDraw(eps)
    composition = "append" if mech is Mechanism.NAIVE_I else "integrated"

    if mech is Mechanism.MULTI_ALLOCATION:
        top, prices, scores = multi_allocation(q, b, eps, scenario.slots)
        winner_idx = tuple(int(i) for i in top)
        price_t = tuple(float(p) for p in prices)
    elif mech is Mechanism.NAIVE_II:
        w, price, scores = naive_two_allocation(b, eps)
        winner_idx, price_t = (w,), (price,)
    elif mech is Mechanism.SINGLE_WITHOUT_REPLACEMENT:
        q_masked = q.copy()
        q_masked[list(won_already)] = 0.0
        w, price, scores = single_allocation(q_masked, b, eps)
        won_already.add(w)
        winner_idx, price_t = (w,), (price,)
    else:  # with replacement, naive I
        w, price, scores = single_allocation(q, b, eps)
        winner_idx, price_t = (w,), (price,)

    return SegmentRecord(
        winners=tuple(ads[i].id for i in winner_idx),
        winner_indices=winner_idx,
        prices=price_t,
        winner_relevance=tuple(float(q[i]) for i in winner_idx),
        noise=noise,
        scores=tuple(float(s) for s in scores),
        relevance=tuple(float(x) for x in q),
        composition=composition,
    )


def _combinatorial_segment(scenario: Scenario, set_relevance, rng, t: int,
                           context: Sequence[str],
                           counters: QueryCounters) -> SegmentRecord:
    if set_relevance is None:
        raise ValueError("the combinatorial mechanism needs a set relevance provider")
    from .core import all_subsets

    ads = scenario.ads
    b = scenario.bids()
    sets = all_subsets(len(ads), scenario.slots)
    member_scores = []
    for A in sets:
        row = set_relevance.member_scores(scenario.query, ads, A, t, context)
        counters.relevance_calls += len(A)
        member_scores.append(np.asarray(row, dtype=np.float64))
    eps = sampling.gumbel_draw(rng, len(sets))
    star, prices, scores = combinatorial_auction(
        member_scores, b, sets, eps,
        policy=scenario.combinatorial.negative_payment,
    )
    A = sets[star]
    return SegmentRecord(
        winners=tuple(ads[i].id for i in A),
        winner_indices=tuple(A),
        prices=tuple(float(p) for p in prices),
        winner_relevance=tuple(float(x) for x in member_scores[star]),
        noise=NoiseDraw(eps),
        scores=tuple(float(s) for s in scores),
        relevance=None,
        winning_set=tuple(A),
        composition="integrated",
    )
