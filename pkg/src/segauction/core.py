"""Domain types shared across the package.

A Scenario bundles everything one experiment needs: the user query, the ad
roster with bids and values, how per-ad relevance is obtained (a static
vector or an embedding service), the session shape (T segments, k slots per
segment), the mechanism, and trial/seed bookkeeping.  Validation reports
every violated constraint at once rather than stopping at the first.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np

__all__ = [
    "Mechanism",
    "NegativePaymentPolicy",
    "Ad",
    "RelevanceVector",
    "EmbeddingSpec",
    "CombinatorialConfig",
    "Scenario",
    "NoiseDraw",
    "SegmentRecord",
    "QueryCounters",
    "AuctionOutcome",
    "Violation",
    "ScenarioValidationError",
    "NoEligibleAdsError",
    "NotEnoughCompetitorsError",
    "ProviderError",
    "AuthMissingError",
    "MissingRelevanceError",
    "ServiceUnavailableError",
    "DimensionMismatchError",
    "validate_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "load_scenario",
    "dump_scenario",
]


class Mechanism(str, Enum):
    SINGLE_WITH_REPLACEMENT = "single_with_replacement"
    SINGLE_WITHOUT_REPLACEMENT = "single_without_replacement"
    NAIVE_I = "naive_i"
    NAIVE_II = "naive_ii"
    MULTI_ALLOCATION = "multi_allocation"
    COMBINATORIAL = "combinatorial"


#: Accepted spellings for CLI flags and scenario files.
MECHANISM_ALIASES: dict[str, Mechanism] = {
    **{m.value: m for m in Mechanism},
    "with_replacement": Mechanism.SINGLE_WITH_REPLACEMENT,
    "without_replacement": Mechanism.SINGLE_WITHOUT_REPLACEMENT,
    "naive1": Mechanism.NAIVE_I,
    "naive2": Mechanism.NAIVE_II,
    "multi": Mechanism.MULTI_ALLOCATION,
}


def parse_mechanism(name: str) -> Mechanism:
    key = name.strip().lower()
    if key not in MECHANISM_ALIASES:
        raise ValueError(
            f"unknown mechanism {name!r}; expected one of "
            + ", ".join(sorted(MECHANISM_ALIASES))
        )
    return MECHANISM_ALIASES[key]


class NegativePaymentPolicy(str, Enum):
    """What to do when a VCG-style combinatorial payment comes out negative."""

    ALLOW = "allow"
    CLAMP_TO_ZERO = "clamp"


@dataclass(frozen=True, slots=True)
class Ad:
    """One advertiser's entry in the auction.

    value is the advertiser's private per-click value; it defaults to the bid
    (truthful bidding) when a scenario file omits it.
    """

    id: str
    bid: float
    value: float
    document: str = ""
    link: str = ""


@dataclass(frozen=True, slots=True)
class RelevanceVector:
    """Static per-ad relevance q, optionally decayed per segment by delta.

    delta, when present, has one positive entry per segment and must be
    non-increasing; the effective relevance in segment t is delta[t] * q[i].
    """

    q: tuple[float, ...]
    delta: tuple[float, ...] | None = None

    def at_segment(self, t: int) -> np.ndarray:
        base = np.asarray(self.q, dtype=np.float64)
        if self.delta is None:
            return base
        return self.delta[t] * base


@dataclass(frozen=True, slots=True)
class EmbeddingSpec:
    """Configuration for relevance scored by a remote embedding service."""

    endpoint: str
    model: str = ""
    credential_env: str = "SEGAUCTION_EMBED_TOKEN"
    timeout: float = 10.0
    max_retries: int = 3
    max_in_flight: int = 4


@dataclass(frozen=True, slots=True)
class CombinatorialConfig:
    """Knobs for the set-level auction.

    alpha and beta weigh the two terms of the set relevance heuristic
    (sum of member scores, sum of pairwise member similarities).  pairwise
    is an optional symmetric n x n similarity matrix; required only when
    beta != 0 under static relevance.
    """

    alpha: float = 1.0
    beta: float = 0.0
    negative_payment: NegativePaymentPolicy = NegativePaymentPolicy.CLAMP_TO_ZERO
    pairwise: tuple[tuple[float, ...], ...] | None = None


@dataclass(frozen=True, slots=True)
class Scenario:
    query: str
    ads: tuple[Ad, ...]
    relevance: RelevanceVector | EmbeddingSpec
    segments: int = 1
    slots: int = 1
    mechanism: Mechanism = Mechanism.SINGLE_WITH_REPLACEMENT
    trials: int = 500
    seed: int = 0
    combinatorial: CombinatorialConfig = field(default_factory=CombinatorialConfig)

    @property
    def n(self) -> int:
        return len(self.ads)

    def bids(self) -> np.ndarray:
        return np.array([a.bid for a in self.ads], dtype=np.float64)

    def values(self) -> np.ndarray:
        return np.array([a.value for a in self.ads], dtype=np.float64)

    def ad_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.ads)


@dataclass(frozen=True, eq=False)
class NoiseDraw:
    """A vector of Gumbel perturbations, one per auction candidate.

    Candidates are ads for the per-ad mechanisms and k-subsets (in
    itertools.combinations order) for the combinatorial one.  Draws are
    guaranteed finite by construction.
    """

    eps: np.ndarray

    def __post_init__(self) -> None:
        eps = np.asarray(self.eps, dtype=np.float64)
        if not np.all(np.isfinite(eps)):
            raise ValueError("noise draw contains non-finite entries")
        eps.setflags(write=False)
        object.__setattr__(self, "eps", eps)


@dataclass(frozen=True, eq=False)
class SegmentRecord:
    """What happened in one segment's auction.

    winners/prices/winner_relevance are aligned, in score order.  prices are
    per-click; winner_relevance is the CTR proxy the accounting uses (the
    segment's q for per-ad mechanisms, the decomposed set score for the
    combinatorial one).  scores are the perturbed scores of every candidate.
    """

    winners: tuple[str, ...]
    winner_indices: tuple[int, ...]
    prices: tuple[float, ...]
    winner_relevance: tuple[float, ...]
    noise: NoiseDraw
    scores: tuple[float, ...]
    relevance: tuple[float, ...] | None = None
    winning_set: tuple[int, ...] | None = None
    composition: str = "integrated"
    text: str = ""


@dataclass
class QueryCounters:
    """Oracle-call accounting for one session (or an aggregate of sessions)."""

    relevance_calls: int = 0
    generator_calls: int = 0

    def merge(self, other: "QueryCounters") -> None:
        self.relevance_calls += other.relevance_calls
        self.generator_calls += other.generator_calls


@dataclass(frozen=True, eq=False)
class AuctionOutcome:
    """One session end to end: a record per segment plus call counters."""

    segments: tuple[SegmentRecord, ...]
    counters: QueryCounters


# --------------------------------------------------------------------------
# errors


@dataclass(frozen=True, slots=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.code}: {self.message}"


class ScenarioValidationError(ValueError):
    """Raised by validate_scenario; carries every violation found."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = tuple(violations)
        super().__init__(
            "invalid scenario: " + "; ".join(str(v) for v in self.violations)
        )


class NoEligibleAdsError(RuntimeError):
    """No candidate with positive score remains to allocate."""


class NotEnoughCompetitorsError(RuntimeError):
    """Fewer positive-score candidates than slots to fill."""


class ProviderError(RuntimeError):
    """Base class for relevance/generator provider failures."""


class AuthMissingError(ProviderError):
    pass


class MissingRelevanceError(ProviderError):
    """A static provider was asked about an ad it has no score for."""


class ServiceUnavailableError(ProviderError):
    pass


class DimensionMismatchError(ProviderError):
    pass


class DegenerateAuctionWarning(UserWarning):
    """Emitted when every candidate wins and prices collapse to zero."""


# --------------------------------------------------------------------------
# validation

MAX_COMBINATORIAL_ADS = 20


def validate_scenario(scenario: Scenario) -> Scenario:
    """Check every scenario invariant; raise with the full violation list.

    Returns the scenario unchanged when valid so calls can be chained.
    """

    v: list[Violation] = []
    ads = scenario.ads
    n = len(ads)

    if n == 0:
        v.append(Violation("empty_roster", "scenario has no ads"))
    seen: set[str] = set()
    for a in ads:
        if not a.id:
            v.append(Violation("empty_ad_id", "ad with empty id"))
        if a.id in seen:
            v.append(Violation("duplicate_ad_id", f"ad id {a.id!r} repeats"))
        seen.add(a.id)
        if not (a.bid >= 0.0) or not np.isfinite(a.bid):
            v.append(Violation("negative_bid", f"ad {a.id!r} bid {a.bid!r}"))
        if not (a.value >= 0.0) or not np.isfinite(a.value):
            v.append(Violation("negative_value", f"ad {a.id!r} value {a.value!r}"))

    rel = scenario.relevance
    if isinstance(rel, RelevanceVector):
        q = rel.q
        if len(q) == 0:
            v.append(Violation("empty_relevance", "relevance vector is empty"))
        elif len(q) != n:
            v.append(
                Violation(
                    "relevance_length_mismatch",
                    f"{len(q)} relevance entries for {n} ads",
                )
            )
        if any(not (0.0 <= qi <= 1.0) for qi in q):
            v.append(Violation("relevance_out_of_range", "q entries must lie in [0, 1]"))
        elif q and max(q) <= 0.0:
            v.append(Violation("all_relevance_zero", "at least one q_i must be positive"))
        d = rel.delta
        if d is not None:
            if len(d) != scenario.segments:
                v.append(
                    Violation(
                        "delta_length_mismatch",
                        f"{len(d)} delta entries for {scenario.segments} segments",
                    )
                )
            if any(not (di > 0.0) for di in d):
                v.append(Violation("delta_not_positive", "delta entries must be > 0"))
            if any(d[t + 1] > d[t] for t in range(len(d) - 1)):
                v.append(Violation("delta_increasing", "delta must be non-increasing"))
    elif isinstance(rel, EmbeddingSpec):
        if not rel.endpoint:
            v.append(Violation("empty_relevance", "embedding endpoint is empty"))
    else:  # pragma: no cover - defensive
        v.append(Violation("empty_relevance", f"unsupported relevance {type(rel)!r}"))

    if scenario.segments < 1:
        v.append(Violation("invalid_segments", f"segments={scenario.segments}"))
    if scenario.trials < 1:
        v.append(Violation("invalid_trials", f"trials={scenario.trials}"))
    if not (1 <= scenario.slots <= max(n, 1)):
        v.append(
            Violation(
                "slot_count_exceeds_ads",
                f"k={scenario.slots} outside [1, {n}]",
            )
        )

    if scenario.mechanism in (Mechanism.SINGLE_WITHOUT_REPLACEMENT, Mechanism.NAIVE_I):
        eligible = n
        if isinstance(rel, RelevanceVector) and len(rel.q) == n:
            eligible = sum(
                1 for a, qi in zip(ads, rel.q) if qi * a.bid > 0.0
            )
        if scenario.mechanism is Mechanism.SINGLE_WITHOUT_REPLACEMENT and (
            scenario.segments > eligible
        ):
            v.append(
                Violation(
                    "without_replacement_infeasible",
                    f"T={scenario.segments} segments but only {eligible} "
                    "ads can ever win",
                )
            )

    if scenario.mechanism is Mechanism.COMBINATORIAL:
        if n > MAX_COMBINATORIAL_ADS:
            v.append(
                Violation(
                    "combinatorial_roster_too_large",
                    f"n={n} exceeds the C(n,k) enumeration guard "
                    f"({MAX_COMBINATORIAL_ADS})",
                )
            )
        cc = scenario.combinatorial
        if cc.alpha < 0 or cc.beta < 0:
            v.append(Violation("negative_heuristic_weight", "alpha, beta must be >= 0"))
        if cc.pairwise is not None:
            P = cc.pairwise
            if len(P) != n or any(len(row) != n for row in P):
                v.append(
                    Violation("pairwise_shape_mismatch", "pairwise matrix must be n x n")
                )
            else:
                sym = all(
                    abs(P[i][j] - P[j][i]) <= 1e-12 for i in range(n) for j in range(n)
                )
                if not sym:
                    v.append(Violation("pairwise_not_symmetric", "pairwise matrix must be symmetric"))
        elif cc.beta != 0.0 and isinstance(rel, RelevanceVector):
            v.append(
                Violation(
                    "pairwise_missing",
                    "beta != 0 with static relevance needs a pairwise matrix",
                )
            )

    if v:
        raise ScenarioValidationError(v)

    if scenario.slots == n and scenario.mechanism is Mechanism.MULTI_ALLOCATION:
        warnings.warn(
            "k equals the roster size: every ad wins and all prices are zero",
            DegenerateAuctionWarning,
            stacklevel=2,
        )
    return scenario


# --------------------------------------------------------------------------
# serialization

_SCENARIO_KEYS = {
    "query", "ads", "relevance", "T", "k", "mechanism", "trials", "seed",
    "combinatorial",
}
_AD_KEYS = {"id", "bid", "value", "document", "link"}
_STATIC_REL_KEYS = {"mode", "q", "delta"}
_EMBED_REL_KEYS = {
    "mode", "endpoint", "model", "credential_env", "timeout", "max_retries",
    "max_in_flight",
}
_COMB_KEYS = {"alpha", "beta", "negative_payment", "pairwise"}


def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ScenarioValidationError(
            [Violation("unknown_field", f"{where}: {', '.join(unknown)}")]
        )


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    """Build a Scenario from the documented JSON shape (strict keys)."""

    if not isinstance(data, dict):
        raise ScenarioValidationError(
            [Violation("bad_document", "scenario document must be a JSON object")]
        )
    _reject_unknown(data, _SCENARIO_KEYS, "scenario")
    try:
        ads = []
        for ad in data["ads"]:
            _reject_unknown(ad, _AD_KEYS, f"ad {ad.get('id', '?')!r}")
            bid = float(ad["bid"])
            ads.append(
                Ad(
                    id=str(ad["id"]),
                    bid=bid,
                    value=float(ad.get("value", bid)),
                    document=str(ad.get("document", "")),
                    link=str(ad.get("link", "")),
                )
            )
        rel_d = data["relevance"]
        mode = rel_d.get("mode", "static")
        relevance: RelevanceVector | EmbeddingSpec
        if mode == "static":
            _reject_unknown(rel_d, _STATIC_REL_KEYS, "relevance")
            delta = rel_d.get("delta")
            relevance = RelevanceVector(
                q=tuple(float(x) for x in rel_d.get("q", ())),
                delta=None if delta is None else tuple(float(x) for x in delta),
            )
        elif mode == "embedding":
            _reject_unknown(rel_d, _EMBED_REL_KEYS, "relevance")
            relevance = EmbeddingSpec(
                endpoint=str(rel_d.get("endpoint", "")),
                model=str(rel_d.get("model", "")),
                credential_env=str(
                    rel_d.get("credential_env", "SEGAUCTION_EMBED_TOKEN")
                ),
                timeout=float(rel_d.get("timeout", 10.0)),
                max_retries=int(rel_d.get("max_retries", 3)),
                max_in_flight=int(rel_d.get("max_in_flight", 4)),
            )
        else:
            raise ScenarioValidationError(
                [Violation("bad_relevance_mode", f"mode {mode!r}")]
            )
        comb = CombinatorialConfig()
        if "combinatorial" in data:
            cd = data["combinatorial"]
            _reject_unknown(cd, _COMB_KEYS, "combinatorial")
            pw = cd.get("pairwise")
            comb = CombinatorialConfig(
                alpha=float(cd.get("alpha", 1.0)),
                beta=float(cd.get("beta", 0.0)),
                negative_payment=NegativePaymentPolicy(
                    cd.get("negative_payment", "clamp")
                ),
                pairwise=None
                if pw is None
                else tuple(tuple(float(x) for x in row) for row in pw),
            )
        scenario = Scenario(
            query=str(data["query"]),
            ads=tuple(ads),
            relevance=relevance,
            segments=int(data.get("T", 1)),
            slots=int(data.get("k", 1)),
            mechanism=parse_mechanism(data.get("mechanism", "single_with_replacement")),
            trials=int(data.get("trials", 500)),
            seed=int(data.get("seed", 0)),
            combinatorial=comb,
        )
    except ScenarioValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioValidationError(
            [Violation("bad_document", f"malformed scenario: {exc}")]
        ) from exc
    return scenario


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    ads = []
    for a in s.ads:
        d: dict[str, Any] = {"id": a.id, "bid": a.bid, "value": a.value}
        if a.document:
            d["document"] = a.document
        if a.link:
            d["link"] = a.link
        ads.append(d)
    rel: dict[str, Any]
    if isinstance(s.relevance, RelevanceVector):
        rel = {"mode": "static", "q": list(s.relevance.q)}
        if s.relevance.delta is not None:
            rel["delta"] = list(s.relevance.delta)
    else:
        rel = {
            "mode": "embedding",
            "endpoint": s.relevance.endpoint,
            "model": s.relevance.model,
            "credential_env": s.relevance.credential_env,
            "timeout": s.relevance.timeout,
            "max_retries": s.relevance.max_retries,
            "max_in_flight": s.relevance.max_in_flight,
        }
    out: dict[str, Any] = {
        "query": s.query,
        "ads": ads,
        "relevance": rel,
        "T": s.segments,
        "k": s.slots,
        "mechanism": s.mechanism.value,
        "trials": s.trials,
        "seed": s.seed,
    }
    c = s.combinatorial
    if (c.alpha, c.beta, c.negative_payment, c.pairwise) != (
        1.0, 0.0, NegativePaymentPolicy.CLAMP_TO_ZERO, None,
    ):
        cd: dict[str, Any] = {
            "alpha": c.alpha,
            "beta": c.beta,
            "negative_payment": c.negative_payment.value,
        }
        if c.pairwise is not None:
            cd["pairwise"] = [list(row) for row in c.pairwise]
        out["combinatorial"] = cd
    return out


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_scenario(scenario_from_dict(json.load(fh)))


def dump_scenario(s: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=False)
        fh.write("\n")


def all_subsets(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Every k-subset of range(n), in itertools.combinations order.

    This ordering is load-bearing: combinatorial noise draws, set scores and
    set indices all line up with it.
    """

    return tuple(itertools.combinations(range(n), k))
