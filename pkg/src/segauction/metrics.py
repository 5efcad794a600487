"""Metric accounting and cross-trial aggregation.

Conventions (per segment, summed over a session):

    revenue   = sum over winners of  price          (per-click currency)
    welfare   = sum over winners of  value * q_used
    relevance = sum over winners of  q_used
    utility_i = value_i * q_used * 1{i wins}   (per ad, for min-welfare)

q_used is the CTR proxy the auction operated on: the segment's per-ad
relevance for the per-ad mechanisms, the decomposed set score for the
combinatorial one.  Revenue stays in per-click currency (prices as
charged, not scaled by click probability): that is the convention the
benchmark tables use, and the decay factor cancels out of every price,
so revenue is the one metric the segment index does not discount.

Normalizers: welfare and relevance divide by
sum_t delta_t * k * max_i(per-ad ceiling), i.e. the best conceivable value
if the strongest ad filled every slot of every segment.  Revenue divides
by segments * k * max_i(bid), the undiscounted slot count times the
largest chargeable price.  Minimum social welfare is reported
unnormalized by default (divisor 1.0): the benchmark tables it is
compared against use the raw min over ads of the mean per-trial utility,
which a per-slot ceiling would shrink by an order of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AuctionOutcome, QueryCounters, RelevanceVector, Scenario

__all__ = [
    "METRIC_NAMES",
    "CSV_HEADER",
    "Normalizers",
    "MetricValue",
    "MetricsReport",
    "table_normalizers",
    "session_metrics",
    "aggregate",
]

METRIC_NAMES = ("revenue", "social_welfare", "relevance", "min_social_welfare")

CSV_HEADER = ("mechanism", "metric", "mean", "stderr", "normalizer",
              "trials", "seed")


@dataclass(frozen=True, slots=True)
class Normalizers:
    revenue_max: float
    welfare_max: float
    relevance_max: float
    min_welfare_max: float = 1.0

    def __post_init__(self) -> None:
        for name in ("revenue_max", "welfare_max", "relevance_max", "min_welfare_max"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be positive")


def _slot_weight(scenario: Scenario) -> float:
    """sum_t delta_t * k; reduces to T * k without decay."""

    rel = scenario.relevance
    if isinstance(rel, RelevanceVector) and rel.delta is not None:
        return float(sum(rel.delta) * scenario.slots)
    return float(scenario.segments * scenario.slots)


def table_normalizers(scenario: Scenario) -> Normalizers:
    """The documented divisors for a static-relevance scenario."""

    rel = scenario.relevance
    if not isinstance(rel, RelevanceVector):
        raise ValueError("normalizers need static relevance (q known up front)")
    q = np.asarray(rel.q, dtype=np.float64)
    b = scenario.bids()
    v = scenario.values()
    sw = _slot_weight(scenario)
    slots = float(scenario.segments * scenario.slots)
    return Normalizers(
        revenue_max=slots * float(np.max(b)),
        welfare_max=sw * float(np.max(q * v)),
        relevance_max=sw * float(np.max(q)),
        min_welfare_max=1.0,
    )


def session_metrics(outcome: AuctionOutcome, values: np.ndarray,
                    n: int) -> tuple[float, float, float, np.ndarray]:
    """Raw (revenue, welfare, relevance, per-ad utility) for one session."""

    revenue = 0.0
    welfare = 0.0
    relevance = 0.0
    utility = np.zeros(n, dtype=np.float64)
    for rec in outcome.segments:
        for idx, price, q_used in zip(rec.winner_indices, rec.prices,
                                      rec.winner_relevance):
            revenue += price
            welfare += values[idx] * q_used
            relevance += q_used
            utility[idx] += values[idx] * q_used
    return revenue, welfare, relevance, utility


@dataclass(frozen=True, slots=True)
class MetricValue:
    mean: float
    stderr: float
    normalizer: float


@dataclass
class MetricsReport:
    mechanism: str
    trials: int
    seed: int
    metrics: dict[str, MetricValue]
    analytic: dict[str, float | None] = field(default_factory=dict)
    counters: QueryCounters = field(default_factory=QueryCounters)

    def rows(self) -> list[tuple]:
        """CSV-ready rows: mechanism, metric, mean, stderr, normalizer, trials, seed."""

        return [
            (
                self.mechanism, name, m.mean, m.stderr, m.normalizer,
                self.trials, self.seed,
            )
            for name, m in ((k, self.metrics[k]) for k in METRIC_NAMES)
        ]


def _mean_stderr(samples: np.ndarray, normalizer: float) -> MetricValue:
    x = samples / normalizer
    mean = float(np.mean(x))
    stderr = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return MetricValue(mean=mean, stderr=stderr, normalizer=normalizer)


def aggregate(
    revenue: np.ndarray,
    welfare: np.ndarray,
    relevance: np.ndarray,
    utility: np.ndarray,
    norms: Normalizers,
    *,
    mechanism: str,
    seed: int,
    analytic: dict[str, float | None] | None = None,
    counters: QueryCounters | None = None,
) -> MetricsReport:
    """Fold per-trial samples into a report.

    utility has shape (trials, n); min social welfare is the smallest
    per-ad mean, its stderr taken from that ad's own per-trial samples.
    """

    trials = revenue.size
    per_ad_mean = utility.mean(axis=0)
    worst = int(np.argmin(per_ad_mean))
    metrics = {
        "revenue": _mean_stderr(revenue, norms.revenue_max),
        "social_welfare": _mean_stderr(welfare, norms.welfare_max),
        "relevance": _mean_stderr(relevance, norms.relevance_max),
        "min_social_welfare": _mean_stderr(utility[:, worst], norms.min_welfare_max),
    }
    return MetricsReport(
        mechanism=mechanism,
        trials=trials,
        seed=seed,
        metrics=metrics,
        analytic=dict(analytic or {}),
        counters=counters or QueryCounters(),
    )
