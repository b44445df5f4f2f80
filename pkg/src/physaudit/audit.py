"""Seed voting with quality weights: per-metric Confidence for pair and single tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import ABSOLUTE_JND, METRIC_NAMES, PER_HIT_METRICS, AuditConfig
from .metrics import MetricVector
from .onset import AlignmentScores
from .stats import mean_ci95, robust_std, spearman

__all__ = [
    "TRENDS",
    "PAIR_TRENDS",
    "SINGLE_TRENDS",
    "Vote",
    "InsufficientSeedsError",
    "DirectionalExpectation",
    "SeedObservation",
    "TestVerdict",
    "effect_threshold",
    "vote_pair",
    "spearman_threshold",
    "vote_monotonic",
    "vote_no_change_pair",
    "robust_cv",
    "vote_no_change_single",
    "quality_weight",
    "confidence",
    "run_test",
]

TRENDS = ("increase", "decrease", "ascending", "descending", "no_change")
PAIR_TRENDS = ("increase", "decrease", "no_change")
SINGLE_TRENDS = ("ascending", "descending", "no_change")
# metrics that carry a per-hit sequence in MetricVector.per_hit
SEQUENCE_METRICS = PER_HIT_METRICS + ("rt60", "drr")

_RHO_TOLERANCE = 1e-12


class Vote(str, Enum):
    PASS = "pass"
    FAIL_DIRECTION = "fail_direction"
    FAIL_SUBTHRESHOLD = "fail_subthreshold"
    FAIL_NAN = "fail_nan"
    FAIL_INSUFFICIENT = "fail_insufficient"
    FAIL = "fail"

    @property
    def passed(self) -> bool:
        return self is Vote.PASS


# votes counted as failures in the taxonomy (as opposed to wrong-way votes)
_FAILURE_VOTES = (Vote.FAIL_SUBTHRESHOLD, Vote.FAIL_NAN, Vote.FAIL_INSUFFICIENT)


class InsufficientSeedsError(ValueError):
    """Fewer than two usable seed values for an effect threshold."""

    reason = "insufficient_seeds"


@dataclass(frozen=True)
class DirectionalExpectation:
    metric: str
    trend: str

    def __post_init__(self):
        if self.metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.trend not in TRENDS:
            raise ValueError(f"unknown trend {self.trend!r}; expected one of {TRENDS}")
        if self.trend in ("ascending", "descending") and self.metric not in SEQUENCE_METRICS:
            raise ValueError(f"trend {self.trend!r} needs a per-hit metric, not {self.metric!r}")

    @property
    def is_pair(self) -> bool:
        return self.trend in ("increase", "decrease")


@dataclass(frozen=True)
class SeedObservation:
    """Everything measured for one generation seed of a test case."""

    seed_id: str
    metrics_factual: MetricVector
    metrics_counterfactual: Optional[MetricVector] = None
    alignment_factual: Optional[AlignmentScores] = None
    alignment_counterfactual: Optional[AlignmentScores] = None
    semantic_factual: Optional[float] = None
    semantic_counterfactual: Optional[float] = None

    def __post_init__(self):
        if self.metrics_counterfactual is None and (
                self.alignment_counterfactual is not None or self.semantic_counterfactual is not None):
            raise ValueError(f"seed {self.seed_id}: counterfactual fields must be all present or all absent")
        for name in ("semantic_factual", "semantic_counterfactual"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ValueError(f"seed {self.seed_id}: {name} must lie in [0, 1], got {v}")

    @property
    def is_pair(self) -> bool:
        return self.metrics_counterfactual is not None

    def delta(self, metric: str) -> float:
        if self.metrics_counterfactual is None:
            raise ValueError(f"seed {self.seed_id} has no counterfactual")
        return self.metrics_counterfactual[metric] - self.metrics_factual[metric]


@dataclass(frozen=True)
class TestVerdict:
    """Outcome of one expectation over all seeds of a test case.

    ``n_failures`` counts NaN, sub-threshold and insufficient-data votes;
    wrong-direction or failed-equivalence votes make up the remainder.
    """

    __test__ = False  # not a pytest class despite the name

    metric: str
    trend: str
    confidence: float
    n_seeds: int
    n_votes_pass: int
    n_failures: int
    tau: float
    votes: tuple = ()
    weights: tuple = ()
    test_id: str = ""

    @property
    def n_wrong(self) -> int:
        return self.n_seeds - self.n_votes_pass - self.n_failures

    def failure_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for v in self.votes:
            counts[v] = counts.get(v, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "metric": self.metric,
            "trend": self.trend,
            "confidence": self.confidence,
            "n_seeds": self.n_seeds,
            "n_votes_pass": self.n_votes_pass,
            "n_failures": self.n_failures,
            "tau": None if not math.isfinite(self.tau) else self.tau,
            "votes": list(self.votes),
            "weights": list(self.weights),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> TestVerdict:
        tau = data.get("tau")
        return cls(
            metric=data["metric"], trend=data["trend"], confidence=float(data["confidence"]),
            n_seeds=int(data["n_seeds"]), n_votes_pass=int(data["n_votes_pass"]),
            n_failures=int(data["n_failures"]), tau=float("nan") if tau is None else float(tau),
            votes=tuple(data.get("votes", ())), weights=tuple(float(w) for w in data.get("weights", ())),
            test_id=data.get("test_id", ""),
        )


def _finite(values) -> np.ndarray:
    arr = np.asarray([float(v) for v in values], dtype=np.float64)
    return arr[np.isfinite(arr)]


def effect_threshold(values: Sequence[float], config: AuditConfig = AuditConfig()) -> float:
    """``tau = max(0.02 |mean|, 0.25 robust_std)`` over the finite per-seed values."""
    arr = _finite(values)
    if arr.size < 2:
        raise InsufficientSeedsError(f"insufficient_seeds: need 2 finite values, got {arr.size}")
    return max(config.tau_mean_fraction * abs(float(arr.mean())),
               config.tau_std_fraction * robust_std(arr))


def _directional(delta: float, tau: float, trend: str) -> Vote:
    if not math.isfinite(delta):
        return Vote.FAIL_NAN
    if abs(delta) <= tau:
        return Vote.FAIL_SUBTHRESHOLD
    if (delta > 0) == (trend == "increase"):
        return Vote.PASS
    return Vote.FAIL_DIRECTION


def vote_pair(obs: SeedObservation, exp: DirectionalExpectation, tau: float) -> Vote:
    """Directional vote on ``delta = counterfactual - factual``.

    NaN on either side fails, ``|delta| <= tau`` fails as sub-threshold, and
    otherwise the sign must agree with the expected trend.
    """
    if exp.trend not in ("increase", "decrease"):
        raise ValueError(f"vote_pair needs increase/decrease, got {exp.trend!r}")
    return _directional(obs.delta(exp.metric), tau, exp.trend)


def spearman_threshold(n: int) -> float:
    """Minimum ``|rho|`` for a monotone trend over ``n`` hits."""
    if n <= 4:
        return 0.40
    if n <= 7:
        return 0.30
    return 0.25


def vote_monotonic(sequence: Sequence[float], trend: str) -> Vote:
    """Monotone-trend vote over a per-hit sequence, compared in log2 space.

    Two hits compare signs directly; three or more need a Spearman rank
    correlation with hit index of the right sign and size.
    """
    if trend not in ("ascending", "descending"):
        raise ValueError(f"vote_monotonic needs ascending/descending, got {trend!r}")
    arr = _finite(sequence)
    arr = arr[arr > 0]
    n = arr.size
    if n < 2:
        return Vote.FAIL_INSUFFICIENT
    logs = np.log2(arr)
    sign = 1 if trend == "ascending" else -1
    if n == 2:
        diff = logs[1] - logs[0]
        return Vote.PASS if diff * sign > 0 else Vote.FAIL_DIRECTION
    rho = spearman(np.arange(n), logs)
    if not math.isfinite(rho) or rho * sign <= 0:
        return Vote.FAIL_DIRECTION
    if abs(rho) >= spearman_threshold(n) - _RHO_TOLERANCE:
        return Vote.PASS
    return Vote.FAIL_SUBTHRESHOLD


def vote_no_change_pair(deltas: Sequence[float], tau_eq: float, method: str = "t") -> Vote:
    """Equivalence test: the 95% CI of the mean delta must sit inside ``[-tau_eq, tau_eq]``."""
    arr = _finite(deltas)
    if arr.size < 2:
        return Vote.FAIL_INSUFFICIENT
    _, lo, hi = mean_ci95(arr, method)
    return Vote.PASS if -tau_eq <= lo and hi <= tau_eq else Vote.FAIL


def robust_cv(values: Sequence[float]) -> float:
    """``robust_std / |median|``; infinite when the median is 0."""
    arr = _finite(values)
    if arr.size == 0:
        raise ValueError("no finite values")
    med = float(np.median(arr))
    spread = robust_std(arr)
    if med == 0:
        return 0.0 if spread == 0 else float("inf")
    return spread / abs(med)


def vote_no_change_single(values: Sequence[float], metric: str,
                          config: AuditConfig = AuditConfig()) -> Vote:
    """Within-clip consistency: robust CV of the per-hit values against the metric's JND.

    Metrics in ``ABSOLUTE_JND`` (DRR) compare the robust spread itself, in dB.
    """
    arr = _finite(values)
    if arr.size < 2:
        return Vote.FAIL_INSUFFICIENT
    jnd = config.jnd[metric]
    if metric in ABSOLUTE_JND:
        return Vote.PASS if robust_std(arr) <= jnd else Vote.FAIL
    if np.median(arr) == 0:
        return Vote.FAIL
    return Vote.PASS if robust_cv(arr) <= jnd else Vote.FAIL


def quality_weight(obs: SeedObservation, config: AuditConfig = AuditConfig()) -> float:
    """``0.5 w_temporal + 0.5 w_semantic`` for one seed.

    Pair seeds take the minimum of both sides for each term. A missing
    semantic score counts as ``semantic_default``; without alignment data the
    weight is the semantic term alone, and with neither it is ``neutral_weight``.
    """
    aligns = [a for a in (obs.alignment_factual, obs.alignment_counterfactual if obs.is_pair else None)
              if a is not None]
    sems = [s for s in (obs.semantic_factual, obs.semantic_counterfactual if obs.is_pair else None)
            if s is not None]
    w_t = min(a.hit_coverage for a in aligns) / 100.0 if aligns else None
    w_s = min(sems) if sems else None
    if w_t is None and w_s is None:
        return config.neutral_weight
    if w_t is None:
        return float(w_s)
    if w_s is None:
        w_s = config.semantic_default
    return 0.5 * w_t + 0.5 * w_s


def confidence(votes: Sequence, weights: Sequence[float], denominator: str = "weights") -> float:
    """Weighted share of passing seeds; failing seeds stay in the denominator."""
    if len(votes) != len(weights):
        raise ValueError("votes and weights must have the same length")
    if not votes:
        raise ValueError("no votes")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    passed = np.array([Vote(v).passed if not isinstance(v, bool) else v for v in votes])
    num = float(np.sum(w[passed]))
    if denominator == "weights":
        den = float(np.sum(w))
    elif denominator == "count":
        den = float(len(votes))
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    return num / den if den > 0 else 0.0


def _verdict(exp: DirectionalExpectation, votes: list[Vote], weights: list[float], tau: float,
             config: AuditConfig, test_id: str) -> TestVerdict:
    return TestVerdict(
        metric=exp.metric, trend=exp.trend,
        confidence=confidence(votes, weights, config.denominator),
        n_seeds=len(votes),
        n_votes_pass=sum(v.passed for v in votes),
        n_failures=sum(v in _FAILURE_VOTES for v in votes),
        tau=tau, votes=tuple(v.value for v in votes), weights=tuple(weights), test_id=test_id,
    )


def _tau(observations: Sequence[SeedObservation], metric: str, config: AuditConfig) -> float:
    values = [o.metrics_factual[metric] for o in observations]
    if config.tau_reference == "pooled":
        values += [o.metrics_counterfactual[metric] for o in observations if o.is_pair]
    return effect_threshold(values, config)


def run_test(observations: Sequence[SeedObservation], expectations: Sequence[DirectionalExpectation],
             config: AuditConfig = AuditConfig(), test_id: str = "") -> list[TestVerdict]:
    """Vote every expectation over the seeds and weight the votes.

    Pair expectations (increase, decrease, no_change with counterfactuals)
    need a counterfactual metric vector on every seed; single-clip
    expectations read the factual side's per-hit values.
    """
    if not observations:
        raise ValueError("no seed observations")
    weights = [quality_weight(o, config) for o in observations]
    pair_case = any(o.is_pair for o in observations)
    if pair_case:
        missing = [o.seed_id for o in observations if not o.is_pair]
        if missing:
            raise ValueError(f"seeds without counterfactual metrics: {missing}")
    verdicts = []
    for exp in expectations:
        if exp.trend in ("increase", "decrease"):
            if not pair_case:
                raise ValueError(f"{exp.trend!r} needs a factual-counterfactual pair")
            try:
                tau = _tau(observations, exp.metric, config)
            except InsufficientSeedsError:
                votes = [Vote.FAIL_NAN] * len(observations)
                verdicts.append(_verdict(exp, votes, weights, float("nan"), config, test_id))
                continue
            votes = [vote_pair(o, exp, tau) for o in observations]
            verdicts.append(_verdict(exp, votes, weights, tau, config, test_id))
        elif exp.trend in ("ascending", "descending"):
            votes = [vote_monotonic(o.metrics_factual.per_hit.get(exp.metric, ()), exp.trend)
                     for o in observations]
            verdicts.append(_verdict(exp, votes, weights, float("nan"), config, test_id))
        elif pair_case:
            verdicts.append(_no_change_pair(observations, exp, weights, config, test_id))
        else:
            if exp.metric not in SEQUENCE_METRICS:
                raise ValueError(f"single-clip no_change needs a per-hit metric, not {exp.metric!r}")
            votes = [vote_no_change_single(o.metrics_factual.per_hit.get(exp.metric, ()), exp.metric, config)
                     for o in observations]
            verdicts.append(_verdict(exp, votes, weights, float("nan"), config, test_id))
    return verdicts


def _no_change_pair(observations, exp, weights, config, test_id) -> TestVerdict:
    deltas = [o.delta(exp.metric) for o in observations]
    valid = [math.isfinite(d) for d in deltas]
    try:
        tau = _tau(observations, exp.metric, config)
    except InsufficientSeedsError:
        votes = [Vote.FAIL_NAN] * len(observations)
        return _verdict(exp, votes, weights, float("nan"), config, test_id)
    outcome = vote_no_change_pair(deltas, config.tau_eq_multiplier * tau, config.ci_method)
    # one equivalence decision for the case; seeds without a delta never count as passes
    votes = [outcome if ok else Vote.FAIL_NAN for ok in valid]
    return _verdict(exp, votes, weights, tau, config, test_id)
