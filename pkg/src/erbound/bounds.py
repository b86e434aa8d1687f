"""Estimated lower bounds on pairwise precision, recall, and F1.

Given the confusion counts of the thresholded match function on a small
labeled validation set, the pairwise performance of a representativity-
preserving resolution of an arbitrarily large test set is bounded from
below:

  precision >= (|T_M| / |R|) * rebalance(precision_v, C_V, C_T)
  recall    >= recall_v

where |R| counts within-cluster test pairs, |T_M| counts directly matching
test pairs, and the rebalance term converts validation precision to the
precision the same TPR/FPR ratio yields at the test set's positive-pair
prevalence C_T. Uncertainty in the validation rates propagates through
Wilson score intervals; since the rebalance map is monotone increasing in
the validation precision, evaluating the bound at the interval endpoints
gives exact interval bounds.
"""

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, DegenerateDataError, UninformativeMatcherError

# prevalence estimates are clipped away from the open-interval endpoints
_PREVALENCE_EPS = 1e-9


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF via a rational approximation refined by
    one Halley step; absolute error well below 1e-8 on (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly inside (0, 1)")
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
             / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
             / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
              / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0))
    # one Halley refinement against the exact CDF
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def wilson_interval(successes: int, trials: int, confidence: float) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Contains successes/trials; the endpoints are pinned to exactly 0 and 1
    when successes is 0 or trials.
    """
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie strictly inside (0, 1)")
    z = normal_quantile(0.5 + confidence / 2.0)
    n = float(trials)
    phat = successes / n
    z2n = z * z / n
    denom = 1.0 + z2n
    center = (phat + z2n / 2.0) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z2n / (4.0 * n)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return low, high


def _check_prevalence(value: float, name: str) -> None:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie strictly inside (0, 1), got {value!r}")


def rebalance_precision(p_v: float, c_v: float, c_t: float) -> float:
    """Precision at prevalence c_t of a classifier that attains precision
    p_v at prevalence c_v with the same TPR/FPR ratio.

    Identity when c_v == c_t; monotone increasing in both p_v and c_t; the
    inverse map is the same formula with the prevalences swapped.
    """
    if not 0.0 <= p_v <= 1.0:
        raise ValueError(f"p_v must lie in [0, 1], got {p_v!r}")
    _check_prevalence(c_v, "c_v")
    _check_prevalence(c_t, "c_t")
    if p_v == 1.0:
        # numerator and denominator coincide algebraically; avoid fp noise
        return 1.0
    num = c_t * (1.0 - c_v) * p_v
    den = c_v * (1.0 - c_t) + (c_t - c_v) * p_v
    return min(1.0, max(0.0, num / den))


def precision_lower_bound(tm_pairs: int, r_pairs: int, p_v: float,
                          c_v: float, c_t: float) -> float:
    """Lower bound on pairwise test precision: the directly-matching
    fraction of within-cluster pairs times the rebalanced validation
    precision. Zero when the resolution produced no pairs."""
    if tm_pairs < 0 or r_pairs < 0:
        raise ValueError("pair counts must be nonnegative")
    if tm_pairs > r_pairs:
        raise ValueError(
            f"tm_pairs ({tm_pairs}) exceeds r_pairs ({r_pairs}); directly "
            "matching pairs are always within-cluster for a representative resolver"
        )
    if r_pairs == 0:
        return 0.0
    return (tm_pairs / r_pairs) * rebalance_precision(p_v, c_v, c_t)


def f1_lower_bound(p_lb: float, r_lb: float) -> float:
    """Harmonic mean of the two bounds; 0 when both are 0."""
    if not 0.0 <= p_lb <= 1.0 or not 0.0 <= r_lb <= 1.0:
        raise ValueError("bounds must lie in [0, 1]")
    if p_lb + r_lb == 0.0:
        return 0.0
    return 2.0 * p_lb * r_lb / (p_lb + r_lb)


@dataclass(frozen=True)
class ValidationStats:
    """Confusion counts of the thresholded match function on the labeled
    validation pairs. Needs at least one pair of each label."""

    n_pairs: int
    n_positive: int
    n_predicted_match: int
    n_true_match: int

    def __post_init__(self):
        if min(self.n_pairs, self.n_positive, self.n_predicted_match, self.n_true_match) < 0:
            raise ValueError("counts must be nonnegative")
        if self.n_true_match > min(self.n_predicted_match, self.n_positive):
            raise ValueError("n_true_match exceeds n_predicted_match or n_positive")
        if self.n_predicted_match > self.n_pairs or self.n_positive > self.n_pairs:
            raise ValueError("per-class counts exceed n_pairs")
        if self.n_positive == 0 or self.n_positive == self.n_pairs:
            raise DegenerateDataError(
                "validation pairs must include both labels "
                f"(got {self.n_positive} positives of {self.n_pairs})"
            )
        if self.n_predicted_match - self.n_true_match > self.n_pairs - self.n_positive:
            raise ValueError("false-positive count exceeds negative count")

    @classmethod
    def from_scores(cls, scores: Sequence[float], labels: Sequence[int],
                    threshold: float) -> "ValidationStats":
        scores = np.asarray(scores, dtype=float)
        labels = np.asarray(labels)
        if scores.shape != labels.shape:
            raise ValueError("scores and labels must have equal length")
        predicted = scores >= threshold
        positive = labels == 1
        return cls(
            n_pairs=int(len(scores)),
            n_positive=int(positive.sum()),
            n_predicted_match=int(predicted.sum()),
            n_true_match=int((predicted & positive).sum()),
        )

    @property
    def c_v(self) -> float:
        return self.n_positive / self.n_pairs

    @property
    def precision_v(self) -> float:
        if self.n_predicted_match == 0:
            raise DegenerateDataError("no predicted matches; validation precision undefined")
        return self.n_true_match / self.n_predicted_match

    @property
    def recall_v(self) -> float:
        return self.n_true_match / self.n_positive

    @property
    def tpr_v(self) -> float:
        return self.recall_v

    @property
    def fpr_v(self) -> float:
        return (self.n_predicted_match - self.n_true_match) / (self.n_pairs - self.n_positive)

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "n_positive": self.n_positive,
            "n_predicted_match": self.n_predicted_match,
            "n_true_match": self.n_true_match,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ValidationStats":
        return cls(int(d["n_pairs"]), int(d["n_positive"]),
                   int(d["n_predicted_match"]), int(d["n_true_match"]))


def recall_lower_bound(stats: ValidationStats) -> float:
    """Lower bound on pairwise test recall: the validation recall itself.
    Recall depends only on the positive pairs, so no class rebalancing is
    involved and the test resolution never enters."""
    return stats.recall_v


def estimate_test_class_balance(predicted_match_rate: float,
                                stats: ValidationStats,
                                override: float | None = None) -> float:
    """Adjusted-count estimate of the fraction of test pairs that are true
    matches: (rate - FPR) / (TPR - FPR), clipped into (0, 1).

    A caller who knows the prevalence can pass `override`, which is
    returned unchanged after a range check.
    """
    if override is not None:
        _check_prevalence(override, "class-balance override")
        return override
    if not 0.0 <= predicted_match_rate <= 1.0:
        raise ValueError("predicted_match_rate must lie in [0, 1]")
    tpr, fpr = stats.tpr_v, stats.fpr_v
    if tpr <= fpr:
        raise UninformativeMatcherError(
            f"validation TPR ({tpr:.4f}) does not exceed FPR ({fpr:.4f})"
        )
    estimate = (predicted_match_rate - fpr) / (tpr - fpr)
    return min(1.0 - _PREVALENCE_EPS, max(_PREVALENCE_EPS, estimate))


@dataclass(frozen=True)
class BoundIntervals:
    """Per-bound (low, high) confidence intervals."""

    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]


def propagate_bound_interval(stats: ValidationStats, tm_pairs: int, r_pairs: int,
                             c_t: float, confidence: float = 0.95) -> BoundIntervals:
    """Intervals for the three bounds from Wilson intervals on the
    validation rates.

    The precision bound is monotone increasing in the validation precision,
    so evaluating it at the Wilson endpoints yields exact endpoints; the
    recall bound is the validation recall, so its Wilson interval carries
    over directly; F1 endpoints come from composing the other two.
    """
    p_low, p_high = wilson_interval(stats.n_true_match, stats.n_predicted_match, confidence)
    r_low, r_high = wilson_interval(stats.n_true_match, stats.n_positive, confidence)
    pb_low = precision_lower_bound(tm_pairs, r_pairs, p_low, stats.c_v, c_t)
    pb_high = precision_lower_bound(tm_pairs, r_pairs, p_high, stats.c_v, c_t)
    return BoundIntervals(
        precision=(pb_low, pb_high),
        recall=(r_low, r_high),
        f1=(f1_lower_bound(pb_low, r_low), f1_lower_bound(pb_high, r_high)),
    )


@dataclass(frozen=True)
class BoundReport:
    """Everything a quality gate needs: the counts, the class-balance
    estimate, the three lower bounds, and their intervals."""

    r_pairs: int
    tm_pairs: int
    c_t_estimate: float
    precision_lb: float
    recall_lb: float
    f1_lb: float
    intervals: BoundIntervals
    confidence_level: float = 0.95

    def to_dict(self) -> dict:
        return {
            "r_pairs": self.r_pairs,
            "tm_pairs": self.tm_pairs,
            "c_t_estimate": self.c_t_estimate,
            "precision_lower_bound": self.precision_lb,
            "recall_lower_bound": self.recall_lb,
            "f1_lower_bound": self.f1_lb,
            "confidence_level": self.confidence_level,
            "intervals": {
                "precision": list(self.intervals.precision),
                "recall": list(self.intervals.recall),
                "f1": list(self.intervals.f1),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def compute_bound_report(stats: ValidationStats, tm_pairs: int, r_pairs: int,
                         total_test_pairs: int, c_t: float | None = None,
                         confidence: float = 0.95) -> BoundReport:
    """Assemble the full bound report for one resolution.

    `total_test_pairs` is the number of unordered test record pairs, used
    to turn |T_M| into the predicted match rate the class-balance estimator
    consumes. Raises DegenerateDataError when the validation set has no
    predicted matches at this threshold (precision undefined).
    """
    if total_test_pairs <= 0:
        raise DataError("test set must contain at least one record pair")
    if tm_pairs > total_test_pairs:
        raise ValueError("tm_pairs exceeds the number of test pairs")
    c_t_est = estimate_test_class_balance(tm_pairs / total_test_pairs, stats, override=c_t)
    p_lb = precision_lower_bound(tm_pairs, r_pairs, stats.precision_v, stats.c_v, c_t_est)
    r_lb = recall_lower_bound(stats)
    return BoundReport(
        r_pairs=r_pairs,
        tm_pairs=tm_pairs,
        c_t_estimate=c_t_est,
        precision_lb=p_lb,
        recall_lb=r_lb,
        f1_lb=f1_lower_bound(p_lb, r_lb),
        intervals=propagate_bound_interval(stats, tm_pairs, r_pairs, c_t_est, confidence),
        confidence_level=confidence,
    )
