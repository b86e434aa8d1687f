"""End-to-end wiring: train on a split, sweep thresholds, resolve and bound.

A sweep scores every test pair once (scores do not depend on the
threshold), then for each grid threshold re-resolves from scratch with
union-find over the edges that clear it, recomputes the validation
confusion at that threshold, and assembles the bound report. Rows where
the validation set has no predicted matches, or where the matcher is
uninformative for class-balance estimation, carry no precision/F1 bound.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bounds import ValidationStats, compute_bound_report, wilson_interval
from .dataset import GoldTruth, Split, SplitSpec, split_dataset
from .errors import ConfigError, DegenerateDataError, UninformativeMatcherError
from .matching import MatchModel, TrainConfig, condensed_pairwise_scores, train_match_model
from .metrics import Pair
from .records import FeatureSchema, Record
from .resolver import Clustering, UnionFind, components_from_condensed, resolve_from_condensed


@dataclass(frozen=True)
class ScoredPair:
    id_a: str
    id_b: str
    label: int
    score: float


@dataclass(frozen=True)
class TrainOutcome:
    model: MatchModel
    split: Split
    validation: list[ScoredPair]

    def validation_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        scores = np.array([p.score for p in self.validation])
        labels = np.array([p.label for p in self.validation])
        return scores, labels

    def stats_at(self, threshold: float) -> ValidationStats:
        scores, labels = self.validation_arrays()
        return ValidationStats.from_scores(scores, labels, threshold)


def score_labeled_pairs(model: MatchModel,
                        pairs: Sequence[tuple[Record, Record, int]]) -> list[ScoredPair]:
    from .matching import score_pair

    out = []
    for a, b, label in pairs:
        ia, ib = a.record_id, b.record_id
        if ib < ia:
            ia, ib = ib, ia
        out.append(ScoredPair(ia, ib, label, score_pair(model, a, b)))
    return out


def train_pipeline(records: Sequence[Record], gold: GoldTruth, schema: FeatureSchema,
                   split_spec: SplitSpec, config: TrainConfig | None = None,
                   threshold: float = 0.5) -> TrainOutcome:
    """Split the labeled pool, train the match model on the train pairs,
    and score the validation pairs once for later per-threshold stats."""
    split = split_dataset(records, gold, split_spec)
    if len(split.validation_pairs) < 2:
        raise ConfigError("validation split needs at least 2 labeled pairs")
    model = train_match_model(split.train_pairs, schema, config, threshold=threshold)
    return TrainOutcome(model, split, score_labeled_pairs(model, split.validation_pairs))


@dataclass(frozen=True)
class SweepRow:
    """One grid threshold of a sweep. Bound fields are None when the bound
    is undefined at that threshold; true_* fields are None without gold."""

    threshold: float
    r_pairs: int
    tm_pairs: int
    c_t: float | None = None
    precision_lb: float | None = None
    precision_lb_lo: float | None = None
    precision_lb_hi: float | None = None
    recall_lb: float | None = None
    recall_lb_lo: float | None = None
    recall_lb_hi: float | None = None
    f1_lb: float | None = None
    f1_lb_lo: float | None = None
    f1_lb_hi: float | None = None
    true_precision: float | None = None
    true_recall: float | None = None
    true_f1: float | None = None


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    best: SweepRow | None
    select_metric: str
    recall_floor: float | None = None


SELECT_METRICS = ("precision_lb", "recall_lb", "f1_lb")


def _harmonic(p: float, r: float) -> float:
    return 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)


def _component_counts(uf: UnionFind, n: int,
                      truth_idx: list[tuple[int, int]]) -> tuple[int, int]:
    sizes: dict[int, int] = {}
    for x in range(n):
        root = uf.find(x)
        sizes[root] = sizes.get(root, 0) + 1
    r_pairs = sum(s * (s - 1) // 2 for s in sizes.values())
    hits = sum(1 for i, j in truth_idx if uf.find(i) == uf.find(j))
    return r_pairs, hits


def select_best_row(rows: Sequence[SweepRow], select_metric: str = "f1_lb",
                    recall_floor: float | None = None) -> SweepRow | None:
    """Row maximizing the chosen bound metric, optionally subject to a
    recall-bound floor; ties go to the lower threshold."""
    if select_metric not in SELECT_METRICS:
        raise ConfigError(f"unknown selection metric {select_metric!r}")
    best = None
    for row in sorted(rows, key=lambda r: r.threshold):
        value = getattr(row, select_metric)
        if value is None:
            continue
        if recall_floor is not None and (row.recall_lb is None or row.recall_lb < recall_floor):
            continue
        if best is None or value > getattr(best, select_metric):
            best = row
    return best


def sweep_thresholds(model: MatchModel, test_records: Sequence[Record],
                     val_scores: np.ndarray, val_labels: np.ndarray,
                     thresholds: Sequence[float], *,
                     truth_pairs: frozenset[Pair] | None = None,
                     gold: GoldTruth | None = None,
                     c_t_override: float | None = None,
                     confidence: float = 0.95,
                     select_metric: str = "f1_lb",
                     recall_floor: float | None = None) -> SweepResult:
    """Evaluate bounds (and true metrics when truth is available) across a
    threshold grid on the test records."""
    if truth_pairs is None and gold is not None:
        truth_pairs = gold.truth_pairs()
    n = len(test_records)
    if n < 2:
        raise ConfigError("sweep needs at least 2 test records")
    scores = condensed_pairwise_scores(model, test_records)
    total_pairs = len(scores)
    index_of = {r.record_id: k for k, r in enumerate(test_records)}
    truth_idx: list[tuple[int, int]] = []
    if truth_pairs is not None:
        truth_idx = [(index_of[a], index_of[b]) for a, b in truth_pairs
                     if a in index_of and b in index_of]

    rows = []
    for t in sorted(float(t) for t in thresholds):
        uf = components_from_condensed(n, scores, t)
        r_pairs, hits = _component_counts(uf, n, truth_idx)
        tm_pairs = int((scores >= t).sum())
        row = {"threshold": t, "r_pairs": r_pairs, "tm_pairs": tm_pairs}
        stats = ValidationStats.from_scores(val_scores, val_labels, t)
        rec_lo, rec_hi = wilson_interval(stats.n_true_match, stats.n_positive, confidence)
        row.update(recall_lb=stats.recall_v, recall_lb_lo=rec_lo, recall_lb_hi=rec_hi)
        try:
            report = compute_bound_report(stats, tm_pairs, r_pairs, total_pairs,
                                          c_t=c_t_override, confidence=confidence)
        except (DegenerateDataError, UninformativeMatcherError):
            report = None
        if report is not None:
            row.update(
                c_t=report.c_t_estimate,
                precision_lb=report.precision_lb,
                precision_lb_lo=report.intervals.precision[0],
                precision_lb_hi=report.intervals.precision[1],
                f1_lb=report.f1_lb,
                f1_lb_lo=report.intervals.f1[0],
                f1_lb_hi=report.intervals.f1[1],
            )
        if truth_pairs is not None:
            truth_total = len(truth_idx)
            precision = hits / r_pairs if r_pairs else 1.0
            recall = hits / truth_total if truth_total else 1.0
            row.update(true_precision=precision, true_recall=recall,
                       true_f1=_harmonic(precision, recall))
        rows.append(SweepRow(**row))

    for prev, cur in zip(rows, rows[1:]):
        if cur.r_pairs > prev.r_pairs or cur.tm_pairs > prev.tm_pairs:
            raise AssertionError(
                "pair counts increased with the threshold; "
                "the resolver violated edge-removal monotonicity"
            )
    return SweepResult(rows, select_best_row(rows, select_metric, recall_floor),
                       select_metric, recall_floor)


def resolve_at(model: MatchModel, records: Sequence[Record],
               threshold: float | None = None) -> Clustering:
    """Connected-components resolution of base records at a threshold
    (default: the model's own)."""
    t = model.threshold if threshold is None else float(threshold)
    scores = condensed_pairwise_scores(model, records)
    return resolve_from_condensed(records, scores, t)


@dataclass(frozen=True)
class DegradationResult:
    """Numbers behind the snowball experiment: tune on a small labeled set,
    watch precision collapse on a 10x test set, then recover by re-tuning
    the threshold on the large set's estimated F1 lower bound."""

    threshold_original: float
    precision_small: float
    precision_large_original: float
    threshold_optimized: float
    precision_large_optimized: float
    sweep_rows: list[SweepRow] = field(repr=False, default_factory=list)


def degradation_experiment(seed: int = 7, *, dims: int = 10, noise_sigma: float = 0.02,
                           records_per_entity: int = 10, small_entities: int = 10,
                           large_entities: int = 100,
                           grid: Sequence[float] | None = None) -> DegradationResult:
    """Tune a threshold for true F1 on a small labeled dataset, measure true
    precision of that threshold on a fresh small and a fresh 10x dataset,
    then re-tune on the large dataset's estimated F1 lower bound."""
    from .dataset import generate_synthetic
    from .metrics import clustering_pair_metrics

    if grid is None:
        grid = np.linspace(0.02, 0.98, 49)
    grid = sorted(float(t) for t in grid)

    labeled, labeled_gold = generate_synthetic(small_entities, records_per_entity,
                                               dims, noise_sigma, seed)
    schema = synthetic_like_schema(labeled)
    spec = SplitSpec(n_train_pairs=100, n_validation_pairs=100, seed=seed)
    split = split_dataset(labeled, labeled_gold, spec)
    model = train_match_model(split.train_pairs, schema)
    val = score_labeled_pairs(model, split.validation_pairs)
    val_scores = np.array([p.score for p in val])
    val_labels = np.array([p.label for p in val])

    # threshold tuned for best true F1 on the full labeled pool (truth known
    # there); ties go to the lower threshold
    labeled_scores = condensed_pairwise_scores(model, labeled)
    labeled_truth = labeled_gold.truth_pairs()
    t_orig, best_f1 = grid[0], -1.0
    for t in grid:
        clustering = resolve_from_condensed(labeled, labeled_scores, t)
        f1 = clustering_pair_metrics(clustering, labeled_truth).f1
        if f1 > best_f1:
            t_orig, best_f1 = t, f1

    def true_precision(records, gold, threshold):
        clustering = resolve_at(model, records, threshold)
        return clustering_pair_metrics(clustering, gold.truth_pairs()).precision

    small, small_gold = generate_synthetic(small_entities, records_per_entity,
                                           dims, noise_sigma, seed + 1)
    large, large_gold = generate_synthetic(large_entities, records_per_entity,
                                           dims, noise_sigma, seed + 2)
    p_small = true_precision(small, small_gold, t_orig)
    p_large = true_precision(large, large_gold, t_orig)

    sweep = sweep_thresholds(model, large, val_scores, val_labels, grid,
                             select_metric="f1_lb")
    if sweep.best is None:
        raise DegenerateDataError("no threshold produced a defined F1 lower bound")
    t_opt = sweep.best.threshold
    p_opt = true_precision(large, large_gold, t_opt)
    return DegradationResult(t_orig, p_small, p_large, t_opt, p_opt, sweep.rows)


def synthetic_like_schema(records: Sequence[Record]) -> FeatureSchema:
    """Schema of the synthetic generator sized to the records' arity."""
    from .dataset import synthetic_schema

    return synthetic_schema(len(records[0].values))
