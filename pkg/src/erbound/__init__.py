"""Pairwise entity resolution with estimated lower bounds on pairwise
precision, recall, and F1, computed from a small labeled validation set."""

from .bounds import (
    BoundIntervals,
    BoundReport,
    ValidationStats,
    compute_bound_report,
    estimate_test_class_balance,
    f1_lower_bound,
    precision_lower_bound,
    propagate_bound_interval,
    rebalance_precision,
    recall_lower_bound,
    wilson_interval,
)
from .dataset import (
    GoldTruth,
    Split,
    SplitSpec,
    generate_synthetic,
    load_gold,
    load_records_csv,
    split_dataset,
    synthetic_schema,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateDataError,
    ErboundError,
    SchemaError,
    UninformativeMatcherError,
)
from .matching import (
    MatchModel,
    TrainConfig,
    base_match,
    featurize_pair,
    levenshtein,
    normalized_levenshtein,
    score_pair,
    train_match_model,
    wrapper_match,
)
from .metrics import (
    PairMetrics,
    count_direct_match_pairs,
    intra_cluster_pair_count,
    intra_cluster_pairs,
    pair_metrics,
    pairs_from_labels,
)
from .records import (
    CATEGORICAL,
    NUMERIC,
    TEXT,
    Feature,
    FeatureSchema,
    Record,
    base_record,
    merge_records,
    validate_record,
)
from .resolver import Clustering, UnionFind, resolve_connected_components, resolve_rswoosh

__version__ = "0.1.0"
