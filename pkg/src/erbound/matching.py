"""Pairwise featurization and the thresholded logistic match function.

Two records are compared feature by feature: categorical features by set
intersection, numeric features by the smallest absolute difference across
the two value sets, text features by the smallest normalized Levenshtein
distance. A logistic model over those features gives a match probability,
and a single cut-off threshold turns it into a boolean match decision.

Composite (merged) records are matched through a wrapper that takes the
max over all pairs of constituent base records, which preserves
representativity for any underlying base matcher.
"""

import json
from dataclasses import dataclass, asdict, field, replace
from itertools import product
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, DegenerateDataError, SchemaError
from .records import CATEGORICAL, NUMERIC, FeatureSchema, Record

MODEL_FORMAT_VERSION = 1


def levenshtein(s: str, t: str) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if s == t:
        return 0
    if not s:
        return len(t)
    if not t:
        return len(s)
    prev = list(range(len(t) + 1))
    cur = [0] * (len(t) + 1)
    for i, cs in enumerate(s):
        cur[0] = i + 1
        for j, ct in enumerate(t):
            cost = 0 if cs == ct else 1
            cur[j + 1] = min(cur[j] + 1, prev[j + 1] + 1, prev[j] + cost)
        prev, cur = cur, prev
    return prev[len(t)]


def normalized_levenshtein(s: str, t: str) -> float:
    """Edit distance divided by the longer length, in [0, 1]. Two empty
    strings are identical (0.0)."""
    longest = max(len(s), len(t))
    if longest == 0:
        return 0.0
    return levenshtein(s, t) / longest


def featurize_pair(a: Record, b: Record, schema: FeatureSchema) -> np.ndarray:
    """Pairwise feature vector of length 2F: F similarity/distance slots in
    schema order, then F missing indicators in schema order.

    Multi-valued features use the closest match across the cross product of
    the two value sets. A feature missing on either side gets slot 0 and
    indicator 1. Symmetric in (a, b).
    """
    n = len(schema)
    if len(a.values) != n or len(b.values) != n:
        raise SchemaError("record does not conform to the schema (feature count)")
    slots = np.zeros(2 * n)
    for i, feat in enumerate(schema.features):
        va, vb = a.values[i], b.values[i]
        if not va or not vb:
            slots[n + i] = 1.0
            continue
        if feat.kind == CATEGORICAL:
            slots[i] = 1.0 if (va & vb) else 0.0
        elif feat.kind == NUMERIC:
            slots[i] = min(abs(x - y) for x, y in product(va, vb))
        else:  # TEXT
            slots[i] = min(normalized_levenshtein(x, y) for x, y in product(va, vb))
    return slots


@dataclass(frozen=True)
class TrainConfig:
    # l2 near 1/n_pairs keeps scores spread over (0, 1); much weaker
    # regularization saturates them and threshold sweeps lose resolution
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")


@dataclass(frozen=True, eq=False)
class MatchModel:
    """Trained logistic match function plus its decision threshold.

    Standardization (per-slot mean and scale) is stored so scoring is
    self-contained: score = sigmoid(w . (x - mean)/scale + bias).
    """

    schema: FeatureSchema
    weights: np.ndarray
    bias: float
    threshold: float
    feature_means: np.ndarray
    feature_scales: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "feature_means", np.asarray(self.feature_means, dtype=float))
        object.__setattr__(self, "feature_scales", np.asarray(self.feature_scales, dtype=float))
        n = 2 * len(self.schema)
        for name in ("weights", "feature_means", "feature_scales"):
            if getattr(self, name).shape != (n,):
                raise SchemaError(f"{name} must have shape ({n},)")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly inside (0, 1)")
        if not np.all(self.feature_scales > 0):
            raise ValueError("feature scales must be positive")

    def with_threshold(self, threshold: float) -> "MatchModel":
        return replace(self, threshold=threshold)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_means) / self.feature_scales

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "schema": self.schema.to_dict(),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "threshold": float(self.threshold),
            "standardization": {
                "mean": [float(m) for m in self.feature_means],
                "scale": [float(s) for s in self.feature_scales],
            },
            "config": asdict(self.config),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MatchModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format_version {d.get('format_version')!r}")
        return cls(
            schema=FeatureSchema.from_dict(d["schema"]),
            weights=np.array(d["weights"], dtype=float),
            bias=float(d["bias"]),
            threshold=float(d["threshold"]),
            feature_means=np.array(d["standardization"]["mean"], dtype=float),
            feature_scales=np.array(d["standardization"]["scale"], dtype=float),
            config=TrainConfig(**d["config"]),
        )


def save_model(path, model: MatchModel) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n")


def load_model(path) -> MatchModel:
    return MatchModel.from_dict(json.loads(Path(path).read_text()))


def sigmoid(z):
    z = np.clip(z, -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def logistic_loss(weights: np.ndarray, bias: float, X: np.ndarray,
                  y: np.ndarray, l2: float) -> float:
    """Mean L2-regularized logistic loss. The bias is not regularized."""
    z = X @ weights + bias
    # log(1 + exp(-s)) with s = z for y=1 and -z for y=0, computed stably
    s = np.where(y > 0.5, z, -z)
    nll = np.logaddexp(0.0, -s).mean()
    return float(nll + 0.5 * l2 * float(weights @ weights))


def logistic_gradient(weights: np.ndarray, bias: float, X: np.ndarray,
                      y: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    """Analytic gradient of `logistic_loss` in (weights, bias)."""
    resid = sigmoid(X @ weights + bias) - y
    grad_w = X.T @ resid / len(y) + l2 * weights
    grad_b = float(resid.mean())
    return grad_w, grad_b


def fit_logistic(X: np.ndarray, y: np.ndarray,
                 config: TrainConfig) -> tuple[np.ndarray, float, list[float]]:
    """Full-batch gradient descent from zero weights.

    The step size starts at config.learning_rate and is halved whenever a
    step would increase the loss, so the returned per-epoch loss history is
    non-increasing. Deterministic.
    """
    w = np.zeros(X.shape[1])
    b = 0.0
    lr = config.learning_rate
    loss = logistic_loss(w, b, X, y, config.l2)
    losses = [loss]
    for _ in range(config.epochs):
        grad_w, grad_b = logistic_gradient(w, b, X, y, config.l2)
        for _ in range(60):
            w_new = w - lr * grad_w
            b_new = b - lr * grad_b
            new_loss = logistic_loss(w_new, b_new, X, y, config.l2)
            if new_loss <= loss:
                break
            lr *= 0.5
        else:
            losses.append(loss)
            continue
        w, b, loss = w_new, b_new, new_loss
        losses.append(loss)
    return w, b, losses


def train_match_model(pairs: Sequence[tuple[Record, Record, int]],
                      schema: FeatureSchema,
                      config: TrainConfig | None = None,
                      threshold: float = 0.5) -> MatchModel:
    """Train the logistic match function on labeled record pairs.

    `pairs` holds (record, record, label) triples with label 1 for a match
    and 0 for a mismatch; both labels must be present. Features are
    standardized to zero mean and unit scale before the descent, and the
    standardization is stored in the returned model.
    """
    config = config or TrainConfig()
    if not pairs:
        raise DegenerateDataError("no training pairs")
    X = np.stack([featurize_pair(a, b, schema) for a, b, _ in pairs])
    y = np.array([label for _, _, label in pairs], dtype=float)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("labels must be 0 or 1")
    if y.min() == y.max():
        raise DegenerateDataError("training pairs contain only one label")
    if not np.isfinite(X).all():
        raise DataError("non-finite pairwise feature encountered")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    scales = np.where(stds > 1e-12, stds, 1.0)
    Z = (X - means) / scales
    w, b, _ = fit_logistic(Z, y, config)
    return MatchModel(
        schema=schema,
        weights=w,
        bias=b,
        threshold=threshold,
        feature_means=means,
        feature_scales=scales,
        config=config,
    )


def score_pair(model: MatchModel, a: Record, b: Record) -> float:
    """Match probability in [0, 1]; symmetric in (a, b)."""
    x = featurize_pair(a, b, model.schema)
    return float(sigmoid(model.weights @ model.standardize(x) + model.bias))


def base_match(model: MatchModel, a: Record, b: Record) -> bool:
    """Thresholded match between two base records. Identical records match
    at any threshold, which makes the predicate idempotent."""
    if not a.is_base() or not b.is_base():
        raise ValueError("base_match takes base records; use wrapper_match for composites")
    if a == b:
        return True
    return score_pair(model, a, b) >= model.threshold


def wrapper_match(model: MatchModel, o1: Record, o2: Record,
                  base_records: Mapping[str, Record]) -> bool:
    """Match two possibly-composite records: true iff any pair of their
    constituent base records matches. Reduces to base_match on base
    records, and merging can only ever add constituents, so a merge never
    destroys an existing match."""
    return any(
        base_match(model, base_records[i], base_records[j])
        for i in sorted(o1.base_ids)
        for j in sorted(o2.base_ids)
    )


def _single_valued_numeric_matrix(records: Sequence[Record],
                                  schema: FeatureSchema) -> np.ndarray | None:
    """Matrix of feature values when every feature is numeric and every
    record carries exactly one value per feature; None otherwise."""
    if any(f.kind != NUMERIC for f in schema.features):
        return None
    n, m = len(records), len(schema)
    X = np.empty((n, m))
    for i, r in enumerate(records):
        if len(r.values) != m:
            raise SchemaError("record does not conform to the schema (feature count)")
        for j, slot in enumerate(r.values):
            if len(slot) != 1:
                return None
            X[i, j] = next(iter(slot))
    return X


def condensed_pairwise_scores(model: MatchModel,
                              records: Sequence[Record]) -> np.ndarray:
    """Scores for all unordered record pairs, in condensed order: pair
    (i, j) with i < j sits at index i*n - i*(i+1)/2 + (j - i - 1).

    Uses a vectorized path when the schema is all-numeric and every record
    is single-valued; otherwise falls back to scoring pair by pair.
    """
    n = len(records)
    out = np.empty(n * (n - 1) // 2)
    if n < 2:
        return out
    m = len(model.schema)
    X = _single_valued_numeric_matrix(records, model.schema)
    if X is not None:
        w_val = model.weights[:m]
        mean_val, scale_val = model.feature_means[:m], model.feature_scales[:m]
        # missing indicators are identically zero on this path
        ind_z = (0.0 - model.feature_means[m:]) / model.feature_scales[m:]
        offset = float(model.weights[m:] @ ind_z) + model.bias
        pos = 0
        for i in range(n - 1):
            diffs = np.abs(X[i + 1:] - X[i])
            z = (diffs - mean_val) / scale_val
            out[pos:pos + n - 1 - i] = sigmoid(z @ w_val + offset)
            pos += n - 1 - i
        return out
    pos = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            out[pos] = score_pair(model, records[i], records[j])
            pos += 1
    return out


def pairwise_scores(model: MatchModel,
                    records: Sequence[Record]) -> dict[tuple[str, str], float]:
    """Score every unordered pair of base records, keyed by the sorted id
    pair. All inputs must be base records with distinct ids."""
    ids = [r.record_id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate record ids")
    condensed = condensed_pairwise_scores(model, records)
    scores: dict[tuple[str, str], float] = {}
    pos = 0
    n = len(records)
    for i in range(n - 1):
        for j in range(i + 1, n):
            key = (ids[i], ids[j]) if ids[i] < ids[j] else (ids[j], ids[i])
            scores[key] = float(condensed[pos])
            pos += 1
    return scores


def matcher_from_scores(scores: Mapping[tuple[str, str], float], threshold: float,
                        ) -> Callable[[Record, Record], bool]:
    """Base-record match predicate backed by a precomputed score table.
    Equivalent to base_match for the model/threshold the table came from."""
    def match(a: Record, b: Record) -> bool:
        if not a.is_base() or not b.is_base():
            raise ValueError("scored matcher takes base records")
        if a == b:
            return True
        ia, ib = a.record_id, b.record_id
        key = (ia, ib) if ia < ib else (ib, ia)
        return scores[key] >= threshold
    return match
