"""Datasets: synthetic generation, CSV ingestion, gold truth, splitting.

File formats
------------
records CSV       : header `id,<feature...>`; multi-valued cells joined with
                    `|`; an empty cell is a missing feature. UTF-8.
gold CSV          : header `id,label`; an empty label leaves the id unlabeled.
labeled pairs CSV : header `id_a,id_b,label` with label 1 (match) or 0.
schema JSON       : {"features": [{"name": ..., "kind": ...}, ...]}
"""

import csv
import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .metrics import Pair, pairs_from_labels
from .records import NUMERIC, Feature, FeatureSchema, Record, base_record


@dataclass(frozen=True)
class GoldTruth:
    """Ground-truth entity labels (or proxy keys) for base-record ids.
    Unlabeled ids contribute no truth pairs."""

    labels: dict[str, str]

    def truth_pairs(self) -> frozenset[Pair]:
        return pairs_from_labels(self.labels)

    def restricted(self, ids: Iterable[str]) -> "GoldTruth":
        keep = set(ids)
        return GoldTruth({i: lab for i, lab in self.labels.items() if i in keep})


def synthetic_schema(dims: int) -> FeatureSchema:
    width = max(2, len(str(dims - 1)))
    return FeatureSchema(tuple(Feature(f"f{j:0{width}d}", NUMERIC) for j in range(dims)))


def generate_synthetic(n_entities: int = 100, records_per_entity: int = 10,
                       dims: int = 10, noise_sigma: float = 0.02,
                       seed: int = 0) -> tuple[list[Record], GoldTruth]:
    """Noisy numeric records around per-entity latent vectors.

    Each entity draws a latent vector uniformly from the unit cube; each of
    its records is the latent plus independent Gaussian noise per
    dimension. Deterministic given the seed. The defaults produce 1000
    records in 100 entities of 10, i.e. 4500 truth pairs.
    """
    if n_entities < 1 or records_per_entity < 1 or dims < 1:
        raise ConfigError("entity, record, and dimension counts must be positive")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    schema = synthetic_schema(dims)
    latents = rng.uniform(size=(n_entities, dims))
    noise = rng.normal(0.0, noise_sigma, size=(n_entities * records_per_entity, dims))
    total = n_entities * records_per_entity
    id_width = max(4, len(str(total - 1)))
    ent_width = max(4, len(str(n_entities - 1)))
    records = []
    labels = {}
    row = 0
    for e in range(n_entities):
        for _ in range(records_per_entity):
            rid = f"r{row:0{id_width}d}"
            feats = latents[e] + noise[row]
            records.append(base_record(
                schema, rid,
                {name: [float(v)] for name, v in zip(schema.names, feats)},
            ))
            labels[rid] = f"e{e:0{ent_width}d}"
            row += 1
    return records, GoldTruth(labels)


def load_records_csv(path, schema: FeatureSchema) -> list[Record]:
    """Read base records; the header must contain `id` plus exactly the
    schema's feature names (any column order)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if "id" not in header:
            raise DataError(f"{path}: header is missing the mandatory `id` column")
        expected = {"id", *schema.names}
        if set(header) != expected:
            raise DataError(
                f"{path}: header {sorted(header)} does not match schema "
                f"columns {sorted(expected)}"
            )
        idx = {name: header.index(name) for name in header}
        records = []
        seen = set()
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{row_no}: expected {len(header)} cells, got {len(row)}")
            rid = row[idx["id"]].strip()
            if not rid:
                raise DataError(f"{path}:{row_no}: empty id")
            if rid in seen:
                raise DataError(f"{path}:{row_no}: duplicate id {rid!r}")
            seen.add(rid)
            values = {}
            for feat in schema.features:
                cell = row[idx[feat.name]].strip()
                if not cell:
                    continue
                parts = [p for p in (s.strip() for s in cell.split("|")) if p]
                values[feat.name] = parts
            try:
                records.append(base_record(schema, rid, values))
            except SchemaError as exc:
                raise DataError(f"{path}:{row_no}: {exc}") from exc
    return records


def _format_value(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_records_csv(path, records: Sequence[Record], schema: FeatureSchema) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *schema.names])
        for rec in records:
            cells = [rec.record_id]
            for feat, slot in zip(schema.features, rec.values):
                parts = sorted((_format_value(v) for v in slot), key=str)
                # empty strings and '|' cannot survive the cell encoding
                if any(p == "" or "|" in p for p in parts):
                    raise DataError(
                        f"record {rec.record_id!r} feature {feat.name!r} holds a "
                        "value the CSV cell encoding cannot represent"
                    )
                cells.append("|".join(parts))
            writer.writerow(cells)


GOLD_MODES = ("cluster-labels", "proxy-key")


def load_gold(path, mode: str = "cluster-labels",
              valid_ids: Iterable[str] | None = None) -> GoldTruth:
    """Read `id,label` rows into a GoldTruth. In cluster-labels mode the
    label is an entity id; in proxy-key mode it is a shared natural key
    (e.g. a phone number) standing in for the entity. Both induce the same
    pair set: all same-label pairs. Rows with an empty label are unlabeled.
    """
    if mode not in GOLD_MODES:
        raise ConfigError(f"unknown gold mode {mode!r}; expected one of {GOLD_MODES}")
    known = set(valid_ids) if valid_ids is not None else None
    path = Path(path)
    labels = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if [h.strip() for h in header] != ["id", "label"]:
            raise DataError(f"{path}: expected header `id,label`, got {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{row_no}: expected 2 cells, got {len(row)}")
            rid, label = row[0].strip(), row[1].strip()
            if not rid:
                raise DataError(f"{path}:{row_no}: empty id")
            if rid in labels:
                raise DataError(f"{path}:{row_no}: duplicate id {rid!r}")
            if known is not None and rid not in known:
                raise DataError(f"{path}:{row_no}: unknown id {rid!r}")
            if label:
                labels[rid] = label
    return GoldTruth(labels)


def write_gold_csv(path, gold: GoldTruth) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"])
        for rid in sorted(gold.labels):
            writer.writerow([rid, gold.labels[rid]])


def proxy_gold_from_records(records: Sequence[Record], schema: FeatureSchema,
                            feature_name: str) -> GoldTruth:
    """Derive proxy labels from a feature column: records carrying exactly
    one value of the feature get that value as their label; records with
    zero or several values stay unlabeled."""
    idx = schema.index(feature_name)
    labels = {}
    for rec in records:
        slot = rec.values[idx]
        if len(slot) == 1:
            labels[rec.record_id] = _format_value(next(iter(slot)))
    return GoldTruth(labels)


def load_labeled_pairs_csv(path, records: Sequence[Record]) -> list["LabeledPair"]:
    """Read `id_a,id_b,label` rows into (record, record, label) triples
    suitable for training; every id must name one of `records`."""
    by_id = {r.record_id: r for r in records}
    path = Path(path)
    pairs = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if [h.strip() for h in header] != ["id_a", "id_b", "label"]:
            raise DataError(f"{path}: expected header `id_a,id_b,label`, got {header}")
        for row_no, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise DataError(f"{path}:{row_no}: expected 3 cells, got {len(row)}")
            id_a, id_b, label = (cell.strip() for cell in row)
            if label not in ("0", "1"):
                raise DataError(f"{path}:{row_no}: label must be 0 or 1, got {label!r}")
            if id_a == id_b:
                raise DataError(f"{path}:{row_no}: self-pair {id_a!r}")
            for rid in (id_a, id_b):
                if rid not in by_id:
                    raise DataError(f"{path}:{row_no}: unknown id {rid!r}")
            pairs.append((by_id[id_a], by_id[id_b], int(label)))
    return pairs


def write_labeled_pairs_csv(path, pairs: Sequence["LabeledPair"]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_a", "id_b", "label"])
        for a, b, label in pairs:
            writer.writerow([a.record_id, b.record_id, label])


def save_schema_json(path, schema: FeatureSchema) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n")


def load_schema_json(path) -> FeatureSchema:
    return FeatureSchema.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SplitSpec:
    """How many labeled pairs to draw for training and validation, and at
    what positive fraction. Records touched by a drawn pair leave the test
    set."""

    n_train_pairs: int
    n_validation_pairs: int
    positive_fraction_train: float = 0.5
    positive_fraction_validation: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_train_pairs < 0 or self.n_validation_pairs < 0:
            raise ConfigError("pair counts must be nonnegative")
        for name in ("positive_fraction_train", "positive_fraction_validation"):
            f = getattr(self, name)
            if not 0.0 < f < 1.0:
                raise ConfigError(f"{name} must lie strictly inside (0, 1)")


LabeledPair = tuple[Record, Record, int]


@dataclass(frozen=True)
class Split:
    train_pairs: list[LabeledPair]
    validation_pairs: list[LabeledPair]
    test_records: list[Record]
    test_gold: GoldTruth


def _positive_count(n_pairs: int, fraction: float) -> int:
    if n_pairs == 0:
        return 0
    k = round(n_pairs * fraction)
    if n_pairs >= 2:
        k = min(max(k, 1), n_pairs - 1)
    return int(k)


def _sample_negative_pairs(ids: Sequence[str], labels: dict[str, str], count: int,
                           rng: np.random.Generator) -> list[Pair]:
    """Distinct-label pairs sampled without replacement, by rejection for
    sparse requests and by full enumeration otherwise."""
    n = len(ids)
    total = n * (n - 1) // 2
    chosen: set[Pair] = set()
    if count == 0:
        return []
    if total <= 200_000 or count > total // 4:
        pool = sorted(
            (a, b) for a, b in combinations(sorted(ids), 2) if labels[a] != labels[b]
        )
        picks = rng.choice(len(pool), size=count, replace=False)
        return [pool[k] for k in sorted(picks)]
    attempts_left = 100 * count + 10_000
    while len(chosen) < count and attempts_left > 0:
        i, j = rng.integers(0, n, size=2)
        attempts_left -= 1
        if i == j:
            continue
        a, b = ids[i], ids[j]
        if labels[a] == labels[b]:
            continue
        chosen.add((a, b) if a < b else (b, a))
    if len(chosen) < count:
        raise ConfigError("negative-pair sampling stalled; request too dense")
    return sorted(chosen)


def split_dataset(records: Sequence[Record], gold: GoldTruth,
                  spec: SplitSpec) -> Split:
    """Draw labeled train and validation pairs and carve the test set.

    Positive pairs come from the gold truth, negative pairs from pairs of
    labeled records with different labels; sampling is without replacement
    and train/validation never share a pair. Every record that appears in a
    drawn pair is removed from the test records, and the gold truth is
    restricted to what remains. Deterministic given spec.seed.
    """
    by_id = {}
    for rec in records:
        if rec.record_id in by_id:
            raise DataError(f"duplicate record id {rec.record_id!r}")
        by_id[rec.record_id] = rec
    unknown = set(gold.labels) - set(by_id)
    if unknown:
        raise DataError(f"gold labels reference unknown ids: {sorted(unknown)[:5]}")

    n_pos_train = _positive_count(spec.n_train_pairs, spec.positive_fraction_train)
    n_neg_train = spec.n_train_pairs - n_pos_train
    n_pos_val = _positive_count(spec.n_validation_pairs, spec.positive_fraction_validation)
    n_neg_val = spec.n_validation_pairs - n_pos_val

    positives = sorted(gold.truth_pairs())
    labeled_ids = sorted(gold.labels)
    n_labeled = len(labeled_ids)
    negatives_available = n_labeled * (n_labeled - 1) // 2 - len(positives)
    if n_pos_train + n_pos_val > len(positives):
        raise ConfigError(
            f"split needs {n_pos_train + n_pos_val} positive pairs but only "
            f"{len(positives)} exist in the gold truth"
        )
    if n_neg_train + n_neg_val > negatives_available:
        raise ConfigError(
            f"split needs {n_neg_train + n_neg_val} negative pairs but only "
            f"{negatives_available} exist among labeled records"
        )

    rng = np.random.default_rng(spec.seed)
    pos_picks = rng.choice(len(positives), size=n_pos_train + n_pos_val, replace=False)
    pos_pairs = [positives[k] for k in pos_picks]
    neg_pairs = _sample_negative_pairs(labeled_ids, gold.labels,
                                       n_neg_train + n_neg_val, rng)

    def materialize(id_pairs: list[Pair], label: int) -> list[LabeledPair]:
        return [(by_id[a], by_id[b], label) for a, b in id_pairs]

    train = materialize(pos_pairs[:n_pos_train], 1) + materialize(neg_pairs[:n_neg_train], 0)
    validation = (materialize(pos_pairs[n_pos_train:], 1)
                  + materialize(neg_pairs[n_neg_train:], 0))

    used = {rid for a, b, _ in train + validation for rid in (a.record_id, b.record_id)}
    test_records = [r for r in records if r.record_id not in used]
    return Split(
        train_pairs=train,
        validation_pairs=validation,
        test_records=test_records,
        test_gold=gold.restricted(r.record_id for r in test_records),
    )
