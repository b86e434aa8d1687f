import numpy as np
import pytest

from erbound.matching import MatchModel, TrainConfig
from erbound.records import (
    CATEGORICAL,
    NUMERIC,
    TEXT,
    Feature,
    FeatureSchema,
    base_record,
)


@pytest.fixture
def mixed_schema():
    return FeatureSchema((
        Feature("name1", TEXT),
        Feature("name2", TEXT),
        Feature("phone", CATEGORICAL),
        Feature("age", NUMERIC),
    ))


@pytest.fixture
def canonical_trio(mixed_schema):
    """The classic partial-name/shared-phone trio: r1 and r2 share a phone,
    r3 has the full name but no phone."""
    r1 = base_record(mixed_schema, "r1", {"name1": ["John"], "name2": ["D."],
                                          "phone": ["377-8328"]})
    r2 = base_record(mixed_schema, "r2", {"name1": ["J."], "name2": ["Doe"],
                                          "phone": ["377-8328"]})
    r3 = base_record(mixed_schema, "r3", {"name1": ["John"], "name2": ["Doe"]})
    return r1, r2, r3


WORDS = ["john", "jon", "doe", "dina", "alex", "ale", "smith", "smyth", "wu"]
CATS = ["a", "b", "c", "d", "e"]


def random_record(rng, schema, rid, max_values=2, missing_rate=0.2):
    values = {}
    for feat in schema.features:
        if rng.random() < missing_rate:
            continue
        k = int(rng.integers(1, max_values + 1))
        if feat.kind == NUMERIC:
            values[feat.name] = [float(x) for x in rng.normal(0, 2, size=k)]
        elif feat.kind == CATEGORICAL:
            values[feat.name] = [CATS[i] for i in rng.integers(0, len(CATS), size=k)]
        else:
            values[feat.name] = [WORDS[i] for i in rng.integers(0, len(WORDS), size=k)]
    return base_record(schema, rid, values)


def random_records(rng, schema, n, **kwargs):
    return [random_record(rng, schema, f"r{i:03d}", **kwargs) for i in range(n)]


def random_model(rng, schema, threshold=None):
    """Model with random weights and identity standardization; handy for
    property tests that need an arbitrary but valid match function."""
    m = 2 * len(schema)
    return MatchModel(
        schema=schema,
        weights=rng.normal(0, 1.5, size=m),
        bias=float(rng.normal(0, 0.5)),
        threshold=float(threshold if threshold is not None
                        else rng.uniform(0.05, 0.95)),
        feature_means=np.zeros(m),
        feature_scales=np.ones(m),
        config=TrainConfig(),
    )
