import json
from dataclasses import replace
from functools import lru_cache
from itertools import product

import numpy as np
import pytest

from erbound.errors import DataError, DegenerateDataError, SchemaError
from erbound.matching import (
    MatchModel,
    TrainConfig,
    base_match,
    condensed_pairwise_scores,
    featurize_pair,
    fit_logistic,
    levenshtein,
    load_model,
    logistic_gradient,
    logistic_loss,
    matcher_from_scores,
    normalized_levenshtein,
    pairwise_scores,
    save_model,
    score_pair,
    train_match_model,
    wrapper_match,
)
from erbound.records import (
    CATEGORICAL,
    NUMERIC,
    TEXT,
    Feature,
    FeatureSchema,
    base_record,
    merge_records,
)

from conftest import random_model, random_record, random_records


def oracle_levenshtein(s, t):
    """Independent memoized-recursion edit distance."""
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        sub = d(i - 1, j - 1) + (s[i - 1] != t[j - 1])
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, sub)
    return d(len(s), len(t))


class TestLevenshtein:
    def test_against_oracle_on_random_strings(self):
        rng = np.random.default_rng(0)
        alphabet = "abcde"
        for _ in range(300):
            s = "".join(rng.choice(list(alphabet), size=rng.integers(0, 8)))
            t = "".join(rng.choice(list(alphabet), size=rng.integers(0, 8)))
            assert levenshtein(s, t) == oracle_levenshtein(s, t)

    def test_partial_name(self):
        # oracle: keep 'j', substitute 'o'->'.', delete 'h', delete 'n'
        assert oracle_levenshtein("john", "j.") == 3
        assert levenshtein("john", "j.") == 3
        assert normalized_levenshtein("john", "j.") == 0.75

    def test_both_empty(self):
        assert normalized_levenshtein("", "") == 0.0

    def test_one_empty(self):
        assert normalized_levenshtein("", "abc") == 1.0


class TestFeaturize:
    def test_shared_phone_slot(self, mixed_schema, canonical_trio):
        r1, r2, _ = canonical_trio
        x = featurize_pair(r1, r2, mixed_schema)
        assert x[mixed_schema.index("phone")] == 1.0

    def test_identity_pair(self, mixed_schema, canonical_trio):
        _, _, r3 = canonical_trio
        x = featurize_pair(r3, r3, mixed_schema)
        n = len(mixed_schema)
        assert x[mixed_schema.index("name1")] == 0.0
        assert x[mixed_schema.index("name2")] == 0.0
        # phone and age are missing on both sides
        assert x[n + mixed_schema.index("phone")] == 1.0
        assert x[n + mixed_schema.index("age")] == 1.0
        assert x[mixed_schema.index("phone")] == 0.0

    def test_missing_side_sets_indicator(self, mixed_schema, canonical_trio):
        r1, _, r3 = canonical_trio
        x = featurize_pair(r1, r3, mixed_schema)
        n = len(mixed_schema)
        assert x[mixed_schema.index("phone")] == 0.0
        assert x[n + mixed_schema.index("phone")] == 1.0

    def test_closest_match_over_value_sets(self):
        schema = FeatureSchema((Feature("v", NUMERIC), Feature("s", TEXT)))
        a = base_record(schema, "a", {"v": [1.0, 5.0], "s": ["john", "alex"]})
        b = base_record(schema, "b", {"v": [4.0], "s": ["jon"]})
        x = featurize_pair(a, b, schema)
        assert x[0] == 1.0  # |5-4|
        assert x[1] == pytest.approx(0.25)  # lev(john, jon)=1 over 4

    def test_symmetry_and_ranges(self, mixed_schema):
        rng = np.random.default_rng(3)
        n = len(mixed_schema)
        for _ in range(200):
            a = random_record(rng, mixed_schema, "a")
            b = random_record(rng, mixed_schema, "b")
            xab = featurize_pair(a, b, mixed_schema)
            xba = featurize_pair(b, a, mixed_schema)
            assert np.array_equal(xab, xba)
            assert len(xab) == 2 * n
            cat = mixed_schema.index("phone")
            assert xab[cat] in (0.0, 1.0)
            for t in ("name1", "name2"):
                assert 0.0 <= xab[mixed_schema.index(t)] <= 1.0
            assert xab[mixed_schema.index("age")] >= 0.0
            assert set(xab[n:]) <= {0.0, 1.0}

    def test_schema_mismatch(self, mixed_schema):
        other = FeatureSchema((Feature("solo", TEXT),))
        a = base_record(mixed_schema, "a", {})
        b = base_record(other, "b", {})
        with pytest.raises(SchemaError):
            featurize_pair(a, b, mixed_schema)


def _separable_pairs(schema, n=60, seed=0):
    """Label equals the categorical-agreement slot: perfectly separable."""
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        label = int(rng.random() < 0.5)
        a = base_record(schema, f"a{i}", {"phone": ["same"] if label else ["x"],
                                          "age": [float(rng.normal())]})
        b = base_record(schema, f"b{i}", {"phone": ["same"] if label else ["y"],
                                          "age": [float(rng.normal())]})
        pairs.append((a, b, label))
    return pairs


def _overlapping_numeric_pairs(n=100, seed=0):
    """Noisy one-feature problem whose optimum has a healthy Hessian."""
    schema = FeatureSchema((Feature("v", NUMERIC),))
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        label = int(rng.random() < 0.5)
        gap = abs(rng.normal(0.3 if label else 0.8, 0.35))
        a = base_record(schema, f"a{i}", {"v": [0.0]})
        b = base_record(schema, f"b{i}", {"v": [float(gap)]})
        pairs.append((a, b, label))
    return schema, pairs


class TestTraining:
    def test_separable_reaches_perfect_accuracy(self, mixed_schema):
        pairs = _separable_pairs(mixed_schema)
        model = train_match_model(pairs, mixed_schema)
        correct = sum(
            (score_pair(model, a, b) >= 0.5) == bool(label) for a, b, label in pairs
        )
        assert correct == len(pairs)

    def test_single_label_rejected(self, mixed_schema):
        pairs = [p for p in _separable_pairs(mixed_schema) if p[2] == 1]
        with pytest.raises(DegenerateDataError):
            train_match_model(pairs, mixed_schema)

    def test_non_finite_feature_rejected(self, mixed_schema):
        pairs = _separable_pairs(mixed_schema, n=10)
        a, b, label = pairs[0]
        bad = replace(a, values=a.values[:3] + (frozenset({float("nan")}),))
        pairs[0] = (bad, b, label)
        with pytest.raises(DataError):
            train_match_model(pairs, mixed_schema)

    def test_bad_label_rejected(self, mixed_schema):
        pairs = _separable_pairs(mixed_schema, n=10)
        a, b, _ = pairs[0]
        pairs[0] = (a, b, 2)
        with pytest.raises(DataError):
            train_match_model(pairs, mixed_schema)

    def test_gradient_near_zero_at_convergence(self):
        schema, pairs = _overlapping_numeric_pairs(n=100)
        config = TrainConfig(epochs=20000, l2=0.01)
        model = train_match_model(pairs, schema, config)
        X = np.stack([featurize_pair(a, b, schema) for a, b, _ in pairs])
        Z = (X - model.feature_means) / model.feature_scales
        y = np.array([l for _, _, l in pairs], dtype=float)
        grad_w, grad_b = logistic_gradient(model.weights, model.bias, Z, y, config.l2)
        assert max(np.abs(grad_w).max(), abs(grad_b)) < 1e-5

    def test_analytic_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 6))
        y = (rng.random(40) < 0.5).astype(float)
        for _ in range(10):
            w = rng.normal(size=6)
            b = float(rng.normal())
            grad_w, grad_b = logistic_gradient(w, b, X, y, l2=0.01)
            eps = 1e-6
            for k in range(6):
                dw = np.zeros(6)
                dw[k] = eps
                num = (logistic_loss(w + dw, b, X, y, 0.01)
                       - logistic_loss(w - dw, b, X, y, 0.01)) / (2 * eps)
                assert num == pytest.approx(grad_w[k], rel=1e-6, abs=1e-9)
            num_b = (logistic_loss(w, b + eps, X, y, 0.01)
                     - logistic_loss(w, b - eps, X, y, 0.01)) / (2 * eps)
            assert num_b == pytest.approx(grad_b, rel=1e-6, abs=1e-9)

    def test_loss_history_non_increasing(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            X = rng.normal(size=(50, 8)) * rng.uniform(0.5, 4.0)
            y = (rng.random(50) < 0.5).astype(float)
            _, _, losses = fit_logistic(X, y, TrainConfig(epochs=300, learning_rate=0.5))
            assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))

    def test_synthetic_validation_accuracy(self):
        from erbound.dataset import SplitSpec, generate_synthetic, split_dataset, synthetic_schema

        records, gold = generate_synthetic(seed=12)
        split = split_dataset(records, gold, SplitSpec(100, 100, seed=12))
        model = train_match_model(split.train_pairs, synthetic_schema(10))
        correct = sum(
            (score_pair(model, a, b) >= 0.5) == bool(label)
            for a, b, label in split.validation_pairs
        )
        assert correct / len(split.validation_pairs) > 0.95


class TestScore:
    def test_zero_model_scores_half(self, mixed_schema):
        rng = np.random.default_rng(1)
        model = random_model(rng, mixed_schema)
        model = replace(model, weights=np.zeros_like(model.weights), bias=0.0)
        a = random_record(rng, mixed_schema, "a")
        b = random_record(rng, mixed_schema, "b")
        assert score_pair(model, a, b) == 0.5

    def test_symmetric(self, mixed_schema):
        rng = np.random.default_rng(2)
        model = random_model(rng, mixed_schema)
        for _ in range(50):
            a = random_record(rng, mixed_schema, "a")
            b = random_record(rng, mixed_schema, "b")
            assert score_pair(model, a, b) == score_pair(model, b, a)

    def test_hand_set_weights_closed_form(self):
        schema = FeatureSchema((Feature("phone", CATEGORICAL),))
        model = MatchModel(
            schema=schema, weights=np.array([2.0, 0.0]), bias=-1.0, threshold=0.5,
            feature_means=np.zeros(2), feature_scales=np.ones(2),
        )
        a = base_record(schema, "a", {"phone": ["555"]})
        b = base_record(schema, "b", {"phone": ["555"]})
        # slot value 1, so sigmoid(2*1 - 1) = 1/(1+e^-1)
        assert score_pair(model, a, b) == pytest.approx(0.7310585786300049, abs=1e-12)


class TestBaseMatch:
    def test_identical_records_match_at_any_threshold(self, mixed_schema, canonical_trio):
        rng = np.random.default_rng(3)
        r1, _, _ = canonical_trio
        for t in (0.01, 0.5, 0.99):
            model = random_model(rng, mixed_schema, threshold=t)
            assert base_match(model, r1, r1)

    def test_thresholding(self, mixed_schema):
        schema = FeatureSchema((Feature("phone", CATEGORICAL),))
        model = MatchModel(
            schema=schema, weights=np.array([2.0, 0.0]), bias=-1.0, threshold=0.5,
            feature_means=np.zeros(2), feature_scales=np.ones(2),
        )
        a = base_record(schema, "a", {"phone": ["555"]})
        b = base_record(schema, "b", {"phone": ["555"]})
        c = base_record(schema, "c", {"phone": ["000"]})
        assert base_match(model, a, b)          # 0.731 >= 0.5
        assert not base_match(model, a, c)      # sigmoid(-1) = 0.269 < 0.5

    def test_commutative_over_random_pairs_and_thresholds(self, mixed_schema):
        rng = np.random.default_rng(4)
        for _ in range(100):
            model = random_model(rng, mixed_schema)
            a = random_record(rng, mixed_schema, "a")
            b = random_record(rng, mixed_schema, "b")
            assert base_match(model, a, b) == base_match(model, b, a)

    def test_raising_threshold_is_monotone(self, mixed_schema):
        rng = np.random.default_rng(5)
        for _ in range(100):
            model = random_model(rng, mixed_schema, threshold=0.3)
            a = random_record(rng, mixed_schema, "a")
            b = random_record(rng, mixed_schema, "b")
            if not base_match(model, a, b):
                assert not base_match(model.with_threshold(0.8), a, b)

    def test_composite_input_rejected(self, mixed_schema, canonical_trio):
        rng = np.random.default_rng(6)
        r1, r2, r3 = canonical_trio
        model = random_model(rng, mixed_schema)
        with pytest.raises(ValueError):
            base_match(model, merge_records(r1, r2), r3)


class TestWrapperMatch:
    def test_merged_pair_rejects_third_when_bases_do(self, mixed_schema, canonical_trio):
        r1, r2, r3 = canonical_trio
        rng = np.random.default_rng(7)
        model = random_model(rng, mixed_schema, threshold=0.999999)
        base = {"r1": r1, "r2": r2, "r3": r3}
        merged = merge_records(r1, r2)
        assert not base_match(model, r1, r3)
        assert not base_match(model, r2, r3)
        assert not wrapper_match(model, merged, r3, base)

    def test_self_match(self, mixed_schema, canonical_trio):
        r1, r2, _ = canonical_trio
        rng = np.random.default_rng(8)
        model = random_model(rng, mixed_schema, threshold=0.99)
        merged = merge_records(r1, r2)
        base = {"r1": r1, "r2": r2}
        assert wrapper_match(model, merged, merged, base)

    def test_equals_cross_product_oracle(self, mixed_schema):
        rng = np.random.default_rng(9)
        for _ in range(50):
            model = random_model(rng, mixed_schema)
            records = random_records(rng, mixed_schema, 6)
            base = {r.record_id: r for r in records}
            o1 = merge_records(merge_records(records[0], records[1]), records[2])
            o2 = merge_records(records[3], merge_records(records[4], records[5]))
            oracle = max(
                base_match(model, base[i], base[j])
                for i, j in product(sorted(o1.base_ids), sorted(o2.base_ids))
            )
            assert wrapper_match(model, o1, o2, base) == bool(oracle)

    def test_reduces_to_base_match_on_base_records(self, mixed_schema):
        rng = np.random.default_rng(10)
        for _ in range(50):
            model = random_model(rng, mixed_schema)
            a = random_record(rng, mixed_schema, "a")
            b = random_record(rng, mixed_schema, "b")
            base = {"a": a, "b": b}
            assert wrapper_match(model, a, b, base) == base_match(model, a, b)

    def test_merging_preserves_matches(self, mixed_schema):
        # if o1 matches o4, then merge(o1, o2) still matches o4
        rng = np.random.default_rng(11)
        hits = 0
        for _ in range(300):
            model = random_model(rng, mixed_schema)
            records = random_records(rng, mixed_schema, 4)
            base = {r.record_id: r for r in records}
            o1, o2, o4 = records[0], records[1], records[3]
            if wrapper_match(model, o1, o4, base):
                hits += 1
                assert wrapper_match(model, merge_records(o1, o2), o4, base)
        assert hits > 10  # the property was actually exercised

    def test_unresolvable_id(self, mixed_schema, canonical_trio):
        r1, r2, _ = canonical_trio
        rng = np.random.default_rng(12)
        model = random_model(rng, mixed_schema)
        with pytest.raises(KeyError):
            wrapper_match(model, r1, r2, {"r1": r1})


class TestBulkScores:
    def test_fast_numeric_path_matches_score_pair(self):
        from erbound.dataset import generate_synthetic, synthetic_schema

        records, _ = generate_synthetic(n_entities=4, records_per_entity=3, seed=3)
        rng = np.random.default_rng(13)
        model = random_model(rng, synthetic_schema(10))
        fast = condensed_pairwise_scores(model, records)
        slow = np.array([
            score_pair(model, records[i], records[j])
            for i in range(len(records)) for j in range(i + 1, len(records))
        ])
        assert np.allclose(fast, slow, atol=1e-12)

    def test_fallback_path_matches_score_pair(self, mixed_schema):
        rng = np.random.default_rng(14)
        model = random_model(rng, mixed_schema)
        records = random_records(rng, mixed_schema, 8)
        fast = condensed_pairwise_scores(model, records)
        slow = np.array([
            score_pair(model, records[i], records[j])
            for i in range(len(records)) for j in range(i + 1, len(records))
        ])
        assert np.array_equal(fast, slow)

    def test_scored_matcher_equals_base_match(self, mixed_schema):
        rng = np.random.default_rng(15)
        model = random_model(rng, mixed_schema)
        records = random_records(rng, mixed_schema, 10)
        table = pairwise_scores(model, records)
        matcher = matcher_from_scores(table, model.threshold)
        for i in range(len(records)):
            for j in range(i + 1, len(records)):
                assert matcher(records[i], records[j]) == \
                    base_match(model, records[i], records[j])


class TestModelIO:
    def test_round_trip(self, tmp_path, mixed_schema):
        rng = np.random.default_rng(16)
        model = random_model(rng, mixed_schema, threshold=0.42)
        path = tmp_path / "model.json"
        save_model(path, model)
        again = load_model(path)
        assert again.schema == model.schema
        assert np.array_equal(again.weights, model.weights)
        assert again.bias == model.bias
        assert again.threshold == model.threshold
        assert np.array_equal(again.feature_means, model.feature_means)
        assert np.array_equal(again.feature_scales, model.feature_scales)

    def test_bad_format_version(self, tmp_path, mixed_schema):
        rng = np.random.default_rng(17)
        model = random_model(rng, mixed_schema)
        doc = model.to_dict()
        doc["format_version"] = 99
        path = tmp_path / "model.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError):
            load_model(path)

    def test_threshold_validation(self, mixed_schema):
        rng = np.random.default_rng(18)
        model = random_model(rng, mixed_schema)
        with pytest.raises(ValueError):
            model.with_threshold(1.0)
        with pytest.raises(ValueError):
            model.with_threshold(0.0)
