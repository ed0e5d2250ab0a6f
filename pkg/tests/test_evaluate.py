"""AUC vs pairwise oracle, RelaImpr table, similarity report, ablations."""

import numpy as np
import pytest

import clickgraph as cg
from clickgraph.datagen import GenConfig, generate_labeled_samples, generate_log
from clickgraph.embed_learn import EmbeddingTable
from clickgraph.errors import ContractViolation, MetricUndefinedError
from clickgraph.evaluate import (
    auc,
    category_similarity_report,
    dnn_pooling_baseline,
    evaluate_model,
    relaimpr,
    run_ablations,
    train_dnn_pooling,
)

from conftest import click, query, make_sample


def auc_bruteforce(scores):
    """Independent O(n^2) oracle: count pairwise wins, ties worth 0.5."""
    pos = [s for s, y in scores if y == 1]
    neg = [s for s, y in scores if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_perfect_separation(self):
        scores = [(0.9, 1), (0.8, 1), (0.2, 0), (0.1, 0)]
        assert auc(scores) == 1.0

    def test_all_ties_is_half(self):
        scores = [(0.5, 1), (0.5, 0), (0.5, 1), (0.5, 0)]
        assert auc(scores) == 0.5

    def test_reversed_is_zero(self):
        assert auc([(0.1, 1), (0.9, 0)]) == 0.0

    def test_single_class_rejected(self):
        with pytest.raises(MetricUndefinedError):
            auc([(0.5, 1), (0.6, 1)])
        with pytest.raises(MetricUndefinedError):
            auc([])

    def test_matches_bruteforce_exactly(self, rng):
        for trial in range(100):
            n = int(rng.integers(2, 500))
            # quantized scores force plenty of ties
            scores = [(float(np.round(rng.random(), 2)), int(rng.integers(2)))
                      for _ in range(n)]
            labels = {y for _, y in scores}
            if labels != {0, 1}:
                continue
            assert auc(scores) == auc_bruteforce(scores), f"trial {trial}"

    def test_invariant_under_monotone_transform(self, rng):
        scores = [(float(rng.random()), int(rng.integers(2))) for _ in range(200)]
        if {y for _, y in scores} != {0, 1}:
            scores += [(0.5, 0), (0.5, 1)]
        transformed = [(np.exp(3 * s + 1), y) for s, y in scores]
        assert auc(scores) == pytest.approx(auc(transformed), abs=1e-12)


class TestRelaImpr:
    # every derivable row of the published comparison tables
    @pytest.mark.parametrize("model,base,expected", [
        (0.8709, 0.8715, -0.16),
        (0.8715, 0.8715, 0.00),
        (0.8833, 0.8715, 3.18),
        (0.9040, 0.8715, 8.75),
        (0.9184, 0.8715, 12.62),
        (0.7011, 0.7017, -0.30),
        (0.7017, 0.7017, 0.00),
        (0.7022, 0.7017, 0.25),
        (0.7042, 0.7017, 1.24),
        (0.7079, 0.7017, 3.07),
        (0.7108, 0.7017, 4.51),
    ])
    def test_published_rows(self, model, base, expected):
        assert relaimpr(model, base) == pytest.approx(expected, abs=0.01)

    def test_equal_inputs_zero(self, rng):
        for _ in range(20):
            x = float(rng.uniform(0.51, 0.99))
            assert relaimpr(x, x) == pytest.approx(0.0, abs=1e-12)

    def test_base_at_or_below_half_rejected(self):
        with pytest.raises(MetricUndefinedError):
            relaimpr(0.7, 0.5)
        with pytest.raises(MetricUndefinedError):
            relaimpr(0.7, 0.49)


class TestCategorySimilarity:
    def test_identical_embeddings_give_ones(self, rng):
        table = EmbeddingTable("item", dim=4, seed=0)
        for i in range(20):
            table.set_vector(i, np.ones(4))
        categories = {i: i % 4 for i in range(20)}
        intra, inter = category_similarity_report(table, categories, 500, rng)
        assert intra == pytest.approx(1.0)
        assert inter == pytest.approx(1.0)

    def test_orthogonal_one_hot_categories(self, rng):
        table = EmbeddingTable("item", dim=4, seed=0)
        categories = {}
        for i in range(40):
            cat = i % 4
            vec = np.zeros(4)
            vec[cat] = 1.0
            table.set_vector(i, vec)
            categories[i] = cat
        intra, inter = category_similarity_report(table, categories, 2000, rng)
        assert intra == pytest.approx(1.0)
        assert inter == pytest.approx(0.0)

    def test_scale_invariance(self, rng):
        table_a = EmbeddingTable("item", dim=6, seed=1)
        table_b = EmbeddingTable("item", dim=6, seed=1)
        categories = {i: i % 3 for i in range(30)}
        for i in range(30):
            table_b.set_vector(i, 5.0 * table_a.lookup(i))
        a = category_similarity_report(table_a, categories, 1000,
                                       np.random.default_rng(4))
        b = category_similarity_report(table_b, categories, 1000,
                                       np.random.default_rng(4))
        assert a == pytest.approx(b, abs=1e-12)

    def test_insufficient_structure_rejected(self, rng):
        table = EmbeddingTable("item", dim=4, seed=0)
        table.set_vector(0, np.ones(4))
        table.set_vector(1, np.ones(4))
        with pytest.raises(MetricUndefinedError):
            category_similarity_report(table, {0: 0, 1: 1}, 10, rng)


def tiny_cfg(**overrides):
    base = dict(seed=5, num_users=150, num_items=90, num_queries=72,
                num_categories=6, items_per_category=15, clusters_per_category=2,
                batch_size=64, epochs=1)
    base.update(overrides)
    return cg.RunConfig(**base)


def tiny_dataset(cfg):
    gen = GenConfig.from_run_config(cfg)
    samples = generate_labeled_samples(gen, generate_log(gen),
                                       l_click=cfg.l_click, l_query=cfg.l_query)
    cut = int(len(samples) * 0.8)
    if cut % 2:  # keep (pos, neg) pairs together
        cut += 1
    return samples[:cut], samples[cut:]


class TestBaseline:
    def test_empty_click_sequence_pools_to_zero(self):
        cfg = tiny_cfg()
        train_split, _ = tiny_dataset(cfg)
        model = train_dnn_pooling(train_split, [], cfg)
        sample = make_sample([], [query(5, 1)], target=click(3, 100),
                             current_query=query(5, 50))
        from clickgraph.evaluate import _baseline_inputs
        X = _baseline_inputs([sample], model.item_table, model.query_table)
        np.testing.assert_array_equal(X[0, :cfg.dim], np.zeros(cfg.dim))

    def test_learns_above_chance(self):
        cfg = tiny_cfg(num_users=400, epochs=2)
        train_split, valid_split = tiny_dataset(cfg)
        report = dnn_pooling_baseline(train_split, valid_split, cfg)
        assert report.auc > 0.5
        assert report.n_pos == report.n_neg

    def test_report_counts(self):
        cfg = tiny_cfg()
        train_split, valid_split = tiny_dataset(cfg)
        report = dnn_pooling_baseline(train_split, valid_split, cfg)
        assert report.n_pos + report.n_neg == len(valid_split)


class TestEvaluateModel:
    def test_report_shape(self):
        cfg = tiny_cfg()
        train_split, valid_split = tiny_dataset(cfg)
        result = cg.train(train_split, [], cfg)
        report = evaluate_model(result, valid_split)
        assert 0.0 <= report.auc <= 1.0
        assert report.n_pos + report.n_neg == len(valid_split)
        assert "auc=" in report.to_text()


class TestAblations:
    def test_table_and_flag_contracts(self):
        cfg = tiny_cfg()
        train_split, valid_split = tiny_dataset(cfg)
        report = run_ablations(cfg, train_split, valid_split)
        table = report.ablation_table
        assert set(table) == {"full", "no_graph", "no_query", "no_pos_emb",
                              "dnn_pooling"}
        assert all(0.0 <= v <= 1.0 for v in table.values())
        text = report.to_text()
        assert "no_graph" in text and "diff%" in text

    def test_no_valid_split_rejected(self):
        cfg = tiny_cfg()
        train_split, _ = tiny_dataset(cfg)
        with pytest.raises(ContractViolation):
            run_ablations(cfg, train_split, [])

    def test_no_graph_variant_freezes_graph_tables(self):
        import dataclasses
        cfg = dataclasses.replace(tiny_cfg(), use_graph=False,
                                  alpha=0.0, beta=0.0, gamma=0.0, lr_graph=0.0)
        train_split, valid_split = tiny_dataset(cfg)
        result = cg.train(train_split, valid_split, cfg)
        for name in ("item", "query"):
            table = result.tables[name]
            for entity_id, vector in table.items():
                np.testing.assert_array_equal(vector, table.init_vector(entity_id))

    def test_no_pos_emb_variant_is_permutation_invariant(self, rng):
        import copy
        import dataclasses

        from clickgraph.ctr_net import predict, prepare_samples

        cfg = dataclasses.replace(tiny_cfg(), use_pos_emb=False)
        train_split, valid_split = tiny_dataset(cfg)
        result = cg.train(train_split, valid_split, cfg)
        sample = prepare_samples(valid_split[:1], cfg)[0]
        base = predict([sample], result.tables, result.mlp, result.scheme,
                       cfg.k, cfg.use_query)[0]
        shuffled = copy.copy(sample)
        shuffled.click_seq = [sample.click_seq[i]
                              for i in rng.permutation(len(sample.click_seq))]
        got = predict([shuffled], result.tables, result.mlp, result.scheme,
                      cfg.k, cfg.use_query)[0]
        assert got == pytest.approx(base, abs=1e-12)
