import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerprobe.corpus import GLOBAL, MACRO
from layerprobe.decode import prim_mst, subgraph_uuas, uuas
from layerprobe.metrics import (
    MetricsError,
    agreement_split_analysis,
    expected_layer,
    layer_scores,
    predicted_trees,
    structure_set_report,
)
from layerprobe.probe import ProbeParams
from layerprobe.synthetic import random_tree, root_path_indicators, stack_layers
from layerprobe.templates import generate_agreement_pairs


def identity_probes(n_layers, dim):
    """Probe per layer that reads indicator embeddings perfectly."""
    return [ProbeParams(l, np.zeros(l + 1), 1.0, np.eye(dim)) for l in range(n_layers + 1)]


def indicator_items(rng, n_sentences, n_layers, width=9, tokens=(4, 9)):
    items = []
    for _ in range(n_sentences):
        sent = random_tree(int(rng.integers(*tokens)), rng)
        items.append((sent, stack_layers(root_path_indicators(sent, width), n_layers + 1)))
    return items


class TestExpectedLayer:
    def test_single_step(self):
        res = expected_layer([0.0, 1.0])
        assert res.valid and res.value == 1.0

    def test_hand_case(self):
        res = expected_layer([0.2, 0.5, 0.6])
        assert np.allclose(res.deltas, [0.3, 0.1])
        assert np.isclose(res.value, 1.25)

    def test_flat_series_invalid(self):
        res = expected_layer([0.4, 0.4, 0.4])
        assert not res.valid
        assert np.isnan(res.value)
        assert res.denominator == 0.0

    def test_negative_deltas_used_raw(self):
        res = expected_layer([0.0, 0.6, 0.4])
        # deltas (0.6, -0.2), denominator 0.4
        assert np.isclose(res.value, (0.6 * 1 - 0.2 * 2) / 0.4)

    def test_clamped_variant(self):
        res = expected_layer([0.0, 0.6, 0.4], clamp_negative=True)
        assert np.isclose(res.value, 1.0)

    def test_too_short_errors(self):
        with pytest.raises(MetricsError):
            expected_layer([1.0])

    @given(st.lists(st.floats(0, 1, allow_nan=False), min_size=2, max_size=13), st.floats(-5, 5))
    @settings(max_examples=80)
    def test_constant_shift_invariance(self, scores, shift):
        base = expected_layer(scores)
        shifted = expected_layer([s + shift for s in scores])
        assert base.valid == shifted.valid or abs(base.denominator) < 1e-12
        if base.valid and shifted.valid:
            assert np.isclose(base.value, shifted.value, rtol=1e-6, atol=1e-6)

    @given(st.lists(st.floats(0.01, 0.99), min_size=3, max_size=10))
    @settings(max_examples=60)
    def test_nondecreasing_series_bounded(self, raw):
        scores = np.cumsum(np.abs(raw))
        scores = scores / (scores[-1] + 1.0)  # strictly increasing in [0,1)
        res = expected_layer(scores)
        L = len(scores) - 1
        assert res.valid
        assert 1.0 - 1e-9 <= res.value <= L + 1e-9
        if L >= 2:
            assert res.value < L  # strict interiorness with >=2 positive deltas
            assert res.value > 1.0

    def test_concatenation_is_delta_weighted_average(self, rng):
        scores = rng.uniform(0, 1, size=9)
        k = 4
        full = expected_layer(scores)
        den_a = scores[k] - scores[0]
        den_b = scores[-1] - scores[k]
        if abs(den_a) < 1e-9 or abs(den_b) < 1e-9 or not full.valid:
            pytest.skip("degenerate draw")
        e_a = expected_layer(scores[: k + 1])
        # segment B's layer indices continue from k+1
        deltas_b = np.diff(scores[k:])
        e_b = float((np.arange(k + 1, 9) * deltas_b).sum() / deltas_b.sum())
        combined = (den_a * e_a.value + den_b * e_b) / (den_a + den_b)
        assert np.isclose(full.value, combined, rtol=1e-9)


class TestLayerScores:
    def test_perfect_probes_all_ones(self, rng):
        items = indicator_items(rng, 5, n_layers=2)
        probes = identity_probes(2, 9)
        series = layer_scores(probes, items, GLOBAL)
        assert np.allclose(series.scores, 1.0)

    def test_single_sentence_global_equals_tree_uuas(self, rng):
        items = indicator_items(rng, 1, n_layers=0)
        probes = identity_probes(0, 9)
        series = layer_scores(probes, items, GLOBAL)
        sent, hidden = items[0]
        from layerprobe.decode import distance_matrix

        tree = prim_mst(distance_matrix(probes[0], hidden[:1]))
        expected = uuas(tree, sent.edges())
        assert series.scores[0] == expected.correct / expected.total

    def test_matches_recomputation_from_persisted_trees(self, rng):
        items = indicator_items(rng, 4, n_layers=1)
        probes = identity_probes(1, 9)
        trees = predicted_trees(probes, items)
        series = layer_scores(probes, items, MACRO, trees=trees)
        for layer, layer_trees in enumerate(trees):
            from layerprobe.corpus import extract_subgraph_edges

            counts = [
                subgraph_uuas(t, extract_subgraph_edges(s, MACRO))
                for t, (s, _) in zip(layer_trees, items)
            ]
            recomputed = sum(c.correct for c in counts) / sum(c.total for c in counts)
            assert series.scores[layer] == recomputed

    def test_empty_items_error(self, rng):
        with pytest.raises(MetricsError, match="empty"):
            layer_scores(identity_probes(0, 4), [], GLOBAL)

    def test_probe_order_enforced(self, rng):
        items = indicator_items(rng, 2, n_layers=1)
        probes = list(reversed(identity_probes(1, 9)))
        with pytest.raises(MetricsError, match="order"):
            layer_scores(probes, items, GLOBAL)


class TestStructureSetReport:
    def _setup(self, rng, seeds=(0,)):
        # template items carry nsubj/dobj structure with known keys
        pairs = generate_agreement_pairs(4, seed=3)
        sents = [p.gold for p in pairs]
        width = max(len(s) for s in sents) - 1
        items = [(s, stack_layers(root_path_indicators(s, width), 3)) for s in sents]
        from layerprobe.corpus import structure_key

        groups = {structure_key(sents[0]): items}
        probes_by_seed = {seed: identity_probes(2, width) for seed in seeds}
        return groups, probes_by_seed

    def test_single_seed_zero_std(self, rng):
        groups, probes = self._setup(rng)
        rows = structure_set_report(groups, probes)
        for row in rows:
            assert row.n_seeds == 1
            if row.n_valid:
                assert row.e_std == 0.0

    def test_identical_probes_across_seeds_identical_rows(self, rng):
        groups, probes = self._setup(rng, seeds=(0, 1, 2))
        rows = structure_set_report(groups, probes)
        for row in rows:
            vals = [v for v in row.per_seed if not np.isnan(v)]
            if vals:
                assert len(set(vals)) == 1
                assert row.e_std == 0.0

    def test_invalid_entries_reported_not_dropped(self, rng):
        # perfect probes at every layer give flat series => invalid E
        groups, probes = self._setup(rng)
        rows = structure_set_report(groups, probes)
        assert rows, "report must contain rows"
        for row in rows:
            assert row.n_valid == 0  # flat perfect series are invalid
            assert np.isnan(row.e_mean)
            assert len(row.per_seed) == row.n_seeds

    def test_categories_cover_macro_and_micros(self, rng):
        groups, probes = self._setup(rng)
        rows = structure_set_report(groups, probes)
        names = {r.category.name for r in rows}
        assert "macro" in names
        assert "micro(nsubj)" in names and "micro(dobj)" in names


class TestAgreementSplit:
    def _items(self, n, rng, n_layers=1):
        pairs = generate_agreement_pairs(n, seed=9)
        width = max(len(p.gold) for p in pairs) - 1
        embeddings = {
            p.id: stack_layers(root_path_indicators(p.gold, width), n_layers + 1) for p in pairs
        }
        probes = {0: identity_probes(n_layers, width)}
        return pairs, embeddings, probes

    def test_all_correct_gives_empty_failure(self, rng):
        items, embeddings, probes = self._items(5, rng)
        for it in items:
            it.pll_grammatical = -10.0
            it.pll_ungrammatical = -12.0
        analysis = agreement_split_analysis(items, probes, embeddings)
        assert analysis.failure.n_items == 0
        assert analysis.success.n_items == 5
        assert analysis.accuracy == 1.0

    def test_counts_sum_to_total(self, rng):
        items, embeddings, probes = self._items(8, rng)
        for k, it in enumerate(items):
            it.pll_grammatical = -10.0
            it.pll_ungrammatical = -10.0 + (k % 3 - 1)  # mix of >, <, ==
        analysis = agreement_split_analysis(items, probes, embeddings)
        assert analysis.success.n_items + analysis.failure.n_items == 8
        assert analysis.n_ties == len([k for k in range(8) if k % 3 == 1])

    def test_tie_policy(self, rng):
        items, embeddings, probes = self._items(2, rng)
        for it in items:
            it.pll_grammatical = it.pll_ungrammatical = -5.0
        failure = agreement_split_analysis(items, probes, embeddings, tie_policy="failure")
        success = agreement_split_analysis(items, probes, embeddings, tie_policy="success")
        assert failure.failure.n_items == 2 and failure.n_ties == 2
        assert success.success.n_items == 2

    def test_missing_pll_rejected(self, rng):
        items, embeddings, probes = self._items(2, rng)
        with pytest.raises(MetricsError, match="PLL"):
            agreement_split_analysis(items, probes, embeddings)
