"""Acceptance suite: one test per criterion, run standalone on synthetic
data. Each test prints a [PASS] line with its measured numbers; stated
tolerances are pinned in the assertions."""

import json
import time

import numpy as np
import pytest

from layerprobe.bundles import (
    BundleManifest,
    BundleReader,
    BundleTruncatedError,
    BundleVersionError,
    write_bundle,
)
from layerprobe.cli import main
from layerprobe.corpus import gold_distances, parse_conllu, to_conllu
from layerprobe.decode import distance_matrix, prim_mst
from layerprobe.metrics import expected_layer
from layerprobe.probe import (
    ProbeParams,
    TrainConfig,
    gradients,
    load_checkpoint,
    save_checkpoint,
    train_probe,
)
from layerprobe.mdsviz import smacof_mds
from layerprobe.synthetic import emergence_hidden, random_tree, root_path_indicators, stack_layers

from test_decode import brute_force_min_weight, random_symmetric, tree_weight
from test_probe import finite_difference_grads, random_instance, rel_err


def _report(name: str, detail: str = "") -> None:
    print(f"\n[PASS] {name}" + (f": {detail}" if detail else ""))


WIDTH = 11  # indicator width for 12-token sentences


def _indicator_item(rng, lo=6, hi=13):
    sent = random_tree(int(rng.integers(lo, hi)), rng)
    hidden = stack_layers(root_path_indicators(sent, WIDTH), 1)
    return sent, hidden, gold_distances(sent).astype(np.float64)


class TestCriterion1SyntheticOracleUUAS:
    def test_identity_probe_decodes_gold_exactly(self):
        rng = np.random.default_rng(100)
        identity = ProbeParams(0, np.zeros(1), 1.0, np.eye(WIDTH))
        perfect = 0
        for _ in range(100):
            sent, hidden, _ = _indicator_item(rng)
            tree = prim_mst(distance_matrix(identity, hidden))
            if tree == sent.edges():
                perfect += 1
        assert perfect == 100
        _report("synthetic-oracle UUAS (identity probe)", "gold tree recovered 100/100, UUAS 1.0")

    def test_training_reaches_095_within_40_epochs(self):
        start = time.monotonic()
        rng = np.random.default_rng(101)
        train_items = [(_indicator_item(rng))[1:] for _ in range(500)]
        dev_items = [(_indicator_item(rng))[1:] for _ in range(50)]
        held_out = [_indicator_item(rng) for _ in range(100)]

        result = train_probe(0, train_items, dev_items, TrainConfig(epochs=40, seed=0))
        correct = total = 0
        for sent, hidden, _ in held_out:
            tree = prim_mst(distance_matrix(result.params, hidden))
            correct += len(tree & sent.edges())
            total += len(sent.edges())
        uuas = correct / total
        elapsed = time.monotonic() - start
        assert uuas >= 0.95
        assert elapsed < 120.0
        _report(
            "synthetic-oracle UUAS (trained probe)",
            f"held-out global UUAS {uuas:.4f} >= 0.95 in {elapsed:.1f}s < 120s",
        )


class TestCriterion2GradientCorrectness:
    def test_analytic_matches_central_differences(self):
        rng = np.random.default_rng(202)
        worst = 0.0
        for _ in range(50):
            layer = int(rng.integers(0, 3))
            T = int(rng.integers(3, 7))
            d = int(rng.integers(3, 6))
            params, hidden, gold = random_instance(rng, layer=layer, T=T, d=d)
            batch = [(hidden, gold)]
            g = gradients(params, batch)
            fd_proj, fd_mix, fd_gamma = finite_difference_grads(params, batch, step=1e-4)
            err = max(
                rel_err(g.d_proj, fd_proj),
                rel_err(g.d_mix_logits, fd_mix),
                rel_err(np.array([g.d_gamma]), np.array([fd_gamma])),
            )
            worst = max(worst, err)
            assert err <= 1e-4
        _report("gradient correctness", f"50 instances, max relative error {worst:.2e} <= 1e-4")


class TestCriterion3MSTOracle:
    def test_prim_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(303)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            D = random_symmetric(rng, n)
            tree = prim_mst(D)
            assert np.isclose(tree_weight(D, tree), brute_force_min_weight(D), rtol=1e-12)
            # monotone-transform invariance on the same instance
            transformed = np.expm1(D) + D**3
            np.fill_diagonal(transformed, 0.0)
            assert prim_mst(transformed) == tree
        _report("MST oracle", "100/100 instances match exhaustive minimum; monotone invariance holds")


class TestCriterion4ExpectedLayerOracle:
    def test_hand_cases_and_shift_invariance(self):
        single = expected_layer([0.0, 1.0])
        assert single.valid and single.value == 1.0
        hand = expected_layer([0.2, 0.5, 0.6])
        assert hand.valid and np.isclose(hand.value, 1.25)
        flat = expected_layer([0.3, 0.3, 0.3, 0.3])
        assert not flat.valid

        rng = np.random.default_rng(404)
        checked = 0
        for _ in range(100):
            scores = rng.uniform(0, 1, size=int(rng.integers(2, 14)))
            shift = float(rng.uniform(-3, 3))
            base = expected_layer(scores)
            shifted = expected_layer(scores + shift)
            if base.valid:
                assert shifted.valid
                assert np.isclose(base.value, shifted.value, rtol=1e-7, atol=1e-7)
                checked += 1
        assert checked > 90
        _report(
            "expected-layer oracle",
            f"S=(0,1)->1, S=(0.2,0.5,0.6)->1.25, flat invalid; shift invariance on {checked} series",
        )


class TestCriterion5LayeredEmergence:
    def test_pipeline_reports_micro_before_macro(self, tmp_path):
        start = time.monotonic()
        from layerprobe.templates import generate_agreement_pairs

        pairs = generate_agreement_pairs(300, seed=4)
        sents = [p.gold for p in pairs]
        width = max(len(s) for s in sents) - 1

        treebank = tmp_path / "treebank.conllu"
        treebank.write_text("".join(to_conllu(s) + "\n" for s in sents), encoding="utf-8")
        config = {
            "paths": {
                "treebank": str(treebank),
                "bundle": str(tmp_path / "bundle.bin"),
                "output_dir": str(tmp_path / "out"),
            },
            "split": {"train": 220, "dev": 40, "test": 40, "seed": 0},
            "train": {"epochs": 40, "seed": 0},
            "seeds": [0],
            "reports": {"svg": False, "include_global": True},
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))

        assert main(["prepare", "--config", str(config_path)]) == 0

        # 4-layer bundle: micro structure injected from layer 1, the full
        # gold tree only at layer 3 (layer 0 scrambled)
        retained = parse_conllu(
            (tmp_path / "out" / "prepared" / "retained.conllu").read_text()
        ).sentences
        rng = np.random.default_rng(11)
        manifest = BundleManifest("emergence-fixture", 3, 3 * width)
        write_bundle(
            tmp_path / "bundle.bin",
            manifest,
            [(s.id, emergence_hidden(s, rng, width, layer_trees=(0, 1, 1, 2))) for s in retained],
        )

        assert main(["train", "--config", str(config_path)]) == 0
        assert main(["evaluate", "--config", str(config_path)]) == 0

        report = json.loads((tmp_path / "out" / "reports" / "expected_layers.json").read_text())
        rows = {(r["group"], r["category"]): r for r in report["rows"]}
        micro = rows[("dobj+nsubj", "micro(nsubj)")]["e_mean"]
        macro = rows[("dobj+nsubj", "macro")]["e_mean"]
        elapsed = time.monotonic() - start
        assert micro is not None and macro is not None
        assert micro < macro
        assert macro - micro >= 1.0
        assert elapsed < 300.0
        _report(
            "layered emergence end-to-end",
            f"E[micro(nsubj)]={micro:.2f} < E[macro]={macro:.2f}, gap {macro - micro:.2f} >= 1.0, "
            f"{elapsed:.1f}s < 300s",
        )


class TestCriterion6Smacof:
    def test_stress_monotone_and_planted_recovery(self):
        rng = np.random.default_rng(606)
        for _ in range(50):
            T = int(rng.integers(3, 15))
            d = int(rng.integers(2, 8))
            points = rng.standard_normal((T, d)) * rng.uniform(0.5, 3.0)
            result = smacof_mds(points, seed=int(rng.integers(0, 1000)))
            hist = np.asarray(result.stress_history)
            assert np.all(hist[1:] <= hist[:-1] * (1 + 1e-12) + 1e-15)

        worst = 0.0
        for trial in range(10):
            planted = rng.uniform(-2, 2, size=(int(rng.integers(4, 10)), 2))
            result = smacof_mds(planted, seed=trial)

            def pd(X):
                diff = X[:, None, :] - X[None, :, :]
                return np.sqrt((diff * diff).sum(-1))

            err = np.max(np.abs(pd(result.coords) - pd(planted)))
            worst = max(worst, err)
            assert err <= 1e-3
        _report(
            "SMACOF",
            f"stress non-increasing on 50/50 instances; planted 2-D recovery error {worst:.2e} <= 1e-3",
        )


class TestCriterion7Formats:
    def test_bundle_and_checkpoint_contracts(self, tmp_path):
        rng = np.random.default_rng(707)
        # bundle round-trip, bitwise
        tensors = [(f"s{i}", rng.standard_normal((3, 4, 5)).astype(np.float32)) for i in range(4)]
        bundle_path = tmp_path / "bundle.bin"
        write_bundle(bundle_path, BundleManifest("fmt", 2, 5), tensors)
        reader = BundleReader(bundle_path)
        for sid, arr in tensors:
            assert np.array_equal(reader.get(sid).view(np.uint32), arr.view(np.uint32))
        reader.close()

        # truncation
        raw = bundle_path.read_bytes()
        (tmp_path / "trunc.bin").write_bytes(raw[:-10])
        with pytest.raises(BundleTruncatedError, match="expected"):
            BundleReader(tmp_path / "trunc.bin")

        # version mismatch
        flipped = bytearray(raw)
        flipped[:8] = b"DPROBE09"
        (tmp_path / "ver.bin").write_bytes(bytes(flipped))
        with pytest.raises(BundleVersionError, match="DPROBE09"):
            BundleReader(tmp_path / "ver.bin")

        # checkpoint round-trip, bitwise
        params = ProbeParams(
            3, rng.standard_normal(4).astype(np.float32), 0.73, rng.standard_normal((6, 8)).astype(np.float32)
        )
        ckpt = tmp_path / "p.ckpt"
        save_checkpoint(ckpt, params, seed=1, config_hash="h")
        loaded, _ = load_checkpoint(ckpt)
        assert np.array_equal(loaded.proj.view(np.uint32), params.proj.view(np.uint32))
        assert np.array_equal(loaded.mix_logits.view(np.uint32), params.mix_logits.view(np.uint32))
        assert np.float32(loaded.gamma).view(np.uint32) == np.float32(params.gamma).view(np.uint32)

        ckpt_raw = ckpt.read_bytes()
        (tmp_path / "ckpt_trunc.ckpt").write_bytes(ckpt_raw[:-3])
        with pytest.raises(BundleTruncatedError):
            load_checkpoint(tmp_path / "ckpt_trunc.ckpt")
        flipped = bytearray(ckpt_raw)
        flipped[:8] = b"DPCKPT77"
        (tmp_path / "ckpt_ver.ckpt").write_bytes(bytes(flipped))
        with pytest.raises(BundleVersionError):
            load_checkpoint(tmp_path / "ckpt_ver.ckpt")
        _report(
            "format round-trips",
            "bundle and checkpoint bitwise-exact; truncation and version mismatch raise the specified errors",
        )
