#!/usr/bin/env python3
"""Train a single distance probe on root-path indicator embeddings and
print the loss curve plus held-out tree recovery.

Usage: python scripts/train_probe_demo.py [n_train] [seed]
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from layerprobe.corpus import gold_distances
from layerprobe.decode import distance_matrix, prim_mst
from layerprobe.probe import TrainConfig, train_probe
from layerprobe.synthetic import random_tree, root_path_indicators, stack_layers

WIDTH = 11


def make_items(rng, n):
    out = []
    for _ in range(n):
        sent = random_tree(int(rng.integers(6, 13)), rng)
        hidden = stack_layers(root_path_indicators(sent, WIDTH), 1)
        out.append((sent, hidden, gold_distances(sent).astype(np.float64)))
    return out


def run(n_train: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    train = [(h, g) for _, h, g in make_items(rng, n_train)]
    dev = [(h, g) for _, h, g in make_items(rng, max(n_train // 10, 8))]
    held_out = make_items(rng, 100)

    result = train_probe(0, train, dev, TrainConfig(seed=seed))
    for stats in result.history:
        marker = " (lr cut)" if stats.lr_reduced else ""
        print(f"epoch {stats.epoch:>3}  train {stats.train_loss:.4f}  dev {stats.dev_loss:.4f}{marker}")

    correct = total = 0
    for sent, hidden, _ in held_out:
        tree = prim_mst(distance_matrix(result.params, hidden))
        correct += len(tree & sent.edges())
        total += len(sent.edges())
    print(f"\nbest epoch {result.best_epoch}; held-out global UUAS {correct / total:.4f}")


if __name__ == "__main__":
    run(
        int(sys.argv[1]) if len(sys.argv) > 1 else 500,
        int(sys.argv[2]) if len(sys.argv) > 2 else 0,
    )
