"""Synthetic sentences and embeddings with known layer-wise structure.

Root-path edge-indicator vectors give each token one coordinate per gold
edge, set to 1 on the edges of its path to the root; then
||h_i - h_j||_2 = sqrt(path length), strictly monotone in the tree
distance, so an identity probe decodes the gold tree exactly. Stacking
indicator blocks of different trees at different layers yields bundles
where chosen subgraphs become linearly decodable at chosen layers.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence

import numpy as np

from .corpus import DepSentence


def random_tree(n: int, rng: np.random.Generator, sent_id: str = "synth") -> DepSentence:
    """Uniform random attachment tree over ``n`` tokens."""
    if n < 2:
        raise ValueError("need at least 2 tokens")
    order = rng.permutation(n)
    heads = [0] * n
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        heads[order[k]] = int(parent) + 1
    rels = ["root" if h == 0 else "mod" for h in heads]
    tokens = [f"w{i + 1}" for i in range(n)]
    sent = DepSentence(sent_id, tuple(tokens), tuple(heads), tuple(rels))
    sent.validate()
    return sent


def root_path_indicators(sent: DepSentence, width: int | None = None) -> np.ndarray:
    """(T, width) float32 matrix of root-path edge indicators.

    Edge coordinates follow the sorted order of the gold edge set; ``width``
    pads with zero columns (default: exactly n-1 columns).
    """
    edges = sorted(sent.edges())
    index = {e: i for i, e in enumerate(edges)}
    n = len(sent)
    width = len(edges) if width is None else width
    if width < len(edges):
        raise ValueError(f"width {width} < {len(edges)} edges")
    out = np.zeros((n, width), dtype=np.float32)
    for tok in range(n):
        cur = tok
        while sent.heads[cur] != 0:
            head = sent.heads[cur] - 1
            out[tok, index[(min(cur, head), max(cur, head))]] = 1.0
            cur = head
    return out


def stack_layers(token_vectors: np.ndarray, n_slices: int) -> np.ndarray:
    """Repeat (T, d) vectors into an (n_slices, T, d) hidden stack."""
    return np.repeat(token_vectors[None, :, :], n_slices, axis=0)


def scrambled_chain(sent: DepSentence, rng: np.random.Generator) -> DepSentence:
    """A chain tree over a random token permutation (structure destroyed)."""
    n = len(sent)
    order = rng.permutation(n)
    heads = [0] * n
    for k in range(1, n):
        heads[order[k]] = int(order[k - 1]) + 1
    rels = ["root" if h == 0 else "mod" for h in heads]
    return DepSentence(sent.id, sent.tokens, tuple(heads), tuple(rels))


def _depths_within(sent: DepSentence, head: int) -> dict[int, int]:
    depths = {head: 0}
    queue = deque([head])
    while queue:
        cur = queue.popleft()
        for child in sent.children(cur):
            if child not in depths:
                depths[child] = depths[cur] + 1
                queue.append(child)
    return depths


def micro_correct_macro_wrong(sent: DepSentence) -> DepSentence:
    """Rewire the root attachments while keeping every dependent's subtree.

    The root's children are chained through the deepest leaves of each
    other's subtrees and the root itself becomes a leaf, so no (root,
    dependent) edge survives while all subtree-internal edges do.
    """
    root = sent.root
    children = sent.children(root)
    heads = list(sent.heads)
    prev_anchor: int | None = None
    for child in children:
        if prev_anchor is None:
            heads[child] = 0  # first dependent becomes the new root
        else:
            heads[child] = prev_anchor + 1
        depths = _depths_within(sent, child)
        deepest = max(depths.values())
        prev_anchor = min(p for p, d in depths.items() if d == deepest)
    heads[root] = prev_anchor + 1
    rels = ["root" if h == 0 else "mod" for h in heads]
    out = DepSentence(sent.id, sent.tokens, tuple(heads), tuple(rels))
    out.validate()
    return out


def emergence_hidden(
    sent: DepSentence,
    rng: np.random.Generator,
    block_width: int,
    layer_trees: Sequence[int] = (0, 1, 1, 2),
) -> np.ndarray:
    """Hidden stack whose layer k exposes the indicator block of one tree.

    ``layer_trees[k]`` selects, per layer, tree 0 (scrambled chain),
    1 (micro-correct / macro-rewired), or 2 (gold). Blocks occupy disjoint
    coordinate ranges so a linear probe can isolate any exposed tree.
    """
    trees = [scrambled_chain(sent, rng), micro_correct_macro_wrong(sent), sent]
    blocks = [root_path_indicators(t, block_width) for t in trees]
    T = len(sent)
    d = 3 * block_width
    hidden = np.zeros((len(layer_trees), T, d), dtype=np.float32)
    for layer, tree_idx in enumerate(layer_trees):
        start = tree_idx * block_width
        hidden[layer, :, start : start + block_width] = blocks[tree_idx]
    return hidden
