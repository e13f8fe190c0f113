"""Tree decoding from probe distances and undirected attachment scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import SubgraphEdges
from .probe import ProbeParams, mix_embeddings


class DecodeError(ValueError):
    pass


def distance_matrix(params: ProbeParams, hidden: np.ndarray) -> np.ndarray:
    """Pairwise predicted distances for one sentence; exactly symmetric,
    zero diagonal."""
    mixed = mix_embeddings(params, hidden)
    proj = np.asarray(mixed, dtype=np.float64) @ params.proj.astype(np.float64).T
    diff = proj[:, None, :] - proj[None, :, :]
    D = np.sqrt((diff * diff).sum(axis=-1))
    np.fill_diagonal(D, 0.0)
    return D


def prim_mst(D: np.ndarray) -> frozenset[tuple[int, int]]:
    """Minimum spanning tree of a dense symmetric distance matrix.

    Ties break deterministically toward the edge with the lowest smaller
    index, then the lowest larger index.
    """
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DecodeError(f"distance matrix must be square, got {D.shape}")
    if not np.isfinite(D).all():
        raise DecodeError("non-finite entries in distance matrix")
    n = D.shape[0]
    if n <= 1:
        return frozenset()

    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    key = D[0].copy()
    parent = [0] * n
    edges: list[tuple[int, int]] = []

    def canon(u: int, v: int) -> tuple[int, int]:
        return (u, v) if u < v else (v, u)

    for _ in range(n - 1):
        best = -1
        for v in range(n):
            if in_tree[v]:
                continue
            if best < 0 or (key[v], *canon(parent[v], v)) < (key[best], *canon(parent[best], best)):
                best = v
        in_tree[best] = True
        edges.append(canon(parent[best], best))
        for w in range(n):
            if in_tree[w]:
                continue
            if D[best, w] < key[w] or (D[best, w] == key[w] and canon(best, w) < canon(parent[w], w)):
                key[w] = D[best, w]
                parent[w] = best
    return frozenset(edges)


def _normalize(edges: Iterable[tuple[int, int]]) -> frozenset[tuple[int, int]]:
    return frozenset((min(i, j), max(i, j)) for i, j in edges)


@dataclass(frozen=True)
class UUASCount:
    correct: int
    total: int

    @property
    def score(self) -> float | None:
        """None when no gold edges exist; excluded from aggregation."""
        return self.correct / self.total if self.total else None


def uuas(predicted: Iterable[tuple[int, int]], gold: Iterable[tuple[int, int]]) -> UUASCount:
    """Correct = |predicted ∩ gold| over unordered edges; total = |gold|."""
    gold_set = _normalize(gold)
    return UUASCount(len(_normalize(predicted) & gold_set), len(gold_set))


def subgraph_uuas(tree: Iterable[tuple[int, int]], sub: SubgraphEdges) -> UUASCount:
    """Score the full decoded tree against one subgraph's edges."""
    return uuas(tree, sub.edges)


def micro_average(counts: Sequence[UUASCount]) -> float | None:
    """Corpus UUAS as sum(correct)/sum(total); None if no gold edges at all."""
    total = sum(c.total for c in counts)
    if total == 0:
        return None
    return sum(c.correct for c in counts) / total


def macro_average(counts: Sequence[UUASCount]) -> float | None:
    """Mean of per-sentence scores, skipping empty-gold sentences."""
    scores = [c.score for c in counts if c.total]
    return float(np.mean(scores)) if scores else None


def tree_to_conllu_edges(edges: Iterable[tuple[int, int]]) -> str:
    """Predicted trees as a plain edge list (1-based) for inspection."""
    lines = [f"{min(i, j) + 1}\t{max(i, j) + 1}" for i, j in sorted(_normalize(edges))]
    return "\n".join(lines) + ("\n" if lines else "")
