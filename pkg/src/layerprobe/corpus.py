"""CoNLL-U ingestion, sentence filtering, structure-set grouping, and
gold-tree edge utilities.

Token positions are 0-based throughout this package; ``DepSentence.heads``
keeps the raw CoNLL-U convention (1-based, 0 = root attachment). Edge sets
are frozensets of ``(i, j)`` position pairs with ``i < j``; dependency
labels are opaque strings so any annotation scheme works.
"""

from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_BANNED_RELS = frozenset({"relcl", "acl:relcl", "csubj", "csubjpass", "dep"})
PUNCT_REL = "punct"


class CorpusError(ValueError):
    """Malformed corpus-level input (empty input, impossible request)."""


@dataclass(frozen=True)
class DepSentence:
    """One dependency-annotated sentence.

    heads[i] is the 1-based index of token i's head, 0 for the root token.
    """

    id: str
    tokens: tuple[str, ...]
    heads: tuple[int, ...]
    rels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        n = len(self.tokens)
        if not (len(self.heads) == len(self.rels) == n):
            raise ValueError(f"{self.id}: tokens/heads/rels length mismatch")
        if n < 2:
            raise ValueError(f"{self.id}: need at least 2 tokens, got {n}")
        roots = [i for i, h in enumerate(self.heads) if h == 0]
        if len(roots) != 1:
            raise ValueError(f"{self.id}: no unique root ({len(roots)} root attachments)")
        for i, h in enumerate(self.heads):
            if not 0 <= h <= n:
                raise ValueError(f"{self.id}: head index {h} out of range at token {i + 1}")
            if h == i + 1:
                raise ValueError(f"{self.id}: token {i + 1} is its own head")
        # every token must be reachable from the root, which also rules out cycles
        reached = self.subtree(roots[0])
        if len(reached) != n:
            raise ValueError(f"{self.id}: heads do not form a tree (unreachable tokens)")

    @property
    def root(self) -> int:
        """0-based position of the root token."""
        return self.heads.index(0)

    def children(self, pos: int) -> list[int]:
        return [i for i, h in enumerate(self.heads) if h == pos + 1]

    def subtree(self, pos: int) -> set[int]:
        """Positions of ``pos`` and all its descendants."""
        seen = {pos}
        queue = deque([pos])
        while queue:
            cur = queue.popleft()
            for child in self.children(cur):
                if child not in seen:
                    seen.add(child)
                    queue.append(child)
        return seen

    def edges(self) -> frozenset[tuple[int, int]]:
        """All n-1 gold edges as unordered position pairs."""
        return frozenset(
            (min(i, h - 1), max(i, h - 1)) for i, h in enumerate(self.heads) if h > 0
        )


@dataclass(frozen=True)
class FilterConfig:
    banned_rels: frozenset[str] = DEFAULT_BANNED_RELS
    sentence_final_punct_only: bool = True


@dataclass(frozen=True)
class StructureSetKey:
    """Sorted labels of the root's outgoing edges, punctuation excluded."""

    rels: tuple[str, ...]

    @property
    def label(self) -> str:
        return "+".join(self.rels) if self.rels else "(none)"

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class Category:
    """Which subgraph of the gold tree to score: global, macro, or micro(label)."""

    kind: str  # "global" | "macro" | "micro"
    label: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("global", "macro", "micro"):
            raise ValueError(f"unknown category kind {self.kind!r}")
        if (self.kind == "micro") != (self.label is not None):
            raise ValueError("micro categories need a label; others must not have one")

    @classmethod
    def micro(cls, label: str) -> "Category":
        return cls("micro", label)

    @property
    def name(self) -> str:
        return f"micro({self.label})" if self.kind == "micro" else self.kind

    def __str__(self) -> str:
        return self.name


GLOBAL = Category("global")
MACRO = Category("macro")


@dataclass(frozen=True)
class SubgraphEdges:
    category: Category
    edges: frozenset[tuple[int, int]]


@dataclass(frozen=True)
class SkippedSentence:
    id: str
    line: int
    reason: str


@dataclass
class ParseResult:
    sentences: list[DepSentence]
    skipped: list[SkippedSentence]


def parse_conllu(source: str | Iterable[str]) -> ParseResult:
    """Parse CoNLL-U text into sentences, skipping the ones that violate
    the DepSentence invariants.

    Multiword-token ("1-2") and empty-node ("1.1") lines are ignored.
    A malformed token line or a tree violation skips the whole sentence,
    recorded with the offending line number and reason.
    """
    lines = source.splitlines() if isinstance(source, str) else [l.rstrip("\n") for l in source]
    sentences: list[DepSentence] = []
    skipped: list[SkippedSentence] = []

    block: list[tuple[int, str]] = []
    count = 0

    def flush(block: list[tuple[int, str]]) -> None:
        nonlocal count
        if not block or all(line.startswith("#") for _, line in block):
            return  # comment-only blocks (file headers) are not sentences
        count += 1
        sent_id = f"sent-{count}"
        forms: list[str] = []
        heads: list[int] = []
        rels: list[str] = []
        first_line = block[0][0]
        try:
            for lineno, line in block:
                if line.startswith("#"):
                    if line[1:].split("=", 1)[0].strip() == "sent_id":
                        sent_id = line.split("=", 1)[1].strip()
                    continue
                fields = line.split("\t")
                if len(fields) != 10:
                    raise ValueError(f"line {lineno}: expected 10 tab-separated fields, got {len(fields)}")
                tok_id = fields[0]
                if "-" in tok_id or "." in tok_id:
                    continue  # multiword token / empty node
                if not tok_id.isdigit():
                    raise ValueError(f"line {lineno}: bad token id {tok_id!r}")
                if int(tok_id) != len(forms) + 1:
                    raise ValueError(f"line {lineno}: token ids not contiguous at {tok_id}")
                if not fields[6].isdigit():
                    raise ValueError(f"line {lineno}: bad head {fields[6]!r}")
                forms.append(fields[1])
                heads.append(int(fields[6]))
                rels.append(fields[7])
            sent = DepSentence(sent_id, tuple(forms), tuple(heads), tuple(rels))
            sent.validate()
        except ValueError as err:
            skipped.append(SkippedSentence(sent_id, first_line, str(err)))
            return
        sentences.append(sent)

    for lineno, raw in enumerate(lines, start=1):
        if raw.strip() == "":
            flush(block)
            block = []
        else:
            block.append((lineno, raw))
    flush(block)
    return ParseResult(sentences, skipped)


def to_conllu(sent: DepSentence) -> str:
    """Render a sentence back to 10-column CoNLL-U (unknown columns as '_')."""
    out = [f"# sent_id = {sent.id}"]
    for i, (form, head, rel) in enumerate(zip(sent.tokens, sent.heads, sent.rels)):
        out.append("\t".join([str(i + 1), form, "_", "_", "_", "_", str(head), rel, "_", "_"]))
    return "\n".join(out) + "\n"


def write_conllu(sentences: Iterable[DepSentence]) -> str:
    return "\n".join(to_conllu(s) for s in sentences)


@dataclass
class FilterResult:
    kept: list[DepSentence]
    removed: Counter = field(default_factory=Counter)

    @property
    def n_removed(self) -> int:
        return sum(self.removed.values())


def filter_sentences(sentences: Sequence[DepSentence], cfg: FilterConfig = FilterConfig()) -> FilterResult:
    """Drop sentences containing banned relations or non-final punctuation."""
    result = FilterResult([])
    for sent in sentences:
        banned = next((r for r in sent.rels if r in cfg.banned_rels), None)
        if banned is not None:
            result.removed[f"banned_rel:{banned}"] += 1
            continue
        if cfg.sentence_final_punct_only and any(
            rel == PUNCT_REL and i != len(sent) - 1 for i, rel in enumerate(sent.rels)
        ):
            result.removed["non_final_punct"] += 1
            continue
        result.kept.append(sent)
    return result


def structure_key(sent: DepSentence) -> StructureSetKey:
    """Sorted multiset of the root's outgoing labels, punctuation excluded."""
    rels = sorted(sent.rels[c] for c in sent.children(sent.root) if sent.rels[c] != PUNCT_REL)
    return StructureSetKey(tuple(rels))


@dataclass
class GroupResult:
    groups: dict[StructureSetKey, list[DepSentence]]
    sizes: dict[StructureSetKey, int]  # pre-pruning sizes, all keys
    total: int
    threshold: float


def group_and_prune(
    sentences: Sequence[DepSentence],
    threshold: float = 0.10,
    key_fn: Callable[[DepSentence], StructureSetKey] = structure_key,
) -> GroupResult:
    """Group by structure-set key and keep groups with share strictly above
    ``threshold`` of the input."""
    if not sentences:
        raise CorpusError("group_and_prune: empty input")
    groups: dict[StructureSetKey, list[DepSentence]] = {}
    for sent in sentences:
        groups.setdefault(key_fn(sent), []).append(sent)
    sizes = {k: len(v) for k, v in groups.items()}
    total = len(sentences)
    retained = {k: v for k, v in groups.items() if len(v) / total > threshold}
    return GroupResult(retained, sizes, total, threshold)


def extract_subgraph_edges(
    sent: DepSentence, category: Category, include_punct_in_macro: bool = False
) -> SubgraphEdges:
    """Edge subset of the gold tree for one category.

    Macro edges connect the root to its dependents (punctuation excluded by
    default). Micro(label) edges are the ones internal to the subtree(s) of
    the root's dependents attached via ``label`` — the root-attachment edge
    itself is excluded; with several dependents sharing the label, the union
    of their internal edges is returned.
    """
    root = sent.root
    if category.kind == "global":
        return SubgraphEdges(category, sent.edges())
    if category.kind == "macro":
        edges = frozenset(
            (min(root, c), max(root, c))
            for c in sent.children(root)
            if include_punct_in_macro or sent.rels[c] != PUNCT_REL
        )
        return SubgraphEdges(category, edges)
    heads = [c for c in sent.children(root) if sent.rels[c] == category.label]
    if not heads:
        raise CorpusError(f"{sent.id}: root has no dependent with label {category.label!r}")
    edges: set[tuple[int, int]] = set()
    for head in heads:
        for pos in sent.subtree(head):
            if pos == head:
                continue  # head edge would be the root attachment, not internal
            h = sent.heads[pos] - 1
            edges.add((min(pos, h), max(pos, h)))
    return SubgraphEdges(category, frozenset(edges))


def categories_for_key(key: StructureSetKey, include_global: bool = False) -> list[Category]:
    """Macro plus one Micro per distinct root label of the structure set."""
    cats = [GLOBAL] if include_global else []
    cats.append(MACRO)
    cats.extend(Category.micro(label) for label in sorted(set(key.rels)))
    return cats


def gold_distances(sent: DepSentence) -> np.ndarray:
    """All-pairs path lengths on the undirected gold tree (BFS per token)."""
    n = len(sent)
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in sent.edges():
        adj[i].append(j)
        adj[j].append(i)
    dist = np.full((n, n), -1, dtype=np.int32)
    for start in range(n):
        dist[start, start] = 0
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if dist[start, nxt] < 0:
                    dist[start, nxt] = dist[start, cur] + 1
                    queue.append(nxt)
    return dist


def split_dataset(
    sentences: Sequence[DepSentence], sizes: tuple[int, int, int], seed: int
) -> tuple[list[DepSentence], list[DepSentence], list[DepSentence]]:
    """Disjoint uniform samples without replacement, reproducible by seed."""
    n_train, n_dev, n_test = sizes
    need = n_train + n_dev + n_test
    if need > len(sentences):
        raise CorpusError(
            f"split_dataset: need {need} sentences, have {len(sentences)} (short {need - len(sentences)})"
        )
    picks = random.Random(seed).sample(range(len(sentences)), need)
    train = [sentences[i] for i in picks[:n_train]]
    dev = [sentences[i] for i in picks[n_train : n_train + n_dev]]
    test = [sentences[i] for i in picks[n_train + n_dev :]]
    return train, dev, test
