"""Per-layer score series, expected layers, and the success/failure split
for the agreement analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Category, DepSentence, StructureSetKey, categories_for_key, extract_subgraph_edges
from .decode import distance_matrix, macro_average, micro_average, prim_mst, subgraph_uuas
from .probe import ProbeParams


class MetricsError(ValueError):
    pass


# one evaluation item: a sentence plus its full hidden stack [L+1, T, d]
EvalItem = tuple[DepSentence, np.ndarray]


@dataclass
class LayerScoreSeries:
    category: Category
    scores: np.ndarray  # (L+1,), index = target layer
    group: StructureSetKey | None = None

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)


def _check_probes(probes: Sequence[ProbeParams]) -> None:
    for k, p in enumerate(probes):
        if p.layer != k:
            raise MetricsError(f"probes must cover layers 0..L in order; index {k} has layer {p.layer}")


def predicted_trees(
    probes: Sequence[ProbeParams], items: Sequence[EvalItem]
) -> list[list[frozenset[tuple[int, int]]]]:
    """Decoded tree per (layer, item); shared by every category's scoring."""
    _check_probes(probes)
    trees: list[list[frozenset[tuple[int, int]]]] = []
    for params in probes:
        row = []
        for _, hidden in items:
            row.append(prim_mst(distance_matrix(params, hidden[: params.layer + 1])))
        trees.append(row)
    return trees


def layer_scores(
    probes: Sequence[ProbeParams],
    items: Sequence[EvalItem],
    category: Category,
    group: StructureSetKey | None = None,
    aggregate: str = "micro",
    trees: Sequence[Sequence[frozenset[tuple[int, int]]]] | None = None,
) -> LayerScoreSeries:
    """UUAS of ``category`` for each layer's probe over ``items``.

    ``trees`` may carry pre-decoded trees from ``predicted_trees`` to avoid
    re-decoding when several categories are scored on the same items.
    """
    if not items:
        raise MetricsError(f"empty structure set for {category.name}")
    if trees is None:
        trees = predicted_trees(probes, items)
    subs = [extract_subgraph_edges(sent, category) for sent, _ in items]
    agg = micro_average if aggregate == "micro" else macro_average
    scores = []
    for layer_trees in trees:
        counts = [subgraph_uuas(tree, sub) for tree, sub in zip(layer_trees, subs)]
        value = agg(counts)
        scores.append(np.nan if value is None else value)
    return LayerScoreSeries(category, np.asarray(scores), group)


@dataclass
class ExpectedLayerResult:
    value: float  # nan when invalid
    deltas: np.ndarray
    denominator: float
    valid: bool


def expected_layer(series: LayerScoreSeries | np.ndarray | Sequence[float], clamp_negative: bool = False) -> ExpectedLayerResult:
    """Delta-weighted average of layer indices.

    E = sum_l l * (S(l) - S(l-1)) / sum_l (S(l) - S(l-1)); raw deltas by
    default, negatives clamped to 0 behind the flag. A zero denominator
    (flat series) yields an invalid result.
    """
    scores = np.asarray(series.scores if isinstance(series, LayerScoreSeries) else series, dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] < 2:
        raise MetricsError(f"need at least 2 layer scores, got shape {scores.shape}")
    deltas = np.diff(scores)
    if clamp_negative:
        deltas = np.maximum(deltas, 0.0)
    denom = float(deltas.sum())
    if denom == 0.0 or not np.isfinite(denom):
        return ExpectedLayerResult(float("nan"), deltas, denom, False)
    layers = np.arange(1, scores.shape[0], dtype=np.float64)
    return ExpectedLayerResult(float((layers * deltas).sum() / denom), deltas, denom, True)


@dataclass
class ReportRow:
    group: StructureSetKey
    category: Category
    e_mean: float  # nan when no seed produced a valid E
    e_std: float
    n_seeds: int
    n_valid: int
    per_seed: list[float] = field(default_factory=list)  # nan entries = invalid


def structure_set_report(
    groups: Mapping[StructureSetKey, Sequence[EvalItem]],
    probes_by_seed: Mapping[int, Sequence[ProbeParams]],
    include_global: bool = False,
    aggregate: str = "micro",
    clamp_negative: bool = False,
) -> list[ReportRow]:
    """Expected layer per (structure set x category), mean/std across seeds.

    Invalid (flat-series) Es stay visible as nan entries in ``per_seed``
    and reduce ``n_valid``; they are excluded from mean/std.
    """
    if not probes_by_seed:
        raise MetricsError("need probes for at least one seed")
    rows: list[ReportRow] = []
    for key in sorted(groups, key=lambda k: k.rels):
        items = groups[key]
        cats = categories_for_key(key, include_global=include_global)
        per_seed_trees = {
            seed: predicted_trees(probes, items) for seed, probes in probes_by_seed.items()
        }
        for cat in cats:
            values = []
            for seed in sorted(probes_by_seed):
                series = layer_scores(
                    probes_by_seed[seed], items, cat, key, aggregate, per_seed_trees[seed]
                )
                res = expected_layer(series, clamp_negative=clamp_negative)
                values.append(res.value if res.valid else float("nan"))
            arr = np.asarray(values, dtype=np.float64)
            valid = arr[np.isfinite(arr)]
            rows.append(
                ReportRow(
                    group=key,
                    category=cat,
                    e_mean=float(valid.mean()) if valid.size else float("nan"),
                    e_std=float(valid.std()) if valid.size else float("nan"),
                    n_seeds=len(values),
                    n_valid=int(valid.size),
                    per_seed=values,
                )
            )
    return rows


@dataclass
class AveragedE:
    mean: float  # nan when no seed yields a valid E
    std: float
    n_valid: int
    per_seed: list[float]


@dataclass
class PartitionReport:
    n_items: int
    expected: dict[str, AveragedE]  # category name -> seed-averaged E
    series: dict[str, LayerScoreSeries]


@dataclass
class AgreementAnalysis:
    success: PartitionReport
    failure: PartitionReport
    n_ties: int

    @property
    def accuracy(self) -> float:
        total = self.success.n_items + self.failure.n_items
        return self.success.n_items / total if total else float("nan")


def agreement_split_analysis(
    items: Sequence,
    probes_by_seed: Mapping[int, Sequence[ProbeParams]],
    embeddings: Mapping[str, np.ndarray],
    categories: Sequence[Category] | None = None,
    tie_policy: str = "failure",
    aggregate: str = "micro",
) -> AgreementAnalysis:
    """Partition agreement items by whether the grammatical variant scored
    the higher pseudo-log-likelihood, then compute expected layers per
    partition and category.

    ``items`` are templates.AgreementItem records with PLL fields filled;
    ``embeddings`` maps item id to the grammatical sentence's hidden stack.
    Expected layers are computed per seed and averaged (nan when no seed
    yields a valid E for a partition/category).
    """
    if tie_policy not in ("failure", "success"):
        raise MetricsError(f"unknown tie policy {tie_policy!r}")
    success_items: list[EvalItem] = []
    failure_items: list[EvalItem] = []
    n_ties = 0
    for item in items:
        if item.pll_grammatical is None or item.pll_ungrammatical is None:
            raise MetricsError(f"{item.id}: missing PLL scores")
        if item.id not in embeddings:
            raise MetricsError(f"{item.id}: no embeddings supplied")
        pair = (item.gold, embeddings[item.id])
        if item.pll_grammatical == item.pll_ungrammatical:
            n_ties += 1
            (success_items if tie_policy == "success" else failure_items).append(pair)
        elif item.pll_grammatical > item.pll_ungrammatical:
            success_items.append(pair)
        else:
            failure_items.append(pair)

    if categories is None:
        from .corpus import GLOBAL, MACRO

        labels = sorted(
            {
                rel
                for sent, _ in list(success_items) + list(failure_items)
                for rel in (sent.rels[c] for c in sent.children(sent.root))
                if rel != "punct"
            }
        )
        categories = [GLOBAL, MACRO] + [Category.micro(l) for l in labels]

    def report(part: list[EvalItem]) -> PartitionReport:
        if not part:
            return PartitionReport(0, {}, {})
        expected: dict[str, AveragedE] = {}
        series_out: dict[str, LayerScoreSeries] = {}
        per_seed_trees = {
            seed: predicted_trees(probes, part) for seed, probes in probes_by_seed.items()
        }
        for cat in categories:
            values = []
            last_series = None
            for seed in sorted(probes_by_seed):
                series = layer_scores(probes_by_seed[seed], part, cat, None, aggregate, per_seed_trees[seed])
                last_series = series
                res = expected_layer(series)
                values.append(res.value if res.valid else float("nan"))
            arr = np.asarray(values)
            valid = arr[np.isfinite(arr)]
            expected[cat.name] = AveragedE(
                float(valid.mean()) if valid.size else float("nan"),
                float(valid.std()) if valid.size else float("nan"),
                int(valid.size),
                values,
            )
            series_out[cat.name] = last_series
        return PartitionReport(len(part), expected, series_out)

    return AgreementAnalysis(report(success_items), report(failure_items), n_ties)
