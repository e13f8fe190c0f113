"""Stress-majorization MDS for probe-space embeddings, derivation traces,
and deterministic CSV/JSON/SVG report emission."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Category, DepSentence, extract_subgraph_edges
from .decode import distance_matrix, prim_mst, subgraph_uuas
from .metrics import LayerScoreSeries, ReportRow
from .probe import ProbeParams, mix_embeddings

TRACE_SCHEMA_VERSION = 1


class VizError(ValueError):
    pass


def _pairwise(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def _raw_stress(delta: np.ndarray, dist: np.ndarray) -> float:
    iu = np.triu_indices(delta.shape[0], 1)
    gap = delta[iu] - dist[iu]
    return float((gap * gap).sum())


@dataclass
class MDSResult:
    coords: np.ndarray  # (T, dims)
    stress: float
    n_iter: int
    stress_history: list[float] = field(default_factory=list)  # best restart


def _classical_init(delta: np.ndarray, dims: int) -> np.ndarray:
    """Torgerson classical-scaling start: deterministic and equivariant
    under relabeling of the input points."""
    n = delta.shape[0]
    J = np.eye(n) - 1.0 / n
    gram = -0.5 * J @ (delta * delta) @ J
    vals, vecs = np.linalg.eigh(gram)
    idx = np.argsort(vals)[::-1][:dims]
    lam = np.clip(vals[idx], 0.0, None)
    return vecs[:, idx] * np.sqrt(lam)[None, :]


def smacof_mds(
    points: np.ndarray,
    dims: int = 2,
    n_init: int = 4,
    max_iter: int = 300,
    eps: float = 1e-3,
    seed: int = 0,
) -> MDSResult:
    """Metric MDS by iterated Guttman transforms; best of ``n_init`` restarts.

    The first restart starts from the classical-scaling solution, the rest
    from seeded random configurations. Raw stress sum_{i<j} (delta_ij -
    d_ij)^2 is non-increasing across iterations; iteration stops early once
    the relative stress decrease falls below ``eps``. Deterministic for a
    fixed seed.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise VizError(f"need at least 2 points, got shape {points.shape}")
    T = points.shape[0]
    delta = _pairwise(points)

    if not delta.any():
        return MDSResult(np.zeros((T, dims)), 0.0, 0, [0.0])
    if T == 2:
        d = float(delta[0, 1])
        coords = np.zeros((2, dims))
        coords[0, 0], coords[1, 0] = -d / 2, d / 2
        return MDSResult(coords, 0.0, 0, [0.0])

    rng = np.random.default_rng(seed)
    scale = float(delta.max())
    best: MDSResult | None = None
    for restart in range(n_init):
        X = _classical_init(delta, dims) if restart == 0 else rng.standard_normal((T, dims)) * scale / 2
        stress = _raw_stress(delta, _pairwise(X))
        history = [stress]
        iters = 0
        for it in range(max_iter):
            dist = _pairwise(X)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(dist > 0, delta / dist, 0.0)
            np.fill_diagonal(ratio, 0.0)
            B = -ratio
            np.fill_diagonal(B, ratio.sum(axis=1))
            X = (B @ X) / T
            new_stress = _raw_stress(delta, _pairwise(X))
            history.append(new_stress)
            iters = it + 1
            if stress - new_stress < eps * max(stress, 1e-300) or new_stress < 1e-30:
                stress = new_stress
                break
            stress = new_stress
        if best is None or stress < best.stress:
            best = MDSResult(X, stress, iters, history)
    return best


def procrustes_align(reference: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Rotate/reflect ``coords`` (after centering) onto ``reference``.

    Presentation aid only; per-layer MDS runs stay independent.
    """
    ref = reference - reference.mean(axis=0)
    cur = coords - coords.mean(axis=0)
    U, _, Vt = np.linalg.svd(ref.T @ cur)
    return cur @ (U @ Vt).T


@dataclass
class LayerTrace:
    layer: int
    coords: np.ndarray  # (T, 2)
    edges: list[tuple[int, int]]
    uuas: dict[str, float | None]
    stress: float


@dataclass
class DerivationTrace:
    sentence_id: str
    tokens: list[str]
    layers: list[LayerTrace]


def derivation_trace(
    sent: DepSentence,
    hidden: np.ndarray,
    probes: Sequence[ProbeParams],
    categories: Sequence[Category],
    mds_seed: int = 0,
    align: bool = False,
) -> DerivationTrace:
    """Per-layer 2-D projection, decoded tree, and category scores for one
    sentence. MDS input is the probe-projected mixed embedding."""
    layers: list[LayerTrace] = []
    reference: np.ndarray | None = None
    for params in probes:
        sliced = hidden[: params.layer + 1]
        mixed = mix_embeddings(params, sliced)
        projected = np.asarray(mixed, dtype=np.float64) @ params.proj.astype(np.float64).T
        mds = smacof_mds(projected, seed=mds_seed)
        coords = mds.coords
        if align:
            if reference is None:
                reference = coords
            else:
                coords = procrustes_align(reference, coords)
        tree = prim_mst(distance_matrix(params, sliced))
        scores = {
            cat.name: subgraph_uuas(tree, extract_subgraph_edges(sent, cat)).score
            for cat in categories
        }
        layers.append(LayerTrace(params.layer, coords, sorted(tree), scores, mds.stress))
    return DerivationTrace(sent.id, list(sent.tokens), layers)


def trace_to_json(trace: DerivationTrace) -> dict:
    return {
        "schema_version": TRACE_SCHEMA_VERSION,
        "sentence_id": trace.sentence_id,
        "tokens": trace.tokens,
        "layers": [
            {
                "layer": lt.layer,
                "coords": [[_round(x), _round(y)] for x, y in lt.coords],
                "edges": [list(e) for e in lt.edges],
                "uuas": lt.uuas,
                "stress": _round(lt.stress),
            }
            for lt in trace.layers
        ],
    }


def _round(x: float) -> float:
    return float(f"{float(x):.10g}")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if np.isnan(x) else f"{x:.10g}"
    return str(x)


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence], meta: Mapping[str, str] | None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write("# " + " ".join(f"{k}={v}" for k, v in sorted(meta.items())) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def layer_scores_csv(
    series: Sequence[tuple[int, LayerScoreSeries]], meta: Mapping[str, str] | None = None
) -> str:
    """(seed, series) pairs flattened to seed/layer/category/group/score rows."""
    rows = []
    for seed, s in series:
        for layer, score in enumerate(s.scores):
            rows.append([seed, layer, s.category.name, s.group.label if s.group else "", score])
    return _csv_text(["seed", "layer", "category", "group", "uuas"], rows, meta)


def expected_layers_csv(rows: Sequence[ReportRow], meta: Mapping[str, str] | None = None) -> str:
    data = [
        [r.group.label, r.category.name, r.e_mean, r.e_std, r.n_seeds, r.n_valid]
        for r in rows
    ]
    return _csv_text(["group", "category", "e_mean", "e_std", "n_seeds", "n_valid"], data, meta)


def expected_layers_json(rows: Sequence[ReportRow], meta: Mapping[str, str] | None = None) -> str:
    payload = {
        "meta": dict(meta or {}),
        "rows": [
            {
                "group": r.group.label,
                "category": r.category.name,
                "e_mean": None if np.isnan(r.e_mean) else _round(r.e_mean),
                "e_std": None if np.isnan(r.e_std) else _round(r.e_std),
                "n_seeds": r.n_seeds,
                "n_valid": r.n_valid,
                "per_seed": [None if np.isnan(v) else _round(v) for v in r.per_seed],
            }
            for r in rows
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


# ---------------------------------------------------------------------------
# hand-rolled SVG output: byte-identical across reruns, no timestamps


def _svg_header(width: int, height: int, meta: Mapping[str, str] | None) -> list[str]:
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">'
    ]
    if meta:
        lines.append("<!-- " + " ".join(f"{k}={v}" for k, v in sorted(meta.items())) + " -->")
    return lines


_PALETTE = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3"]


def expected_layers_svg(rows: Sequence[ReportRow], meta: Mapping[str, str] | None = None) -> str:
    """Grouped bar chart of expected layers, one cluster per structure set,
    error bars = seed standard deviation."""
    groups: dict[str, list[ReportRow]] = {}
    for r in rows:
        groups.setdefault(r.group.label, []).append(r)
    cats = sorted({r.category.name for r in rows})
    colors = {c: _PALETTE[i % len(_PALETTE)] for i, c in enumerate(cats)}

    bar_w, gap, cluster_gap, margin, plot_h = 26, 6, 34, 60, 260
    cluster_w = len(cats) * (bar_w + gap)
    width = margin * 2 + max(1, len(groups)) * (cluster_w + cluster_gap)
    height = margin * 2 + plot_h + 40
    finite = [r.e_mean + (0 if np.isnan(r.e_std) else r.e_std) for r in rows if not np.isnan(r.e_mean)]
    top = max(finite) if finite else 1.0
    top = max(top, 1e-9)

    def y(v: float) -> float:
        return margin + plot_h - (v / top) * plot_h

    out = _svg_header(width, height, meta)
    out.append(f'<line x1="{margin}" y1="{margin + plot_h}" x2="{width - margin}" y2="{margin + plot_h}" stroke="#333"/>')
    x = float(margin)
    for label in sorted(groups):
        for i, r in enumerate(sorted(groups[label], key=lambda r: r.category.name)):
            bx = x + i * (bar_w + gap)
            if not np.isnan(r.e_mean):
                out.append(
                    f'<rect x="{bx:.1f}" y="{y(r.e_mean):.1f}" width="{bar_w}" '
                    f'height="{(margin + plot_h - y(r.e_mean)):.1f}" fill="{colors[r.category.name]}"/>'
                )
                if not np.isnan(r.e_std) and r.e_std > 0:
                    cxm = bx + bar_w / 2
                    out.append(
                        f'<line x1="{cxm:.1f}" y1="{y(r.e_mean + r.e_std):.1f}" '
                        f'x2="{cxm:.1f}" y2="{y(max(r.e_mean - r.e_std, 0)):.1f}" stroke="#222"/>'
                    )
            else:
                out.append(
                    f'<text x="{bx + bar_w / 2:.1f}" y="{margin + plot_h - 4:.1f}" '
                    f'font-size="10" text-anchor="middle" fill="#999">n/a</text>'
                )
        out.append(
            f'<text x="{x + cluster_w / 2:.1f}" y="{margin + plot_h + 16}" '
            f'font-size="11" text-anchor="middle">{label}</text>'
        )
        x += cluster_w + cluster_gap
    for i, c in enumerate(cats):
        lx = margin + i * 130
        ly = height - 18
        out.append(f'<rect x="{lx}" y="{ly - 10}" width="12" height="12" fill="{colors[c]}"/>')
        out.append(f'<text x="{lx + 16}" y="{ly}" font-size="11">{c}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trace_svg(trace: DerivationTrace, meta: Mapping[str, str] | None = None) -> str:
    """One scatter+edges panel per layer."""
    panel, margin = 220, 24
    n = len(trace.layers)
    width = margin + n * (panel + margin)
    height = panel + 2 * margin + 24
    out = _svg_header(width, height, meta)
    for idx, lt in enumerate(trace.layers):
        ox = margin + idx * (panel + margin)
        oy = margin
        coords = np.asarray(lt.coords, dtype=np.float64)
        span = float(np.abs(coords).max()) or 1.0

        def sx(v: float) -> float:
            return ox + (v / span * 0.45 + 0.5) * panel

        def sy(v: float) -> float:
            return oy + (0.5 - v / span * 0.45) * panel

        out.append(f'<rect x="{ox}" y="{oy}" width="{panel}" height="{panel}" fill="none" stroke="#ccc"/>')
        for i, j in lt.edges:
            out.append(
                f'<line x1="{sx(coords[i, 0]):.1f}" y1="{sy(coords[i, 1]):.1f}" '
                f'x2="{sx(coords[j, 0]):.1f}" y2="{sy(coords[j, 1]):.1f}" stroke="#999"/>'
            )
        for t, (cx, cy) in enumerate(coords):
            out.append(f'<circle cx="{sx(cx):.1f}" cy="{sy(cy):.1f}" r="3" fill="#4c72b0"/>')
            out.append(
                f'<text x="{sx(cx) + 4:.1f}" y="{sy(cy) - 4:.1f}" font-size="9">{trace.tokens[t]}</text>'
            )
        out.append(
            f'<text x="{ox + panel / 2:.1f}" y="{oy + panel + 16}" font-size="11" '
            f'text-anchor="middle">layer {lt.layer}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_reports(
    outdir: str | Path,
    layer_series: Sequence[tuple[int, LayerScoreSeries]] | None = None,
    expected_rows: Sequence[ReportRow] | None = None,
    traces: Sequence[DerivationTrace] | None = None,
    svg: bool = True,
    meta: Mapping[str, str] | None = None,
) -> list[Path]:
    """Write figure-equivalent CSV/JSON (and optional SVG) files; reruns on
    identical inputs are byte-identical."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = outdir / name
        _write_text(path, text)
        written.append(path)

    if layer_series:
        emit("layer_uuas.csv", layer_scores_csv(layer_series, meta))
    if expected_rows is not None:
        emit("expected_layers.csv", expected_layers_csv(expected_rows, meta))
        emit("expected_layers.json", expected_layers_json(expected_rows, meta))
        if svg:
            emit("expected_layers.svg", expected_layers_svg(expected_rows, meta))
    for trace in traces or []:
        emit(
            f"trace_{trace.sentence_id}.json",
            json.dumps(trace_to_json(trace), sort_keys=True, indent=2) + "\n",
        )
        if svg:
            emit(f"trace_{trace.sentence_id}.svg", trace_svg(trace, meta))
    return written
