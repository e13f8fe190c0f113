"""Pipeline orchestration: prepare | train | evaluate | agreement.

Every subcommand takes ``--config <json>``; intermediate artifacts are
explicit files under the output directory so external tools (e.g. the
embedding extractor) can interpose between stages. All randomness flows
from seeds named in the config. Exit codes: 0 ok, 1 validation error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bundles import BundleError, BundleReader, check_alignment
from .config import ConfigError, RunConfig, config_hash, load_config
from .corpus import (
    CorpusError,
    GLOBAL,
    DepSentence,
    filter_sentences,
    gold_distances,
    group_and_prune,
    parse_conllu,
    split_dataset,
    structure_key,
    to_conllu,
)
from .metrics import agreement_split_analysis, layer_scores, predicted_trees, structure_set_report
from .mdsviz import derivation_trace, emit_reports
from .probe import ProbeError, TrainingDiverged, load_checkpoint, save_checkpoint, save_history_csv, train_probe
from .templates import (
    Lexicon,
    TemplateError,
    generate_agreement_pairs,
    items_from_json,
    items_to_json,
    write_items_conllu,
    write_sentences,
)

OUTPUT_DIR_ENV = "LAYERPROBE_OUTPUT_DIR"


class ValidationFailure(Exception):
    """User-facing input problem; exit code 1."""


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _meta(cfg_hash: str) -> dict[str, str]:
    return {"config_hash": cfg_hash, "code_version": __version__}


def _out_dir(cfg: RunConfig) -> Path:
    override = os.environ.get(OUTPUT_DIR_ENV)
    return Path(override) if override else Path(cfg.paths.output_dir)


def _require(path: str, what: str) -> Path:
    if not path:
        raise ValidationFailure(f"config is missing the {what} path")
    p = Path(path)
    if not p.exists():
        raise ValidationFailure(f"{what} path does not exist: {p}")
    return p


def _read_split_conllu(outdir: Path, name: str) -> list[DepSentence]:
    path = outdir / "prepared" / f"{name}.conllu"
    if not path.exists():
        raise ValidationFailure(f"missing {path}; run `prepare` first")
    result = parse_conllu(path.read_text(encoding="utf-8"))
    return result.sentences


def cmd_prepare(cfg: RunConfig) -> int:
    treebank = _require(cfg.paths.treebank, "treebank")
    outdir = _out_dir(cfg) / "prepared"
    outdir.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)

    parsed = parse_conllu(treebank.read_text(encoding="utf-8"))
    filtered = filter_sentences(parsed.sentences, cfg.filter)
    grouped = group_and_prune(filtered.kept, cfg.prune_threshold)
    retained = [s for sents in grouped.groups.values() for s in sents]
    # keep treebank order for reproducibility independent of dict iteration
    order = {id(s): i for i, s in enumerate(filtered.kept)}
    retained.sort(key=lambda s: order[id(s)])

    sizes = (cfg.split.train, cfg.split.dev, cfg.split.test)
    train, dev, test = split_dataset(retained, sizes, cfg.split.seed)

    header = f"# config_hash = {cfg_hash}\n# code_version = {__version__}\n\n"
    for name, sents in (("train", train), ("dev", dev), ("test", test), ("retained", retained)):
        _atomic_write(outdir / f"{name}.conllu", header + "".join(to_conllu(s) + "\n" for s in sents))
    manifest = {
        "config_hash": cfg_hash,
        "code_version": __version__,
        "parsed": len(parsed.sentences),
        "skipped": [
            {"id": s.id, "line": s.line, "reason": s.reason} for s in parsed.skipped
        ],
        "filtered_out": dict(sorted(filtered.removed.items())),
        "group_sizes": {k.label: n for k, n in sorted(grouped.sizes.items(), key=lambda kv: kv[0].rels)},
        "retained_groups": sorted(k.label for k in grouped.groups),
        "prune_threshold": grouped.threshold,
        "retained": len(retained),
        "split_sizes": {"train": len(train), "dev": len(dev), "test": len(test)},
        "split_seed": cfg.split.seed,
    }
    _atomic_write(outdir / "groups.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"prepared {len(retained)} sentences in {len(grouped.groups)} structure sets -> {outdir}")
    return 0


def _train_unit(args: tuple) -> tuple[int, int, str]:
    (bundle_path, retained_path, train_ids, dev_ids, layer, seed, train_cfg_dict, ckpt_path, hist_path, cfg_hash) = args
    from dataclasses import replace

    from .probe import TrainConfig

    reader = BundleReader(bundle_path)
    conllu_text = Path(retained_path).read_text(encoding="utf-8")
    sentences = {s.id: s for s in parse_conllu(conllu_text).sentences}
    train_items = [
        (reader.get(i)[: layer + 1], gold_distances(sentences[i]).astype(np.float64)) for i in train_ids
    ]
    dev_items = [
        (reader.get(i)[: layer + 1], gold_distances(sentences[i]).astype(np.float64)) for i in dev_ids
    ]
    cfg = TrainConfig(**train_cfg_dict)
    cfg = replace(cfg, seed=seed)
    result = train_probe(layer, train_items, dev_items, cfg)
    save_checkpoint(ckpt_path, result.params, seed=seed, config_hash=cfg_hash)
    save_history_csv(hist_path, result.history, meta=_meta(cfg_hash))
    reader.close()
    return layer, seed, ckpt_path


def cmd_train(cfg: RunConfig, workers: int = 1, resume: bool = False, dry_run: bool = False) -> int:
    bundle_path = _require(cfg.paths.bundle, "bundle")
    outdir = _out_dir(cfg)
    ckpt_dir = outdir / "probes"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)

    reader = BundleReader(bundle_path)
    retained = _read_split_conllu(outdir, "retained")
    check_alignment(reader.manifest, retained)
    train_sents = _read_split_conllu(outdir, "train")
    dev_sents = _read_split_conllu(outdir, "dev")
    num_layers = reader.manifest.num_layers
    reader.close()

    plan: list[tuple[int, int]] = [(layer, seed) for layer in range(num_layers + 1) for seed in cfg.seeds]
    if dry_run:
        for layer, seed in plan:
            print(f"plan: layer={layer} seed={seed}")
        return 0

    units = []
    skipped = 0
    from dataclasses import asdict

    for layer, seed in plan:
        ckpt_path = ckpt_dir / f"layer{layer:02d}_seed{seed}.ckpt"
        hist_path = ckpt_dir / f"layer{layer:02d}_seed{seed}_history.csv"
        if ckpt_path.exists():
            _, manifest = load_checkpoint(ckpt_path)
            if manifest.get("config_hash") != cfg_hash:
                raise ValidationFailure(
                    f"{ckpt_path}: existing checkpoint was trained under config "
                    f"{manifest.get('config_hash')}, current is {cfg_hash}; "
                    "refusing to resume (move it aside or change output_dir)"
                )
            if resume:
                skipped += 1
                continue
        units.append(
            (
                str(bundle_path),
                str(outdir / "prepared" / "retained.conllu"),
                [s.id for s in train_sents],
                [s.id for s in dev_sents],
                layer,
                seed,
                asdict(cfg.train),
                str(ckpt_path),
                str(hist_path),
                cfg_hash,
            )
        )

    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for layer, seed, path in pool.map(_train_unit, units):
                print(f"trained layer={layer} seed={seed} -> {path}")
    else:
        for unit in units:
            layer, seed, path = _train_unit(unit)
            print(f"trained layer={layer} seed={seed} -> {path}")
    if skipped:
        print(f"resumed: skipped {skipped} completed units")
    return 0


def _load_probes(cfg: RunConfig, outdir: Path, num_layers: int, cfg_hash: str):
    probes_by_seed: dict[int, list] = {}
    for seed in cfg.seeds:
        probes = []
        for layer in range(num_layers + 1):
            path = outdir / "probes" / f"layer{layer:02d}_seed{seed}.ckpt"
            if not path.exists():
                raise ValidationFailure(f"missing checkpoint {path}; run `train` first")
            params, manifest = load_checkpoint(path)
            if manifest.get("config_hash") != cfg_hash:
                raise ValidationFailure(
                    f"{path}: checkpoint config hash {manifest.get('config_hash')} "
                    f"does not match current config {cfg_hash}"
                )
            probes.append(params)
        probes_by_seed[seed] = probes
    return probes_by_seed


def cmd_evaluate(cfg: RunConfig) -> int:
    bundle_path = _require(cfg.paths.bundle, "bundle")
    outdir = _out_dir(cfg)
    cfg_hash = config_hash(cfg)

    reader = BundleReader(bundle_path)
    test_sents = _read_split_conllu(outdir, "test")
    probes_by_seed = _load_probes(cfg, outdir, reader.manifest.num_layers, cfg_hash)

    test_items = [(s, reader.get(s.id)) for s in test_sents]
    reader.close()

    series = []
    for seed, probes in sorted(probes_by_seed.items()):
        trees = predicted_trees(probes, test_items)
        series.append((seed, layer_scores(probes, test_items, GLOBAL, trees=trees)))

    groups: dict = {}
    for sent, hidden in test_items:
        groups.setdefault(structure_key(sent), []).append((sent, hidden))
    rows = structure_set_report(
        groups, probes_by_seed, include_global=cfg.reports.include_global
    )

    report_dir = outdir / "reports"
    written = emit_reports(
        report_dir,
        layer_series=series,
        expected_rows=rows,
        svg=cfg.reports.svg,
        meta=_meta(cfg_hash),
    )
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_agreement(cfg: RunConfig) -> int:
    outdir = _out_dir(cfg) / "agreement"
    outdir.mkdir(parents=True, exist_ok=True)
    cfg_hash = config_hash(cfg)
    items_path = outdir / "items.json"

    if not items_path.exists():
        lex = Lexicon.load(cfg.agreement.lexicon_dir)
        items = generate_agreement_pairs(
            cfg.agreement.n_pairs,
            cfg.agreement.seed,
            lex,
            attractor_always_mismatched=cfg.agreement.attractor_always_mismatched,
        )
        payload = items_to_json(items)
        payload["meta"] = _meta(cfg_hash)
        _atomic_write(items_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _atomic_write(outdir / "sentences.txt", write_sentences(items))
        _atomic_write(outdir / "agreement.conllu", write_items_conllu(items))
        print(f"generated {len(items)} agreement pairs -> {outdir}")
        print("fill pll_grammatical/pll_ungrammatical in items.json, then re-run")
        return 0

    obj = json.loads(items_path.read_text(encoding="utf-8"))
    treebank = parse_conllu((outdir / "agreement.conllu").read_text(encoding="utf-8")).sentences
    items = items_from_json(obj, treebank)
    missing = [it.id for it in items if it.pll_grammatical is None or it.pll_ungrammatical is None]
    if missing:
        raise ValidationFailure(
            f"{len(missing)} items missing PLL scores (first: {missing[0]}); "
            "run the extractor's pll step before analysis"
        )

    bundle_path = _require(cfg.paths.agreement_bundle, "agreement_bundle")
    reader = BundleReader(bundle_path)
    check_alignment(reader.manifest, [it.gold for it in items])
    embeddings = {it.id: reader.get(it.id) for it in items}
    probes_by_seed = _load_probes(cfg, _out_dir(cfg), reader.manifest.num_layers, cfg_hash)
    reader.close()

    analysis = agreement_split_analysis(
        items, probes_by_seed, embeddings, tie_policy=cfg.agreement.tie_policy
    )

    def clean(x):
        if isinstance(x, float):
            return None if not np.isfinite(x) else x
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x

    summary = {
        "meta": _meta(cfg_hash),
        "n_items": len(items),
        "n_success": analysis.success.n_items,
        "n_failure": analysis.failure.n_items,
        "n_ties": analysis.n_ties,
        "accuracy": analysis.accuracy,
        "expected_layers": {
            part: {
                name: {"mean": e.mean, "std": e.std, "n_valid": e.n_valid, "per_seed": e.per_seed}
                for name, e in report.expected.items()
            }
            for part, report in (("success", analysis.success), ("failure", analysis.failure))
        },
    }
    _atomic_write(outdir / "analysis.json", json.dumps(clean(summary), indent=2, sort_keys=True) + "\n")
    print(f"analysis: {analysis.success.n_items} success / {analysis.failure.n_items} failure "
          f"({analysis.n_ties} ties) -> {outdir / 'analysis.json'}")

    if cfg.reports.traces and cfg.agreement.trace_ids:
        from .corpus import MACRO, Category

        first_seed = sorted(probes_by_seed)[0]
        traces = []
        by_id = {it.id: it for it in items}
        for sid in cfg.agreement.trace_ids:
            if sid not in by_id:
                raise ValidationFailure(f"trace id {sid!r} not in the agreement items")
            item = by_id[sid]
            cats = [GLOBAL, MACRO, Category.micro("nsubj"), Category.micro("dobj")]
            traces.append(
                derivation_trace(item.gold, embeddings[sid], probes_by_seed[first_seed], cats)
            )
        written = emit_reports(outdir / "traces", traces=traces, svg=cfg.reports.svg, meta=_meta(cfg_hash))
        for path in written:
            print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerprobe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("prepare", "train", "evaluate", "agreement"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run-config JSON")
        if name == "train":
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--resume", action="store_true")
            p.add_argument("--dry-run", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg, workers=args.workers, resume=args.resume, dry_run=args.dry_run)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        return cmd_agreement(cfg)
    except (ValidationFailure, ConfigError, CorpusError, TemplateError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (BundleError, ProbeError, TrainingDiverged, OSError, ValueError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
