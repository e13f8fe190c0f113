#!/usr/bin/env python3
"""End-to-end demo on synthetic data: build a 4-layer bundle in which the
subject phrase becomes decodable at layer 1 and the root attachments only
at layer 3, run prepare/train/evaluate through the CLI, and print the
expected-layer table.

Usage: python scripts/run_emergence_demo.py [workdir]
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from layerprobe.bundles import BundleManifest, write_bundle
from layerprobe.cli import main
from layerprobe.corpus import parse_conllu, to_conllu
from layerprobe.synthetic import emergence_hidden
from layerprobe.templates import generate_agreement_pairs


def run(workdir: Path) -> None:
    workdir.mkdir(parents=True, exist_ok=True)
    pairs = generate_agreement_pairs(300, seed=4)
    sents = [p.gold for p in pairs]
    width = max(len(s) for s in sents) - 1

    treebank = workdir / "treebank.conllu"
    treebank.write_text("".join(to_conllu(s) + "\n" for s in sents), encoding="utf-8")
    config_path = workdir / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "paths": {
                    "treebank": str(treebank),
                    "bundle": str(workdir / "bundle.bin"),
                    "output_dir": str(workdir / "out"),
                },
                "split": {"train": 220, "dev": 40, "test": 40, "seed": 0},
                "train": {"epochs": 40, "seed": 0},
                "seeds": [0],
                "reports": {"svg": True, "include_global": True},
            },
            indent=2,
        )
    )

    assert main(["prepare", "--config", str(config_path)]) == 0

    retained = parse_conllu(
        (workdir / "out" / "prepared" / "retained.conllu").read_text()
    ).sentences
    rng = np.random.default_rng(11)
    write_bundle(
        workdir / "bundle.bin",
        BundleManifest("emergence-demo", 3, 3 * width),
        [(s.id, emergence_hidden(s, rng, width)) for s in retained],
    )

    assert main(["train", "--config", str(config_path)]) == 0
    assert main(["evaluate", "--config", str(config_path)]) == 0

    report = json.loads((workdir / "out" / "reports" / "expected_layers.json").read_text())
    print("\nexpected layers (group x category):")
    for row in report["rows"]:
        e = "invalid" if row["e_mean"] is None else f"{row['e_mean']:.2f}"
        print(f"  {row['group']:>12}  {row['category']:<14} E = {e}")


if __name__ == "__main__":
    run(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out"))
