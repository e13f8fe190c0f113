"""Run configuration: one JSON file drives every pipeline subcommand."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import FilterConfig
from .probe import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    treebank: str = ""
    bundle: str = ""
    output_dir: str = "out"
    agreement_bundle: str = ""


@dataclass
class SplitConfig:
    train: int = 40000
    dev: int = 5000
    test: int = 5000
    seed: int = 0


@dataclass
class AgreementConfig:
    n_pairs: int = 1000
    seed: int = 0
    lexicon_dir: str | None = None
    attractor_always_mismatched: bool = True
    tie_policy: str = "failure"
    trace_ids: list[str] = field(default_factory=list)


@dataclass
class ReportConfig:
    svg: bool = True
    traces: bool = False
    include_global: bool = True


@dataclass
class RunConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    prune_threshold: float = 0.10
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    agreement: AgreementConfig = field(default_factory=AgreementConfig)
    reports: ReportConfig = field(default_factory=ReportConfig)

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds list must be non-empty")
        if not 0 <= self.prune_threshold < 1:
            raise ConfigError("prune_threshold must be in [0, 1)")
        self.train.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filter"]["banned_rels"] = sorted(self.filter.banned_rels)
        return d


def config_from_dict(obj: dict) -> RunConfig:
    cfg = RunConfig()
    if "paths" in obj:
        cfg.paths = PathsConfig(**obj["paths"])
    if "filter" in obj:
        f = dict(obj["filter"])
        if "banned_rels" in f:
            f["banned_rels"] = frozenset(f["banned_rels"])
        cfg.filter = FilterConfig(**f)
    if "split" in obj:
        cfg.split = SplitConfig(**obj["split"])
    if "train" in obj:
        cfg.train = TrainConfig(**obj["train"])
    if "agreement" in obj:
        cfg.agreement = AgreementConfig(**obj["agreement"])
    if "reports" in obj:
        cfg.reports = ReportConfig(**obj["reports"])
    if "prune_threshold" in obj:
        cfg.prune_threshold = float(obj["prune_threshold"])
    if "seeds" in obj:
        cfg.seeds = list(obj["seeds"])
    unknown = set(obj) - {
        "paths", "filter", "split", "train", "agreement", "reports", "prune_threshold", "seeds",
    }
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err
    try:
        return config_from_dict(obj)
    except TypeError as err:
        raise ConfigError(f"{path}: {err}") from err


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
