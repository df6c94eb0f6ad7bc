"""Runtime configuration: every detection threshold and training knob,
loadable from a JSON file with command-line overrides on top."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .embedding import TrainParams
from .pipeline import DetectionConfig


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    anchor_threshold: float = 0.72
    structure_threshold: float = 0.8
    alignment_threshold: int = 3
    min_blocks: int = 5
    min_instrs: int = 10
    top_tpls: int = 200
    top_fns: int = 100
    max_stale: int = 100
    enrich: bool = True
    seed: int = 0
    jobs: int = 0  # 0 = logical cores
    search: str = "exact"
    tasks: str = "both"
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    embed_dim: int = 64
    iterations: int = 5
    sigma_layers: int = 2
    margin: float = 0.2

    def validate(self) -> None:
        checks = [
            (-1.0 <= self.anchor_threshold <= 1.0, "anchor_threshold must be in [-1, 1]"),
            (-1.0 <= self.structure_threshold <= 1.0, "structure_threshold must be in [-1, 1]"),
            (self.alignment_threshold >= 1, "alignment_threshold must be >= 1"),
            (self.min_blocks >= 0 and self.min_instrs >= 0, "eligibility bounds must be >= 0"),
            (self.top_tpls >= 1 and self.top_fns >= 1, "top_tpls/top_fns must be >= 1"),
            (self.max_stale >= 1, "max_stale must be >= 1"),
            (self.jobs >= 0, "jobs must be >= 0"),
            (self.search in ("exact", "approx"), "search must be exact or approx"),
            (self.tasks in ("tpl", "area", "both"), "tasks must be tpl, area or both"),
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.batch_size >= 1 and self.epochs >= 1, "batch_size/epochs must be >= 1"),
            (self.embed_dim >= 1 and self.iterations >= 1 and self.sigma_layers >= 1, "model shape invalid"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @staticmethod
    def from_file(path: Path) -> "Config":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in dataclasses.fields(Config)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = Config(**obj)
        cfg.validate()
        return cfg

    def override(self, **kwargs) -> "Config":
        updates = {k: v for k, v in kwargs.items() if v is not None}
        cfg = dataclasses.replace(self, **updates)
        cfg.validate()
        return cfg

    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def detection(self) -> DetectionConfig:
        return DetectionConfig(
            anchor_threshold=self.anchor_threshold,
            structure_threshold=self.structure_threshold,
            alignment_threshold=self.alignment_threshold,
            min_blocks=self.min_blocks,
            min_instrs=self.min_instrs,
            top_tpls=self.top_tpls,
            top_fns=self.top_fns,
            max_stale=self.max_stale,
            enrich=self.enrich,
            seed=self.seed,
            jobs=self.effective_jobs(),
            search_mode=self.search,
            tasks=self.tasks,
        )

    def train_params(self) -> TrainParams:
        return TrainParams(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            margin=self.margin,
            embed_dim=self.embed_dim,
            iterations=self.iterations,
            n_sigma_layers=self.sigma_layers,
        )
