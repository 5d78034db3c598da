"""Pipeline configuration: one JSON file, one digest, recorded everywhere.

The config digest is embedded in every output header so artifacts are
traceable to their exact configuration. created_at is part of the config
on purpose: pinning it makes full pipeline runs byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigurationError


@dataclass
class PipelineConfig:
    corpus_store: str = "corpus"
    lexicon_path: str = ""      # empty -> packaged component lexicon
    keywords_path: str = ""     # empty -> packaged keyword list
    role_models: dict = field(default_factory=dict)  # role -> model_id
    default_model: str = "scripted-model"
    T: int = 3
    rewrite_budget: int = 3
    m: int = 4
    theta: float = 0.35
    top_k: int = 3
    context_window: int = 1
    shuffle_seed: int = 0
    sampling_seed: int = 0
    review_fraction: float = 0.2
    run_refine: bool = True
    created_at: str = ""  # pin for reproducible output headers; empty -> now
    tasks: list = field(default_factory=lambda: ["causal", "comparative",
                                                 "quantitative", "hypothetical"])

    def resolved_created_at(self) -> str:
        return self.created_at or time.strftime("%Y-%m-%dT%H:%M:%S")

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def validate(self, check_paths: bool = True) -> None:
        if self.T < 1:
            raise ConfigurationError("T must be >= 1")
        if self.rewrite_budget < 1:
            raise ConfigurationError("rewrite_budget must be >= 1")
        if not 2 <= self.m <= 10:
            raise ConfigurationError("m must be in [2, 10]")
        if not 0 < self.theta <= 1:
            raise ConfigurationError("theta must be in (0, 1]")
        if not 0 < self.review_fraction <= 1:
            raise ConfigurationError("review_fraction must be in (0, 1]")
        if check_paths:
            for label, path in (("lexicon_path", self.lexicon_path),
                                ("keywords_path", self.keywords_path)):
                if path and not Path(path).exists():
                    raise ConfigurationError(f"{label} does not exist: {path}")


def load_config(path: str | Path) -> PipelineConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"unreadable config {path}: {e}")
    known = {f for f in PipelineConfig.__dataclass_fields__}
    unknown = set(obj) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**obj)


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(asdict(config), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
