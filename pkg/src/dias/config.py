"""Run configuration with JSON loading; every default lives here."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import SynthSpec
from .objective import LossWeights, ObjectiveConfig
from .sampling import BatchSpec


@dataclass
class TrainConfig:
    dim: int = 32
    epochs: int = 30
    lr: float = 5e-4
    lr_decay: float = 0.9
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    beta_init: float = 1.0
    init_scale: float = 0.1
    val_size: int = 200
    negative_clip: float = 100.0
    eval_chunk: int = 16
    seed: int = 0
    batch: BatchSpec = field(default_factory=BatchSpec)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)

    def __post_init__(self):
        self.adam_betas = tuple(self.adam_betas)
        if isinstance(self.batch, dict):
            self.batch = BatchSpec(**self.batch)
        if isinstance(self.objective, dict):
            self.objective = ObjectiveConfig(**self.objective)
        if isinstance(self.synth, dict):
            self.synth = SynthSpec(**self.synth)
        if self.epochs < 0 or self.lr < 0:
            raise ValueError("epochs and lr must be non-negative")

    def to_dict(self) -> dict:
        def plain(v):
            if dataclasses.is_dataclass(v):
                return {f.name: plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
            if isinstance(v, tuple):
                return list(v)
            if hasattr(v, "value"):
                return v.value
            return v
        return plain(self)

    def with_overrides(self, overrides: dict) -> TrainConfig:
        return TrainConfig.from_dict(_merge(self.to_dict(), overrides))

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        obj = data.get("objective")
        if isinstance(obj, dict) and isinstance(obj.get("weights"), dict):
            obj = dict(obj, weights=LossWeights(**obj["weights"]))
            data["objective"] = obj
        return cls(**data)


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, **overrides) -> TrainConfig:
    """Defaults, then the JSON file at ``path``, then keyword overrides."""
    cfg = TrainConfig()
    if path is not None:
        cfg = cfg.with_overrides(json.loads(Path(path).read_text()))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
