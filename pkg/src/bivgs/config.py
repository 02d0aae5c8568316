"""Run configuration: one flat YAML mapping of ``key: value`` pairs.

Keys are the field names of :class:`~bivgs.datagen.GenerationConfig`,
:class:`~bivgs.trainer.TrainConfig` (minus ``seed``), the frontend keys
``frame_ms``, ``hop_ms``, ``floor_epsilon``, ``fft_size``, and the run keys
below. Unknown keys are rejected.

Run keys:
    variants     list of variant names (default: all five)
    seeds        list of integer seeds (default: [0, 1, 2])
    out_dir      output directory (default: ``runs``; ``OUT_DIR`` overrides)
    workers      parallel (variant, seed) cells in run-matrix (default: 1)
    figures      render PNG figures in run-matrix (default: true)
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .audiofeat import FrontendConfig
from .datagen import GenerationConfig
from .errors import ConfigError
from .trainer import TrainConfig, TrainVariant

FRONTEND_KEYS = ("frame_ms", "hop_ms", "floor_epsilon", "fft_size")
RUN_KEYS = ("variants", "seeds", "out_dir", "workers", "figures")


def _train_keys():
    return tuple(f.name for f in fields(TrainConfig) if f.name not in ("seed", "progress"))


def _gen_keys():
    return tuple(f.name for f in fields(GenerationConfig))


def known_keys() -> set[str]:
    return set(_gen_keys()) | set(_train_keys()) | set(FRONTEND_KEYS) | set(RUN_KEYS)


@dataclass
class RunConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variants: list[TrainVariant] = field(default_factory=lambda: list(TrainVariant))
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    out_dir: str = "runs"
    workers: int = 1
    figures: bool = True

    def train_config(self, seed: int, progress: bool = False) -> TrainConfig:
        return replace(self.train, seed=seed, progress=progress)

    def frontend_for(self, frames: int) -> FrontendConfig:
        return replace(self.frontend, target_frames=frames)


def _coerce(key: str, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    return value


def _pick(raw: dict, cls, keys) -> dict:
    defaults = cls()
    out = {}
    for k in keys:
        if k in raw:
            d = getattr(defaults, k)
            out[k] = raw[k] if d is None else _coerce(k, raw[k], d)
    return out


def parse_config(raw: dict | None) -> RunConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat mapping of key: value pairs")
    unknown = sorted(set(raw) - known_keys())
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for k, v in raw.items():
        if isinstance(v, dict):
            raise ConfigError(f"{k}: nested mappings are not allowed (the file is flat)")
    gen = GenerationConfig(**_pick(raw, GenerationConfig, _gen_keys()))
    fe_kw = _pick(raw, FrontendConfig, FRONTEND_KEYS)
    fe = FrontendConfig(n_mels=gen.n_mels, sample_rate=gen.sample_rate, **fe_kw)
    tr = TrainConfig(**_pick(raw, TrainConfig, _train_keys()))
    cfg = RunConfig(generation=gen, frontend=fe, train=tr)
    if "variants" in raw:
        names = raw["variants"]
        if isinstance(names, str):
            names = [names]
        cfg.variants = [TrainVariant.parse(str(n)) for n in names]
    if "seeds" in raw:
        seeds = raw["seeds"]
        seeds = [seeds] if isinstance(seeds, int) else seeds
        if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            raise ConfigError(f"seeds: expected a list of integers, got {raw['seeds']!r}")
        cfg.seeds = list(seeds)
    if "out_dir" in raw:
        cfg.out_dir = str(raw["out_dir"])
    if "workers" in raw:
        cfg.workers = _coerce("workers", raw["workers"], 1)
        if cfg.workers < 1:
            raise ConfigError("workers must be >= 1")
    if "figures" in raw:
        cfg.figures = _coerce("figures", raw["figures"], True)
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: not valid YAML ({exc})") from None
    try:
        cfg = parse_config(raw)
    except (ConfigError, TypeError) as exc:
        raise ConfigError(f"{p}: {exc}") from None
    if os.environ.get("OUT_DIR"):
        cfg.out_dir = os.environ["OUT_DIR"]
    return cfg
