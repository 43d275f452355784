"""Run configuration: an INI file with dotted ``section.key=value`` overrides."""

from __future__ import annotations

import configparser
import zlib
from dataclasses import dataclass, field

import numpy as np

from .foldin import STRATEGIES, SgdFoldInConfig
from .model import KINDS, TrainConfig


def derive_seed(seed: int, purpose: str) -> int:
    """Independent 32-bit seed per purpose, so adding a consumer never shifts another."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(purpose.encode()),))
    return int(ss.generate_state(1)[0])


@dataclass
class BenchConfig:
    rank: int = 32
    sizes: tuple[int, ...] = (10**3, 10**4, 10**5, 10**6)
    trials: int = 100
    sgd_steps: int = 50
    sgd_learning_rate: float = 0.1
    sgd_max_size: int = 10**5


@dataclass
class RunConfig:
    data_path: str = ""
    data_format: str = "auto"
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    min_user_count: int = 0
    min_item_count: int = 0
    model_kind: str = "ultragcn"
    train: TrainConfig = field(default_factory=TrainConfig)
    strategies: tuple[str, ...] = ("zero", "mean", "linear", "sgd")
    sgd: SgdFoldInConfig = field(default_factory=SgdFoldInConfig)
    tune_sgd: bool = False
    ks: tuple[int, ...] = (5, 10)
    output_dir: str = "runs/default"
    seed: int = 0
    bench: BenchConfig = field(default_factory=BenchConfig)

    def train_config(self) -> TrainConfig:
        """The training config with its seed derived from the run seed."""
        t = self.train
        return TrainConfig(t.rank, t.lam, t.negatives_per_positive, t.learning_rate,
                           t.epochs, t.batch_size, t.init_scale, derive_seed(self.seed, "train"))


def _ints(s):
    return tuple(int(float(x)) for x in s.replace(",", " ").split())


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _names(s):
    return tuple(x for x in s.replace(",", " ").split())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# section.key -> (target path, parser)
_KEYS = {
    "data.path": ("data_path", str),
    "data.format": ("data_format", str),
    "data.fractions": ("fractions", _floats),
    "data.min_user_count": ("min_user_count", int),
    "data.min_item_count": ("min_item_count", int),
    "model.kind": ("model_kind", str),
    "model.rank": ("train.rank", int),
    "model.lambda": ("train.lam", float),
    "model.negatives_per_positive": ("train.negatives_per_positive", int),
    "model.learning_rate": ("train.learning_rate", float),
    "model.epochs": ("train.epochs", int),
    "model.batch_size": ("train.batch_size", int),
    "model.init_scale": ("train.init_scale", float),
    "foldin.strategies": ("strategies", _names),
    "foldin.sgd_steps": ("sgd.steps", int),
    "foldin.sgd_learning_rate": ("sgd.learning_rate", float),
    "foldin.sgd_mix": ("sgd.mix", float),
    "foldin.sgd_init": ("sgd.init", str),
    "foldin.tune_sgd": ("tune_sgd", _bool),
    "eval.ks": ("ks", _ints),
    "bench.rank": ("bench.rank", int),
    "bench.sizes": ("bench.sizes", _ints),
    "bench.trials": ("bench.trials", int),
    "bench.sgd_steps": ("bench.sgd_steps", int),
    "bench.sgd_learning_rate": ("bench.sgd_learning_rate", float),
    "bench.sgd_max_size": ("bench.sgd_max_size", int),
    "run.output_dir": ("output_dir", str),
    "run.seed": ("seed", int),
}


def _assign(cfg: RunConfig, dotted: str, raw: str) -> None:
    if dotted not in _KEYS:
        raise ValueError(f"unknown config key {dotted!r}")
    target, parse = _KEYS[dotted]
    value = parse(raw.strip())
    obj = cfg
    *parents, attr = target.split(".")
    for p in parents:
        obj = getattr(obj, p)
    setattr(obj, attr, value)


def load_config(path=None, overrides=()) -> RunConfig:
    """Read an INI file (optional) and apply ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for key, raw in parser.items(section):
                _assign(cfg, f"{section}.{key}", raw)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not of the form section.key=value")
        key, raw = item.split("=", 1)
        _assign(cfg, key.strip(), raw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.model_kind not in KINDS:
        raise ValueError(f"model.kind must be one of {KINDS}")
    bad = [s for s in cfg.strategies if s not in STRATEGIES]
    if bad:
        raise ValueError(f"unknown strategies {bad}; choose from {STRATEGIES}")
    if cfg.model_kind == "puresvd":
        wrong = [s for s in cfg.strategies if s in ("linear", "wls", "sgd", "full")]
        if wrong:
            raise ValueError(f"strategies {wrong} need an UltraGCN model")
    if not cfg.ks or min(cfg.ks) < 1:
        raise ValueError("eval.ks must be positive integers")
    # re-run dataclass validation after field assignment
    TrainConfig(**vars(cfg.train))
    SgdFoldInConfig(**vars(cfg.sgd))
