"""Run configuration read from an INI file.

Sections and their keys::

    [run]        seed, checkpoint_every, adversarial, stride, workers
    [split]      train, val, test
    [data]       corpus, processed
    [plan]       DimensionPlan fields
    [loss]       LossWeights fields
    [optim]      OptimizerConfig fields
    [evaluate]   ae_epochs, ae_d_enc, ae_hidden, ae_lr
    [synthetic]  SyntheticCorpusSpec fields

Every key is optional; unknown sections or keys are rejected.
"""

import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .exceptions import ConfigError
from .nn import DimensionPlan
from .synthetic import SyntheticCorpusSpec
from .training import LossWeights, OptimizerConfig

WORKERS_ENV = "COSPEECH_WORKERS"


def _parse(value, like):
    if isinstance(like, bool):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    try:
        return type(like)(value) if like is not None else value
    except ValueError:
        raise ConfigError(f"cannot parse {value!r} as {type(like).__name__}") from None


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    checkpoint_every: int = 50
    adversarial: bool = True
    stride: int = 10
    workers: int = 1


@dataclass(frozen=True)
class SplitRatios:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1

    def __post_init__(self):
        vals = (self.train, self.val, self.test)
        if any(v < 0 for v in vals) or abs(sum(vals) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must be nonnegative and sum to 1, got {vals}")

    def as_tuple(self):
        return (self.train, self.val, self.test)


@dataclass(frozen=True)
class DataPaths:
    corpus: str = ""
    processed: str = ""


@dataclass(frozen=True)
class EvaluateSettings:
    ae_epochs: int = 300
    ae_d_enc: int = 32
    ae_hidden: int = 64
    ae_lr: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    split: SplitRatios = field(default_factory=SplitRatios)
    data: DataPaths = field(default_factory=DataPaths)
    plan: DimensionPlan = field(default_factory=DimensionPlan)
    loss: LossWeights = field(default_factory=LossWeights)
    optim: OptimizerConfig = field(default_factory=OptimizerConfig)
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)
    synthetic: SyntheticCorpusSpec = field(default_factory=SyntheticCorpusSpec)

    def with_seed(self, seed):
        if seed is None:
            return self
        return replace(self, run=replace(self.run, seed=int(seed)),
                       synthetic=replace(self.synthetic, seed=int(seed)))

    @property
    def workers(self):
        env = os.environ.get(WORKERS_ENV)
        return max(1, int(env)) if env else self.run.workers


def _section(cls, items, name):
    defaults = cls()
    known = {f.name: getattr(defaults, f.name) for f in fields(cls)}
    kwargs = {}
    for key, value in items:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        kwargs[key] = _parse(value, known[key])
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def load_config(path=None):
    """Read ``path`` (or return defaults when ``path`` is ``None``)."""
    if path is None:
        return RunConfig()
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    types = {f.name: f.default_factory for f in fields(RunConfig)}
    parts = {}
    for name in parser.sections():
        if name not in types:
            raise ConfigError(f"unknown section [{name}]")
        parts[name] = _section(types[name], parser.items(name), name)
    return RunConfig(**parts)


def dump_config(cfg, path):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for f in fields(cfg):
        part = getattr(cfg, f.name)
        parser[f.name] = {g.name: str(getattr(part, g.name)) for g in fields(part)}
    with open(path, "w") as fh:
        parser.write(fh)
