"""Training configuration: dataclasses, strict YAML loading, overrides and hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from ..errors import ConfigError
from ..losses import ABLATIONS, LossWeights
from ..nets.spec import NetSpec


@dataclass(frozen=True)
class LearningRates:
    flow_generator: float = 1e-5
    image_generator: float = 1e-5
    patch_discriminator: float = 1e-4
    expression_discriminator: float = 1e-4


@dataclass(frozen=True)
class OptimizerConfig:
    adam_betas: Tuple[float, float] = (0.5, 0.999)
    sgd_momentum: float = 0.0


@dataclass(frozen=True)
class DecayConfig:
    kind: str = "linear"  # "linear" or "none"
    final_fraction: float = 0.1


@dataclass(frozen=True)
class PerceptualConfig:
    backend: str = "vgg16"  # "vgg16" or "random"
    weights_path: Optional[str] = None
    widths: Tuple[int, ...] = (16, 32, 64)
    seed: int = 0


@dataclass(frozen=True)
class ScorerConfig:
    backend: str = "builtin"  # "builtin" or "torchscript"
    path: Optional[str] = None
    pretrain_epochs: int = 10
    lr: float = 1e-4  # 1e-3 collapses the small classifier to a single class


@dataclass(frozen=True)
class FoldConfig:
    k: int = 10
    seed: int = 0
    subject_disjoint: bool = False


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 15
    batch_size: int = 4
    clip_threshold: float = 10.0
    ablation: str = "full"
    # flow fed to the image generator in its own step: the (detached) frontalized flow, or the ground truth
    warping_input: str = "generated"
    checkpoint_every: int = 1
    lr: LearningRates = field(default_factory=LearningRates)
    optim: OptimizerConfig = field(default_factory=OptimizerConfig)
    lr_decay: DecayConfig = field(default_factory=DecayConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    nets: NetSpec = field(default_factory=NetSpec)
    perceptual: PerceptualConfig = field(default_factory=PerceptualConfig)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    folds: FoldConfig = field(default_factory=FoldConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not self.clip_threshold > 0:
            raise ConfigError("clip_threshold must be positive")
        for name, value in dataclasses.asdict(self.lr).items():
            if not value > 0:
                raise ConfigError(f"learning rate {name} must be positive")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")
        if self.warping_input not in ("target", "generated"):
            raise ConfigError("warping_input must be 'target' or 'generated'")
        if self.lr_decay.kind not in ("linear", "none"):
            raise ConfigError("lr_decay.kind must be 'linear' or 'none'")
        if not 0 < self.lr_decay.final_fraction <= 1:
            raise ConfigError("lr_decay.final_fraction must be in (0, 1]")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be at least 1")
        if self.folds.k < 2:
            raise ConfigError("folds.k must be at least 2")


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(f'{where}{k}' for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(hints[name], value, f"{where}{name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where + ".")
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        return None if value is None else _coerce(args[0], value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        inner = typing.get_args(tp)[0]
        return tuple(_coerce(inner, v, where) for v in value)
    if tp is bool:
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if tp in (int, float, str):
        try:
            if tp is int and isinstance(value, float) and not value.is_integer():
                raise ValueError
            return tp(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected {tp.__name__}, got {value!r}") from None
    return value


def config_from_dict(data: Dict[str, Any]) -> TrainConfig:
    return _build(TrainConfig, data or {}, "")


def config_to_dict(cfg) -> dict:
    def plain(x):
        if isinstance(x, tuple):
            return [plain(v) for v in x]
        if isinstance(x, dict):
            return {k: plain(v) for k, v in x.items()}
        return x
    return plain(dataclasses.asdict(cfg))


def config_hash(cfg: TrainConfig) -> str:
    return hashlib.sha256(json.dumps(config_to_dict(cfg), sort_keys=True).encode()).hexdigest()[:16]


def _set_dotted(d: dict, dotted: str, value):
    keys = dotted.split(".")
    cur = d
    for k in keys[:-1]:
        nxt = cur.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {dotted!r}: {k} is not a section")
        cur = nxt
    cur[keys[-1]] = value


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` strings; values are parsed as YAML scalars/lists."""
    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"override {item!r}: unparsable value") from None
        _set_dotted(data, key.strip(), value)
    return data


ENV_PREFIX = "EMOTIONGAN_"


def env_overrides(environ=None) -> list:
    """``EMOTIONGAN_CFG__SCORER__LR=0.01`` → ``scorer.lr=0.01`` (double underscore separates sections)."""
    environ = os.environ if environ is None else environ
    out = []
    for k, v in sorted(environ.items()):
        if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):].startswith("CFG__"):
            dotted = k[len(ENV_PREFIX) + 5:].lower().replace("__", ".")
            out.append(f"{dotted}={v}")
    return out


def load_config(path=None, overrides=None) -> TrainConfig:
    data = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(apply_overrides(data, overrides))


def dump_config(cfg: TrainConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
    return path


def reference_config() -> TrainConfig:
    """Full-width networks and the original training settings."""
    return TrainConfig()


def toy_config(**changes) -> TrainConfig:
    """Desk-scale preset: quarter-width networks, seeded perceptual trunk, faster learning rates."""
    base = TrainConfig(
        epochs=15,
        nets=NetSpec().scaled(4),
        lr=LearningRates(flow_generator=1e-3, image_generator=1e-3, patch_discriminator=1e-3,
                         expression_discriminator=1e-3),
        optim=OptimizerConfig(sgd_momentum=0.9),
        perceptual=PerceptualConfig(backend="random"),
        scorer=ScorerConfig(pretrain_epochs=25),
    )
    return dataclasses.replace(base, **changes)
