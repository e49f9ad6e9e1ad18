"""Pipeline configuration: a TOML file with one table per stage.

Unknown tables or keys are rejected. Relative paths resolve against the
directory holding the config file. Every stage derives its random seed from
``run.seed`` with a fixed offset (see :data:`SEED_OFFSETS`).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .classifier import SCHEDULES, SCORE_SPACES, TrainConfig
from .corpus import DEFAULT_LABELS
from .discriminant import ORDERS
from .errors import ConfigError
from .phonotactic import WEIGHTINGS

FUSION_MODES = ("feature", "score", "concat")
SEED_OFFSETS = {"split": 0, "ubm": 1, "tv": 2, "classifier": 3}


@dataclass(frozen=True)
class CorpusConfig:
    train_manifest: str = ""
    test_manifest: Optional[str] = None
    test_fraction: float = 0.2
    label_set: tuple = DEFAULT_LABELS


@dataclass(frozen=True)
class PhonotacticConfig:
    orders: tuple = (2, 3)
    d_cap: int = 8000
    k: int = 1200
    weighting: str = "raw"
    center: bool = False


@dataclass(frozen=True)
class AcousticConfig:
    g: int = 2048
    r: int = 400
    ubm_iters: int = 10
    tv_iters: int = 5
    var_floor: Optional[float] = None
    min_divergence: bool = False
    length_norm: bool = False


@dataclass(frozen=True)
class CcaConfig:
    c: int = 300
    ridge: float = 1e-6


@dataclass(frozen=True)
class DiscriminantConfig:
    m: int = 0
    lda_ridge: float = 1e-6
    wccn_ridge: float = 1e-6
    order: str = "lda_wccn"


@dataclass(frozen=True)
class ClassifierConfig:
    l1_ratio: float = 0.5
    l2_ratio: float = 0.5
    reg_strength: float = 1e-4
    learning_rate: float = 0.1
    schedule: str = "invscaling"
    epochs: int = 20
    batch: int = 10
    standardize: bool = True


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "concat"
    score_weights: tuple = (0.5, 0.5)
    score_space: str = "prob"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: str = "out"


@dataclass(frozen=True)
class PipelineConfig:
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    phonotactic: PhonotacticConfig = field(default_factory=PhonotacticConfig)
    acoustic: AcousticConfig = field(default_factory=AcousticConfig)
    cca: CcaConfig = field(default_factory=CcaConfig)
    discriminant: DiscriminantConfig = field(default_factory=DiscriminantConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    run: RunConfig = field(default_factory=RunConfig)
    base_dir: str = field(default=".", compare=False)

    def path(self, p: str) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def seed(self, stage: str) -> int:
        return self.run.seed + SEED_OFFSETS[stage]

    def train_config(self) -> TrainConfig:
        c = self.classifier
        return TrainConfig(c.l1_ratio, c.l2_ratio, c.reg_strength, c.learning_rate, c.schedule,
                           c.epochs, c.batch, self.seed("classifier"), c.standardize)

    def hash(self) -> str:
        """SHA-256 of every setting except the output directory."""
        body = to_dict(self)
        body["run"].pop("out_dir")
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    def with_overrides(self, seed: int = None, out_dir: str = None) -> "PipelineConfig":
        run = self.run
        if seed is not None:
            run = dataclasses.replace(run, seed=seed)
        if out_dir is not None:
            run = dataclasses.replace(run, out_dir=str(Path(out_dir).resolve()))
        return dataclasses.replace(self, run=run)


_SECTION_TYPES = {
    "corpus": CorpusConfig, "phonotactic": PhonotacticConfig, "acoustic": AcousticConfig,
    "cca": CcaConfig, "discriminant": DiscriminantConfig, "classifier": ClassifierConfig,
    "fusion": FusionConfig, "run": RunConfig,
}
_CHOICES = {
    ("phonotactic", "weighting"): WEIGHTINGS,
    ("discriminant", "order"): ORDERS,
    ("classifier", "schedule"): SCHEDULES,
    ("fusion", "mode"): FUSION_MODES,
    ("fusion", "score_space"): SCORE_SPACES,
}


def to_dict(cfg: PipelineConfig) -> dict:
    out = {}
    for name in _SECTION_TYPES:
        out[name] = {k: list(v) if isinstance(v, tuple) else v
                     for k, v in dataclasses.asdict(getattr(cfg, name)).items()}
    return out


def _coerce(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float) or (section, key) == ("acoustic", "var_floor"):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return tuple(value)
    if not isinstance(value, str):
        raise ConfigError(f"{where} must be a string")
    return value


def from_dict(raw: dict, base_dir=".") -> PipelineConfig:
    unknown = set(raw) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        table = raw.get(name, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        defaults = cls()
        allowed = {f.name for f in dataclasses.fields(cls)}
        extra = set(table) - allowed
        if extra:
            raise ConfigError(f"unknown key {name}.{sorted(extra)[0]}")
        values = {k: _coerce(name, k, v, getattr(defaults, k)) for k, v in table.items()}
        for key, value in values.items():
            choices = _CHOICES.get((name, key))
            if choices is not None and value not in choices:
                raise ConfigError(f"{name}.{key} must be one of {choices}, got {value!r}")
        sections[name] = cls(**values)
    cfg = PipelineConfig(**sections, base_dir=str(base_dir))
    validate(cfg)
    return cfg


def validate(cfg: PipelineConfig) -> None:
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(f"{key} {msg}")

    need(cfg.corpus.train_manifest, "corpus.train_manifest", "is required")
    need(0 < cfg.corpus.test_fraction < 1, "corpus.test_fraction", "must lie in (0, 1)")
    need(len(cfg.corpus.label_set) >= 2, "corpus.label_set", "needs at least two labels")
    need(all(isinstance(x, str) for x in cfg.corpus.label_set), "corpus.label_set", "must hold strings")
    need(len(set(cfg.corpus.label_set)) == len(cfg.corpus.label_set), "corpus.label_set", "has duplicates")
    need(cfg.phonotactic.orders and all(isinstance(o, int) and o >= 1 for o in cfg.phonotactic.orders),
         "phonotactic.orders", "must be positive integers")
    need(cfg.phonotactic.d_cap >= 1, "phonotactic.d_cap", "must be >= 1")
    need(1 <= cfg.phonotactic.k <= cfg.phonotactic.d_cap, "phonotactic.k", "must lie in [1, d_cap]")
    need(cfg.acoustic.g >= 1, "acoustic.g", "must be >= 1")
    need(cfg.acoustic.r >= 1, "acoustic.r", "must be >= 1")
    need(cfg.acoustic.ubm_iters >= 0, "acoustic.ubm_iters", "must be >= 0")
    need(cfg.acoustic.tv_iters >= 0, "acoustic.tv_iters", "must be >= 0")
    need(cfg.acoustic.var_floor is None or cfg.acoustic.var_floor > 0, "acoustic.var_floor", "must be > 0")
    need(1 <= cfg.cca.c <= min(cfg.phonotactic.k, cfg.acoustic.r), "cca.c", "must lie in [1, min(k, r)]")
    need(cfg.cca.ridge >= 0, "cca.ridge", "must be >= 0")
    need(0 <= cfg.discriminant.m <= len(cfg.corpus.label_set) - 1, "discriminant.m",
         "must lie in [0, C-1] (0 selects C-1)")
    need(cfg.discriminant.lda_ridge >= 0, "discriminant.lda_ridge", "must be >= 0")
    need(cfg.discriminant.wccn_ridge >= 0, "discriminant.wccn_ridge", "must be >= 0")
    need(len(cfg.fusion.score_weights) == 2, "fusion.score_weights", "needs two weights (X_P, X_A)")
    need(all(isinstance(w, (int, float)) and w >= 0 for w in cfg.fusion.score_weights)
         and sum(cfg.fusion.score_weights) > 0, "fusion.score_weights", "must be >= 0, not all zero")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(f"classifier: {exc}") from None


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(raw, path.parent.resolve())


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return json.dumps(v)


def dump_config(cfg: PipelineConfig) -> str:
    """Render a config as TOML text that :func:`load_config` reads back."""
    lines = []
    for section, table in to_dict(cfg).items():
        lines.append(f"[{section}]")
        for key, value in table.items():
            if value is not None:
                lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)
