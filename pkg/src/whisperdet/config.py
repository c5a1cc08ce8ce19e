"""The pipeline configuration document (JSON).

Every section is optional; omitted keys keep their defaults and unknown
keys are rejected. ``--set section.key=value`` overrides from the command
line are applied before validation.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from .audio_io import FrameSpec
from .errors import ConfigError
from .features import AcmaxConfig, FeatureConfig, HfeConfig, LfbeConfig, SrhConfig
from .inference import parse_module
from .neural import TrainConfig
from .synth import CorpusConfig


@dataclass(frozen=True)
class ModelConfig:
    mlp_hidden: tuple = (128, 128, 64)
    lstm_hidden: int = 64
    lstm_layers: int = 2


@dataclass(frozen=True)
class PathsConfig:
    corpus: str = "corpus"
    features: str = "features"
    models: str = "models"
    reports: str = "reports"


@dataclass(frozen=True)
class PipelineConfig:
    features: FeatureConfig = FeatureConfig()
    train: TrainConfig = TrainConfig()
    model: ModelConfig = ModelConfig()
    inference: str = "mean"
    target_fpr: float = 0.001
    corpus: CorpusConfig = CorpusConfig()
    workers: int = 1
    paths: PathsConfig = field(default_factory=PathsConfig)

    @property
    def inference_spec(self):
        return parse_module(self.inference)


_FEATURE_SECTIONS = {"frame": FrameSpec, "lfbe": LfbeConfig, "srh": SrhConfig,
                     "hfe": HfeConfig, "acmax": AcmaxConfig}


def _coerce(default, value, where):
    if isinstance(default, enum.Enum):
        try:
            return type(default)(value)
        except ValueError:
            raise ConfigError(f"{where}: invalid value {value!r}") from None
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    base = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {k: _coerce(getattr(base, k), v, f"{where}.{k}") for k, v in data.items()}
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    doc = dict(doc)
    allowed = {f.name for f in dataclasses.fields(PipelineConfig)} | set(_FEATURE_SECTIONS)
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    feat_sections = {k: _build(c, doc.pop(k, {}), k) for k, c in _FEATURE_SECTIONS.items()}
    if "features" in doc:
        raise ConfigError("use the frame/lfbe/srh/hfe/acmax sections for feature settings")
    feats = FeatureConfig(**feat_sections)
    try:
        feats.srh.validate()
        feats.hfe.band_masks()
        feats.acmax.lag_range()
        feats.lfbe.band(16000)
        feats.frame.frame_len(16000)
        feats.frame.frame_shift(16000)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    cfg = PipelineConfig(
        features=feats,
        train=_build(TrainConfig, doc.get("train", {}), "train"),
        model=_build(ModelConfig, doc.get("model", {}), "model"),
        inference=str(doc.get("inference", "mean")),
        target_fpr=float(doc.get("target_fpr", 0.001)),
        corpus=_build(CorpusConfig, doc.get("corpus", {}), "corpus"),
        workers=int(doc.get("workers", 1)),
        paths=_build(PathsConfig, doc.get("paths", {}), "paths"),
    )
    cfg.inference_spec  # validates the module name
    if not 0 <= cfg.target_fpr <= 1:
        raise ConfigError("target_fpr must lie in [0, 1]")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if len(cfg.model.mlp_hidden) != 3:
        raise ConfigError("model.mlp_hidden needs exactly three sizes")
    cfg.corpus.validate()
    return cfg


def apply_override(doc, assignment):
    """Apply ``"a.b=value"`` to a nested dict; *value* is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = value
    return doc


def load_config(path=None, overrides=()):
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
    for o in overrides:
        apply_override(doc, o)
    return config_from_dict(doc)


def config_to_dict(cfg):
    snap = cfg.features.snapshot()
    out = dict(snap)

    def plain(obj):
        d = dataclasses.asdict(obj)
        return json.loads(json.dumps(d, default=lambda o: o.value if isinstance(o, enum.Enum) else str(o)))
    out.update(
        train=plain(cfg.train),
        model=plain(cfg.model),
        inference=cfg.inference,
        target_fpr=cfg.target_fpr,
        corpus=plain(cfg.corpus),
        workers=cfg.workers,
        paths=plain(cfg.paths),
    )
    return out
