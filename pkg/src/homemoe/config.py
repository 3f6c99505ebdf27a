"""Run configuration: one YAML/JSON document with data, model, train and threshold sections."""

import copy
from dataclasses import dataclass, field

import yaml

from .data import DatasetSpec
from .diagnostics import Thresholds
from .layers import ConfigError
from .models import ModelConfig
from .train import TrainConfig

SECTIONS = ("data", "model", "train", "thresholds", "out_dir")


@dataclass
class RunConfig:
    data: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    out_dir: str = "runs/demo"

    @property
    def tasks(self):
        return self.data.tasks

    def validate(self):
        self.data.validate()
        self.model.validate()
        self.train.validate()
        if self.model.input_width != self.data.feature_width:
            raise ConfigError(f"model.input_width {self.model.input_width} != data.feature_width "
                              f"{self.data.feature_width}")
        return self

    def to_dict(self):
        return {
            "data": self.data.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "thresholds": vars(self.thresholds).copy(),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, doc):
        doc = doc or {}
        unknown = set(doc) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        data = DatasetSpec.from_dict(doc.get("data", {}))
        model = doc.get("model", {})
        # a HoME ablation can be named instead of spelling out the flags
        variant = model.pop("variant", None) if isinstance(model, dict) else None
        model = dict(model)
        model.setdefault("input_width", data.feature_width)
        mc = ModelConfig.variant(variant, **model) if variant else ModelConfig.from_dict(model)
        return cls(data=data, model=mc, train=TrainConfig.from_dict(doc.get("train", {})),
                   thresholds=Thresholds.from_dict(doc.get("thresholds", {})),
                   out_dir=doc.get("out_dir", "runs/demo"))


def apply_overrides(doc, overrides):
    """``["model.architecture=mmoe", "train.epochs=1"]`` -> nested updates (values parsed as YAML)."""
    doc = copy.deepcopy(doc or {})
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p} is not a section")
        node[parts[-1]] = yaml.safe_load(raw)
    return doc


def load_document(path):
    with open(path) as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return text, doc or {}


def load_run_config(path=None, overrides=None):
    """Returns (RunConfig, original text or None)."""
    text, doc = load_document(path) if path else (None, {})
    cfg = RunConfig.from_dict(apply_overrides(doc, overrides))
    return cfg.validate(), text


def load_dataset_spec(path, overrides=None):
    """A bare dataset spec or a full run config (its ``data`` section)."""
    _, doc = load_document(path)
    if "data" in doc and isinstance(doc["data"], dict):
        doc = doc["data"]
    spec = DatasetSpec.from_dict(apply_overrides(doc, overrides))
    return spec.validate()
