"""The demo setting shared by configs/demo.yaml and the acceptance suite.

Eight tasks with a 100:1 density skew, about 75k logs, and package-default
model sizes. Every architecture is trained with the same TrainConfig.
"""

import numpy as np

from .data import DatasetSpec, generate_dataset, split_dataset
from .models import ModelConfig, build_model
from .train import TrainConfig, evaluate, train

EVAL_FRACTION = 0.3
SPARSE_RATE = 0.005


def demo_spec(seed=0):
    return DatasetSpec(n_users=750, logs_min=80, logs_max=120, seed=seed)


def demo_train_config(seed=0, **overrides):
    base = dict(batch_size=256, epochs=3, learning_rate=1e-3, eval_fraction=EVAL_FRACTION, seed=seed)
    base.update(overrides)
    return TrainConfig(**base)


def demo_data(seed=0):
    spec = demo_spec(seed)
    ds = generate_dataset(spec)
    train_ds, eval_ds = split_dataset(ds, EVAL_FRACTION, seed=seed)
    return spec, train_ds, eval_ds


def sparse_tasks(spec, rate=SPARSE_RATE):
    return [t.name for t in spec.tasks if t.positive_rate <= rate]


def fit(model_config, spec, train_ds, eval_ds, train_config):
    """Train one model; returns (model, per-task eval report)."""
    model = build_model(model_config, spec.tasks)
    model, _ = train(model, train_ds, train_config)
    return model, evaluate(model, eval_ds)


def sparse_gauc(report, tasks):
    return float(np.nanmean([report[t]["gauc"] for t in tasks]))


def compare(architectures, seeds=(0, 1, 2), data_seed=0, train_overrides=None, log=print):
    """Mean sparse-task GAUC per named ModelConfig, averaged over model seeds.

    ``architectures`` maps a label to a dict of ModelConfig fields; the seed is
    filled in per run.
    """
    spec, train_ds, eval_ds = demo_data(data_seed)
    sparse = sparse_tasks(spec)
    out = {name: [] for name in architectures}
    for seed in seeds:
        tc = demo_train_config(seed, **(train_overrides or {}))
        for name, fields in architectures.items():
            cfg = ModelConfig(input_width=spec.feature_width, seed=seed, **fields)
            _, report = fit(cfg, spec, train_ds, eval_ds, tc)
            out[name].append(sparse_gauc(report, sparse))
            if log:
                log(f"seed {seed} {name}: sparse gauc {out[name][-1]:.4f}")
    return {name: float(np.mean(v)) for name, v in out.items()}, out
