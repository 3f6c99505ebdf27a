"""Checkpoint file: one JSON document, parameters as base64 little-endian float64.

Bit-exact, no timestamps, key order fixed, so identical models give identical
bytes.
"""

import base64
import json

import numpy as np

from .models import ModelConfig, TaskSpec, build_model

FORMAT = "homemoe-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(arr):
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(blob):
    raw = base64.b64decode(blob["data"], validate=True)
    return np.frombuffer(raw, dtype="<f8").reshape(blob["shape"]).astype(np.float64)


def model_state(model):
    state = {name: p.data for name, p in model.named_parameters().items()}
    for name, bn in model.bn_states().items():
        state[f"{name}.bn.running_mean"] = bn.running_mean
        state[f"{name}.bn.running_var"] = bn.running_var
    return state


def dumps(model):
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": model.config.to_dict(),
        "tasks": [vars(t) for t in model.tasks],
        "params": {k: _encode(v) for k, v in sorted(model_state(model).items())},
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def save(model, path):
    with open(path, "w") as fh:
        fh.write(dumps(model))


def loads(text):
    try:
        doc = json.loads(text)
        if doc.get("format") != FORMAT or doc.get("version") != VERSION:
            raise CheckpointError(f"not a {FORMAT} v{VERSION} document")
        model = build_model(ModelConfig.from_dict(doc["config"]), [TaskSpec(**t) for t in doc["tasks"]])
        blobs = {k: _decode(v) for k, v in doc["params"].items()}
    except CheckpointError:
        raise
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None

    params = model.named_parameters()
    bns = model.bn_states()
    expected = set(params) | {f"{n}.bn.{s}" for n in bns for s in ("running_mean", "running_var")}
    if set(blobs) != expected:
        missing, extra = sorted(expected - set(blobs)), sorted(set(blobs) - expected)
        raise CheckpointError(f"parameter set mismatch (missing {missing[:3]}, unexpected {extra[:3]})")
    for name, p in params.items():
        if blobs[name].shape != p.shape:
            raise CheckpointError(f"{name}: shape {blobs[name].shape} != {p.shape}")
        p.data = blobs[name]
    for name, bn in bns.items():
        bn.running_mean = blobs[f"{name}.bn.running_mean"]
        bn.running_var = blobs[f"{name}.bn.running_var"]
    return model


def load(path):
    with open(path) as fh:
        return loads(fh.read())
