"""Multi-task BCE, Adam and the minibatch training loop."""

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .metrics import MetricError, auc, gauc

log = logging.getLogger(__name__)

CLAMP = 1e-7


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 2
    max_steps: int = 0          # 0 = no cap beyond epochs
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 0         # steps; 0 = only at the end
    eval_fraction: float = 0.2
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 and self.max_steps < 1:
            raise ValueError("need epochs >= 1 or max_steps >= 1")
        return self


def bce(pred, y):
    """Mean binary cross-entropy of probabilities ``pred`` (B, 1) against 0/1 ``y``."""
    y = np.asarray(y, dtype=np.float64).reshape(pred.shape)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")
    p = pred.data
    inside = (p > CLAMP) & (p < 1.0 - CLAMP)
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    B = p.shape[0]
    value = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))

    def bw(g):
        return (float(g) * inside * (pc - y) / (pc * (1.0 - pc)) / B,)

    return T.record("bce", np.array(value), (pred,), bw)


def bce_loss(predictions, labels, task_names):
    """Sum over tasks of batch-mean BCE. Returns (loss, per-task floats)."""
    labels = np.asarray(labels)
    if labels.shape[1] != len(task_names) or set(predictions) != set(task_names):
        raise ValueError("prediction tasks and label columns differ")
    total = None
    per_task = {}
    for j, name in enumerate(task_names):
        pred = predictions[name]
        if pred.shape[0] != labels.shape[0]:
            raise ValueError(f"task {name}: {pred.shape[0]} predictions for {labels.shape[0]} labels")
        lt = bce(pred, labels[:, j])
        per_task[name] = float(lt.data)
        total = lt if total is None else total + lt
    return total, per_task


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params          # name -> Tensor
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name}")
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def predict(model, features, batch_size=4096):
    out = [model.predict(features[lo:lo + batch_size]) for lo in range(0, features.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


def _safe(metric, *args):
    try:
        return metric(*args)
    except MetricError:
        return math.nan


def evaluate(model, dataset):
    """Per-task eval loss, AUC and GAUC (NaN when undefined)."""
    probs = predict(model, dataset.features)
    pc = np.clip(probs, CLAMP, 1.0 - CLAMP)
    y = dataset.labels
    losses = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc), axis=0)
    report = {}
    for j, name in enumerate(dataset.task_names):
        report[name] = {
            "loss": float(losses[j]),
            "auc": _safe(auc, probs[:, j], y[:, j]),
            "gauc": _safe(gauc, probs[:, j], y[:, j], dataset.user_ids),
        }
    return report


@dataclass
class History:
    rows: list            # dicts: step, task, loss, auc, gauc
    step_losses: list     # total train loss per step

    def write(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "task", "loss", "auc", "gauc"])
            for r in self.rows:
                w.writerow([r["step"], r["task"], repr(r["loss"]), repr(r["auc"]), repr(r["gauc"])])


def train_step(model, optimizer, batch, task_names):
    optimizer.zero_grad()
    with T.Tape() as tape:
        trace = model(batch.features, mode="train")
        loss, per_task = bce_loss(trace.outputs, batch.labels, task_names)
    T.backward(loss, tape)
    optimizer.step()
    return float(loss.data), per_task


def train(model, dataset, config, eval_data=None):
    """Train in place; returns (model, History).

    Partial batches at an epoch tail are dropped. When ``eval_data`` is given,
    metrics are recorded every ``eval_every`` steps and after the last step.
    """
    config.validate()
    if dataset.task_names != [t.name for t in model.tasks]:
        raise ValueError(f"dataset tasks {dataset.task_names} != model tasks {[t.name for t in model.tasks]}")
    if len(dataset) < config.batch_size:
        raise ValueError(f"dataset has {len(dataset)} rows, fewer than one batch of {config.batch_size}")
    task_names = dataset.task_names
    opt = Adam(model.named_parameters(), config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng([config.seed, 3])
    history = History(rows=[], step_losses=[])
    window = {t: [] for t in task_names}
    step = 0

    def checkpoint_metrics():
        metrics = evaluate(model, eval_data) if eval_data is not None else {}
        for t in task_names:
            m = metrics.get(t, {})
            history.rows.append({
                "step": step, "task": t,
                "loss": float(np.mean(window[t])) if window[t] else math.nan,
                "auc": m.get("auc", math.nan), "gauc": m.get("gauc", math.nan),
            })
            window[t].clear()

    epoch = 0
    done = False
    while not done:
        for batch in dataset.batches(config.batch_size, rng=rng, drop_last=True):
            total, per_task = train_step(model, opt, batch, task_names)
            step += 1
            history.step_losses.append(total)
            for t, v in per_task.items():
                window[t].append(v)
            if config.eval_every and step % config.eval_every == 0:
                checkpoint_metrics()
                log.info("step %d loss %.5f", step, total)
            if config.max_steps and step >= config.max_steps:
                done = True
                break
        epoch += 1
        if config.epochs and epoch >= config.epochs and not config.max_steps:
            done = True
    if not history.rows or history.rows[-1]["step"] != step:
        checkpoint_metrics()
    return model, history
