"""Finite-difference verification of every parameter block of a model."""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .models import ModelConfig, TaskSpec, build_model
from .train import bce_loss


@dataclass
class BlockResult:
    block: str
    size: int
    rel_error: float
    passed: bool


def tiny_home_config(**overrides):
    """|v|=12, D=4, one expert per group, two LoRAs."""
    base = dict(architecture="home", input_width=12, expert_width=4, experts_per_group=1,
                lora_count=2, expert_hidden=[8], tower_hidden=[8], seed=0)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_tasks():
    return [TaskSpec("ctr", "interaction", 0.3), TaskSpec("like", "interaction", 0.05),
            TaskSpec("evtr", "watch", 0.3), TaskSpec("ltr", "watch", 0.1)]


def randomize(model, rng, scale=0.5):
    """Move every parameter off its (often zero) initial value."""
    for p in model.parameters():
        p.data = p.data + scale * rng.normal(size=p.shape)


def rel_error(analytic, numeric, floor=1e-6):
    """Norm-wise relative error.

    ``floor`` keeps exactly-zero blocks (a bias feeding batch norm) from
    dividing central-difference round-off, ~1e-11 at h=1e-5, by nothing.
    """
    diff = np.linalg.norm(analytic - numeric)
    return float(diff / max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor))


def grad_check(model, features, labels, h=1e-5, tol=1e-4):
    """Compare backward() with central differences for each named parameter."""
    names = [t.name for t in model.tasks]

    def loss_value(_=None):
        trace = model(features, mode="train")
        loss, _ = bce_loss(trace.outputs, labels, names)
        return float(loss.data)

    params = model.named_parameters()
    T.zero_grad(params.values())
    with T.Tape() as tape:
        trace = model(features, mode="train")
        loss, _ = bce_loss(trace.outputs, labels, names)
    T.backward(loss, tape)

    results = []
    for name, p in params.items():
        numeric = T.finite_diff_grad(loss_value, p, h)
        err = rel_error(p.grad, numeric)
        results.append(BlockResult(name, p.size, err, err < tol))
    return results


def run_tiny_home(seed=0, batch=8, h=1e-5, tol=1e-4, **overrides):
    rng = np.random.default_rng(seed)
    model = build_model(tiny_home_config(seed=seed, **overrides), tiny_tasks())
    randomize(model, rng)
    x = rng.normal(size=(batch, model.config.input_width))
    y = (rng.random((batch, len(model.tasks))) < 0.5).astype(np.float64)
    return grad_check(model, x, y, h=h, tol=tol)


def format_table(results):
    width = max(len(r.block) for r in results)
    lines = [f"{'block':<{width}}  {'size':>5}  {'rel_err':>10}  status"]
    for r in results:
        lines.append(f"{r.block:<{width}}  {r.size:>5}  {r.rel_error:>10.3e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
