import numpy as np
import pytest

from homemoe import tensor as T
from homemoe.gradcheck import randomize, tiny_home_config, tiny_tasks
from homemoe.layers import ConfigError
from homemoe.models import ModelConfig, TaskSpec, build_model
from homemoe.train import bce


def task_loss_grads(model, task, seed=0, batch=8):
    r = np.random.default_rng(seed)
    x = r.normal(size=(batch, model.config.input_width))
    y = (r.random(batch) < 0.5).astype(float)
    params = model.named_parameters()
    T.zero_grad(params.values())
    with T.Tape() as tape:
        trace = model(x)
        loss = bce(trace.outputs[task], y)
    T.backward(loss, tape)
    return {n: p.grad for n, p in params.items()}


def _norm(grads, prefixes):
    picked = {n: g for n, g in grads.items() if n.startswith(prefixes)}
    assert picked
    return picked


@pytest.mark.parametrize("seed", range(3))
def test_hierarchy_mask_isolates_categories(seed):
    model = build_model(tiny_home_config(seed=seed), tiny_tasks())
    randomize(model, np.random.default_rng(seed))
    grads = task_loss_grads(model, "ctr", seed)
    for n, g in _norm(grads, ("l2.watch.", "l2.task.evtr.", "l2.task.ltr.")).items():
        assert np.all(g == 0.0), n
    grads = task_loss_grads(model, "evtr", seed)
    for n, g in _norm(grads, ("l2.inter.", "l2.task.ctr.", "l2.task.like.")).items():
        assert np.all(g == 0.0), n
    # own experts do receive gradient
    assert any(np.any(g != 0) for g in _norm(grads, ("l2.watch.",)).values())


def test_mask_off_reaches_other_category():
    cfg = tiny_home_config(use_hierarchy_mask=False)
    model = build_model(cfg, tiny_tasks())
    randomize(model, np.random.default_rng(0))
    grads = task_loss_grads(model, "ctr")
    watch = _norm(grads, ("l2.watch.", "l2.task.evtr."))
    assert all(np.any(g != 0) for n, g in watch.items() if n.endswith("weight"))


def test_home_gate_arity_and_members():
    model = build_model(tiny_home_config(experts_per_group=2), tiny_tasks())
    trace = model(np.random.default_rng(0).normal(size=(6, 12)))
    w, experts = trace.task_gate("ctr")
    assert w.shape == (6, 6)
    assert experts == ["l2.shared.0", "l2.shared.1", "l2.inter.0", "l2.inter.1",
                       "l2.task.ctr.0", "l2.task.ctr.1"]
    assert trace.gate_experts["meta_gate.watch"] == ["meta.shared.0", "meta.shared.1",
                                                     "meta.watch.0", "meta.watch.1"]
    assert len(trace.gate_experts["meta_gate.shared"]) == 6
    np.testing.assert_allclose(w.sum(axis=1), 1.0)


def test_self_gate_is_sigmoid_for_single_expert():
    model = build_model(tiny_home_config(), tiny_tasks())
    assert model.self1["inter"].activation == "sigmoid"
    assert model.self2["ctr"].activation == "sigmoid"
    model = build_model(tiny_home_config(experts_per_group=3), tiny_tasks())
    assert model.self1["inter"].activation == "softmax"
    assert model.self2["ctr"].arity == 3


def test_mask_off_task_gate_spans_all_layer2_experts():
    model = build_model(tiny_home_config(use_hierarchy_mask=False), tiny_tasks())
    assert model.task_gates["ctr"].arity == 3 + len(tiny_tasks())
    assert model.meta_gates["inter"].arity == 3


def test_outputs_are_probabilities_for_every_architecture(four_tasks):
    x = np.random.default_rng(1).normal(size=(5, 32))
    for arch in ("shared_bottom", "mmoe", "cgc", "home"):
        model = build_model(ModelConfig(architecture=arch, expert_hidden=[16], tower_hidden=[8]), four_tasks)
        p = model.predict(x)
        assert p.shape == (5, 4)
        assert np.all((p > 0) & (p < 1))


def test_tiny_parameter_counts_frozen(four_tasks):
    counts = {}
    for arch in ("shared_bottom", "mmoe", "cgc", "home"):
        cfg = ModelConfig(architecture=arch, input_width=12, expert_width=4, n_shared_experts=2,
                          expert_hidden=[8], tower_hidden=[8])
        counts[arch] = build_model(cfg, four_tasks).parameter_count()
    # recomputed by hand from layer shapes (weights + biases + BN affine)
    expert12 = 12 * 8 + 8 + 8 * 4 + 4 + 8
    tower = 4 * 8 + 8 + 8 + 1
    assert counts["shared_bottom"] == expert12 + 4 * tower
    assert counts["mmoe"] == 2 * expert12 + 4 * (12 * 2 + 2) + 4 * tower
    assert counts["cgc"] == 6 * expert12 + 4 * (12 * 3 + 3) + 4 * tower


def test_variant_parameter_counts_strictly_decrease(eight_tasks):
    counts = [build_model(ModelConfig.variant(v), eight_tasks).parameter_count()
              for v in ("home", "w/o fg2", "w/o fg")]
    assert counts[0] > counts[1] > counts[2]


def test_unknown_variant():
    with pytest.raises(ConfigError, match="unknown HoME variant"):
        ModelConfig.variant("w/o everything")


@pytest.mark.parametrize("kwargs,match", [
    ({"architecture": "dnn"}, "architecture"),
    ({"lora_count": 3}, "divide"),
    ({"expert_activation": "relu"}, "allow_norm_relu"),
    ({"expert_activation": "tanh"}, "relu or swish"),
    ({"expert_width": 0}, "positive"),
])
def test_invalid_configs(kwargs, match, four_tasks):
    with pytest.raises(ConfigError, match=match):
        build_model(ModelConfig(**kwargs), four_tasks)


def test_task_validation():
    with pytest.raises(ConfigError):
        TaskSpec("x", "share", 0.1)
    with pytest.raises(ConfigError):
        TaskSpec("x", "watch", 0.0)
    with pytest.raises(ConfigError, match="unique"):
        build_model(ModelConfig(), [TaskSpec("a", "watch", 0.1)] * 2)


def test_same_seed_same_model(four_tasks):
    a = build_model(ModelConfig(seed=3), four_tasks).named_parameters()
    b = build_model(ModelConfig(seed=3), four_tasks).named_parameters()
    assert list(a) == list(b)
    for n in a:
        np.testing.assert_array_equal(a[n].data, b[n].data)


def test_input_width_checked(four_tasks):
    model = build_model(ModelConfig(), four_tasks)
    with pytest.raises(T.ShapeError):
        model(np.zeros((4, 31)))


def test_variant_needs_home():
    assert ModelConfig.variant("w/o fg", architecture="home").use_feature_gate_layer1 is False
    with pytest.raises(ConfigError, match="HoME ablation"):
        ModelConfig.variant("w/o fg", architecture="mmoe")
