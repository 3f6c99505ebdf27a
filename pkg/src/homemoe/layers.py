"""Experts, gates, towers and the low-rank feature gate."""

import numpy as np

from . import tensor as T
from .tensor import BNState, ShapeError, Tensor


class ConfigError(ValueError):
    pass


def _init(kind, fan_in, fan_out, rng):
    if kind == "zeros":
        return np.zeros((fan_in, fan_out))
    if kind == "he":
        limit = np.sqrt(6.0 / fan_in)
    elif kind == "glorot":
        limit = np.sqrt(6.0 / (fan_in + fan_out))
    else:
        raise ValueError(f"unknown init {kind!r}")
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear:
    def __init__(self, fan_in, fan_out, rng, init="he", name="linear"):
        self.weight = Tensor(_init(init, fan_in, fan_out, rng), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.bias")

    @property
    def fan_in(self):
        return self.weight.shape[0]

    def __call__(self, x):
        return x @ self.weight + self.bias

    def parameters(self):
        return [self.weight, self.bias]


class MLP:
    """Stack of linear layers; ``activation`` between layers, none after the last."""

    def __init__(self, sizes, rng, activation="relu", hidden_init="he", out_init="he", name="mlp"):
        self.activation = activation
        n = len(sizes) - 1
        self.layers = [
            Linear(sizes[i], sizes[i + 1], rng,
                   init=out_init if i == n - 1 else hidden_init, name=f"{name}.{i}")
            for i in range(n)
        ]

    @property
    def in_width(self):
        return self.layers[0].fan_in

    def __call__(self, x):
        if x.shape[-1] != self.in_width:
            raise ShapeError(f"expected input width {self.in_width}, got {x.shape}")
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.activate(self.activation, x)
        return x

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]


class ExpertUnit:
    """``act(BN(MLP(x)))`` when normalised, ``act(MLP(x))`` otherwise.

    norm+relu is refused unless ``allow_norm_relu`` is set: after normalisation
    half of every column is negative and relu zeroes it.
    """

    def __init__(self, in_width, width, rng, hidden=(128,), activation="swish",
                 normalize=True, allow_norm_relu=False, name="expert"):
        if activation not in ("relu", "swish"):
            raise ConfigError(f"{name}: expert activation must be relu or swish, got {activation!r}")
        if normalize and activation == "relu" and not allow_norm_relu:
            raise ConfigError(f"{name}: batch norm followed by relu needs allow_norm_relu=True")
        self.name = name
        self.width = width
        self.activation = activation
        self.normalize = normalize
        self.mlp = MLP([in_width, *hidden, width], rng, activation=activation, name=f"{name}.mlp")
        self.bn = BNState(width, name=f"{name}.bn") if normalize else None

    @property
    def in_width(self):
        return self.mlp.in_width

    def __call__(self, x, mode="train", trace=None):
        return expert_forward(self, x, mode, trace)

    def parameters(self):
        ps = self.mlp.parameters()
        if self.bn is not None:
            ps += self.bn.parameters()
        return ps


def expert_forward(unit, x, mode="train", trace=None):
    z = unit.mlp(x)
    pre = T.batch_norm(z, unit.bn, mode) if unit.normalize else z
    out = T.activate(unit.activation, pre)
    if trace is not None:
        trace[unit.name] = (pre.data, out.data)
    return out


class GateUnit:
    """Linear (optionally MLP) gate with softmax or, for arity 1, sigmoid output.

    The last layer starts at zero so routing begins uniform.
    """

    def __init__(self, in_width, arity, rng, activation="softmax", hidden=(), name="gate"):
        if arity < 1:
            raise ConfigError(f"{name}: gate arity must be >= 1")
        if activation == "sigmoid" and arity != 1:
            raise ConfigError(f"{name}: sigmoid gate only allowed with arity 1, got {arity}")
        if activation not in ("softmax", "sigmoid"):
            raise ConfigError(f"{name}: unknown gate activation {activation!r}")
        self.name = name
        self.arity = arity
        self.activation = activation
        self.mlp = MLP([in_width, *hidden, arity], rng, activation="relu",
                       hidden_init="glorot", out_init="zeros", name=f"{name}.mlp")

    def __call__(self, x):
        return gate_forward(self, x)

    def parameters(self):
        return self.mlp.parameters()


def gate_forward(unit, x):
    logits = unit.mlp(x)
    if unit.activation == "softmax":
        return T.softmax(logits)
    return T.activate("sigmoid", logits)


class TowerUnit:
    def __init__(self, in_width, rng, hidden=(64,), name="tower"):
        self.name = name
        self.mlp = MLP([in_width, *hidden, 1], rng, activation="relu",
                       hidden_init="glorot", out_init="zeros", name=f"{name}.mlp")

    def __call__(self, x):
        """Probabilities of shape (B, 1)."""
        return T.activate("sigmoid", self.mlp(x))

    def parameters(self):
        return self.mlp.parameters()


def weighted_sum(weights, outputs):
    """Row-wise ``sum_i w[:, i] * outputs[i]``."""
    W = weights.data
    if W.ndim != 2 or W.shape[1] != len(outputs):
        raise ShapeError(f"weighted_sum: {W.shape[-1] if W.ndim else 0} weights for {len(outputs)} outputs")
    shape = outputs[0].shape
    for o in outputs:
        if o.shape != shape or o.shape[0] != W.shape[0]:
            raise ShapeError(f"weighted_sum: output {o.shape} vs {shape} with weights {W.shape}")
    E = [o.data for o in outputs]
    acc = W[:, 0:1] * E[0]
    for i in range(1, len(E)):
        acc = acc + W[:, i:i + 1] * E[i]

    def bw(g):
        dW = np.stack([(g * e).sum(axis=1) for e in E], axis=1)
        return (dW, *[W[:, i:i + 1] * g for i in range(len(E))])

    return T.record("weighted_sum", acc, (weights, *outputs), bw)


class FeaLoRAUnit:
    """``2 * sigmoid(v @ B @ A)`` with B: width x rank, A: rank x width.

    A starts at zero, so a fresh unit is the identity gate (all ones).
    """

    def __init__(self, width, rank, rng, name="lora"):
        if rank < 1 or rank > width:
            raise ConfigError(f"{name}: rank {rank} must be in [1, {width}]")
        self.name = name
        self.width = width
        self.rank = rank
        self.B = Tensor(_init("glorot", width, rank, rng), requires_grad=True, name=f"{name}.B")
        self.A = Tensor(np.zeros((rank, width)), requires_grad=True, name=f"{name}.A")

    def __call__(self, v):
        return fea_lora_forward(self, v)

    def parameters(self):
        return [self.B, self.A]


def fea_lora_forward(unit, v):
    if v.shape[-1] != unit.width:
        raise ShapeError(f"{unit.name}: expected width {unit.width}, got {v.shape}")
    return T.scale(T.activate("sigmoid", (v @ unit.B) @ unit.A), 2.0)


class FeaGate:
    """Softmax mixture of ``n_lora`` low-rank units of rank ``width / n_lora``."""

    def __init__(self, width, n_lora, rng, name="fea_gate"):
        if n_lora < 1 or width % n_lora:
            raise ConfigError(f"{name}: LoRA count {n_lora} must divide input width {width}")
        self.name = name
        self.loras = [FeaLoRAUnit(width, width // n_lora, rng, name=f"{name}.lora{i}") for i in range(n_lora)]
        self.gate = GateUnit(width, n_lora, rng, name=f"{name}.gate")

    def __call__(self, v, trace=None):
        return fea_gate_forward(self.loras, self.gate, v, trace=trace, name=self.name)

    def parameters(self):
        ps = [p for lora in self.loras for p in lora.parameters()]
        return ps + self.gate.parameters()


def fea_gate_forward(loras, gate, v, trace=None, name="fea_gate"):
    if gate.arity != len(loras):
        raise ConfigError(f"{name}: gate arity {gate.arity} vs {len(loras)} LoRA units")
    w = gate(v)
    out = weighted_sum(w, [lora(v) for lora in loras])
    if trace is not None:
        trace[name] = out.data
    return out


def apply_feature_gate(v, g):
    if v.shape != g.shape:
        raise ShapeError(f"feature gate shape {g.shape} does not match input {v.shape}")
    return T.mul(v, g)


def self_gate_forward(gate, expert_outputs, gate_input):
    if gate.arity != len(expert_outputs):
        raise ConfigError(f"{gate.name}: arity {gate.arity} vs {len(expert_outputs)} experts")
    return weighted_sum(gate(gate_input), expert_outputs)
