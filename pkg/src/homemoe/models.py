"""SharedBottom, MMoE, CGC and HoME behind one forward interface."""

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .layers import (ConfigError, ExpertUnit, FeaGate, GateUnit, TowerUnit,
                     apply_feature_gate, weighted_sum)

CATEGORIES = ("interaction", "watch")
ARCHITECTURES = ("shared_bottom", "mmoe", "cgc", "home")


@dataclass
class TaskSpec:
    name: str
    category: str = "interaction"
    positive_rate: float = 0.1

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ConfigError(f"task {self.name!r}: category must be one of {CATEGORIES}, got {self.category!r}")
        if not 0.0 < self.positive_rate < 1.0:
            raise ConfigError(f"task {self.name!r}: positive rate must lie in (0, 1), got {self.positive_rate}")


def check_tasks(tasks):
    names = [t.name for t in tasks]
    if not names:
        raise ConfigError("at least one task is required")
    if len(set(names)) != len(names):
        raise ConfigError(f"task names must be unique: {names}")


@dataclass
class ModelConfig:
    architecture: str = "home"
    input_width: int = 32
    expert_width: int = 16
    # HoME: experts per group; MMoE/CGC use the two counts below
    experts_per_group: int = 1
    n_shared_experts: int = 6
    n_specific_experts: int = 1
    lora_count: int = 2
    use_feature_gate_layer1: bool = True
    use_feature_gate_layer2: bool = True
    use_self_gate: bool = True
    use_hierarchy_mask: bool = True
    expert_activation: str = "swish"
    expert_normalize: bool = True
    allow_norm_relu: bool = False
    expert_hidden: list = field(default_factory=lambda: [128])
    tower_hidden: list = field(default_factory=lambda: [64])
    gate_hidden: list = field(default_factory=list)
    seed: int = 0

    # Table-1 style names -> flag overrides
    VARIANTS = {
        "home": {},
        "w/o fg2": {"use_feature_gate_layer2": False},
        "w/o fg": {"use_feature_gate_layer1": False, "use_feature_gate_layer2": False},
        "w/o fg-sg": {"use_feature_gate_layer1": False, "use_feature_gate_layer2": False,
                      "use_self_gate": False},
        "w/o fg-sg-mask": {"use_feature_gate_layer1": False, "use_feature_gate_layer2": False,
                           "use_self_gate": False, "use_hierarchy_mask": False},
    }

    @classmethod
    def variant(cls, name, **overrides):
        """HoME ablation by name, e.g. ``ModelConfig.variant("w/o fg2", input_width=12)``."""
        if name not in cls.VARIANTS:
            raise ConfigError(f"unknown HoME variant {name!r}; known: {sorted(cls.VARIANTS)}")
        fields = {"architecture": "home", **cls.VARIANTS[name], **overrides}
        if fields["architecture"] != "home":
            raise ConfigError(f"variant {name!r} is a HoME ablation, not {fields['architecture']!r}")
        return cls(**fields)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        for key in ("input_width", "expert_width"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive")
        if self.architecture == "home":
            if self.experts_per_group < 1:
                raise ConfigError("experts_per_group must be >= 1")
            if self.use_feature_gate_layer1 and self.input_width % self.lora_count:
                raise ConfigError(f"lora_count {self.lora_count} must divide input_width {self.input_width}")
            if self.use_feature_gate_layer2 and self.expert_width % self.lora_count:
                raise ConfigError(f"lora_count {self.lora_count} must divide expert_width {self.expert_width}")
        if self.architecture in ("mmoe", "cgc"):
            n = self.n_shared_experts + (self.n_specific_experts if self.architecture == "cgc" else 0)
            if self.n_shared_experts < 0 or self.n_specific_experts < 0 or n < 1:
                raise ConfigError("mmoe/cgc need at least one expert per task gate")
        if self.expert_activation not in ("relu", "swish"):
            raise ConfigError(f"expert_activation must be relu or swish, got {self.expert_activation!r}")
        if self.expert_normalize and self.expert_activation == "relu" and not self.allow_norm_relu:
            raise ConfigError("normalized experts with relu need allow_norm_relu=true")
        return self


@dataclass
class ForwardTrace:
    outputs: dict               # task -> Tensor (B, 1)
    gates: dict = field(default_factory=dict)          # gate name -> (B, N) weights
    gate_experts: dict = field(default_factory=dict)   # gate name -> expert names, column order
    experts: dict = field(default_factory=dict)        # expert name -> (pre, post) arrays
    feature_gates: dict = field(default_factory=dict)  # gate name -> (B, width)

    @property
    def probabilities(self):
        return {t: out.data[:, 0] for t, out in self.outputs.items()}

    def task_gate(self, task):
        return self.gates[f"task_gate.{task}"], self.gate_experts[f"task_gate.{task}"]


class Model:
    """Common plumbing: parameter registry, BN states, parameter count."""

    def __init__(self, config, tasks):
        self.config = config
        self.tasks = list(tasks)
        self.rng = np.random.default_rng(config.seed)
        self.units = {}
        # expert name -> role: "shared", "meta:<group>", "category:<c>", "specific:<task>"
        self.expert_roles = {}

    def _expert(self, name, in_width, role):
        c = self.config
        unit = ExpertUnit(in_width, c.expert_width, self.rng, hidden=tuple(c.expert_hidden),
                          activation=c.expert_activation, normalize=c.expert_normalize,
                          allow_norm_relu=c.allow_norm_relu, name=name)
        self.units[name] = unit
        self.expert_roles[name] = role
        return unit

    def _gate(self, name, in_width, arity, activation="softmax"):
        unit = GateUnit(in_width, arity, self.rng, activation=activation,
                        hidden=tuple(self.config.gate_hidden), name=name)
        self.units[name] = unit
        return unit

    def _towers(self):
        self.towers = {}
        for t in self.tasks:
            name = f"tower.{t.name}"
            self.towers[t.name] = self.units[name] = TowerUnit(
                self.config.expert_width, self.rng, hidden=tuple(self.config.tower_hidden), name=name)

    def named_parameters(self):
        out = {}
        for unit in self.units.values():
            for p in unit.parameters():
                if p.name in out:
                    raise RuntimeError(f"duplicate parameter name {p.name}")
                out[p.name] = p
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def bn_states(self):
        return {name: u.bn for name, u in self.units.items()
                if isinstance(u, ExpertUnit) and u.bn is not None}

    def parameter_count(self):
        return int(sum(p.size for p in self.parameters()))

    def forward(self, v, mode="train"):
        raise NotImplementedError

    def __call__(self, v, mode="train"):
        if not isinstance(v, T.Tensor):
            v = T.Tensor(v)
        if v.shape[-1] != self.config.input_width:
            raise T.ShapeError(f"model expects width {self.config.input_width}, got {v.shape}")
        return self.forward(v, mode)

    def predict(self, v):
        """Inference-mode probabilities as an array (B, n_tasks)."""
        with T.no_tape():
            trace = self(v, mode="infer")
        return np.stack([trace.probabilities[t.name] for t in self.tasks], axis=1)


class SharedBottomModel(Model):
    def __init__(self, config, tasks):
        super().__init__(config, tasks)
        self.bottom = self._expert("bottom", config.input_width, "shared")
        self._towers()

    def forward(self, v, mode="train"):
        trace = ForwardTrace(outputs={})
        h = self.bottom(v, mode, trace.experts)
        for t in self.tasks:
            trace.outputs[t.name] = self.towers[t.name](h)
        return trace


class CGCModel(Model):
    """CGC: per-task softmax gate over shared + own specific experts.

    With ``architecture="mmoe"`` there are no specific experts.
    """

    def __init__(self, config, tasks):
        super().__init__(config, tasks)
        c = config
        n_spec = c.n_specific_experts if c.architecture == "cgc" else 0
        self.shared = [self._expert(f"shared.{i}", c.input_width, "shared") for i in range(c.n_shared_experts)]
        self.specific = {
            t.name: [self._expert(f"task.{t.name}.{i}", c.input_width, f"specific:{t.name}") for i in range(n_spec)]
            for t in tasks
        }
        self.gates = {t.name: self._gate(f"task_gate.{t.name}", c.input_width,
                                         c.n_shared_experts + n_spec) for t in tasks}
        self._towers()

    def forward(self, v, mode="train"):
        trace = ForwardTrace(outputs={})
        shared = [e(v, mode, trace.experts) for e in self.shared]
        for t in self.tasks:
            spec = [e(v, mode, trace.experts) for e in self.specific[t.name]]
            members = self.shared + self.specific[t.name]
            w = self.gates[t.name](v)
            gname = f"task_gate.{t.name}"
            trace.gates[gname] = w.data
            trace.gate_experts[gname] = [e.name for e in members]
            trace.outputs[t.name] = self.towers[t.name](weighted_sum(w, shared + spec))
        return trace


class HoMEModel(Model):
    """Two-level hierarchy: meta expert groups, then category-masked task experts."""

    GROUPS = ("shared", "inter", "watch")

    def __init__(self, config, tasks):
        super().__init__(config, tasks)
        c = config
        E, D, V = c.experts_per_group, c.expert_width, c.input_width
        self.category_group = {"interaction": "inter", "watch": "watch"}
        sg_act = "sigmoid" if E == 1 else "softmax"

        # meta layer
        self.meta = {g: [self._expert(f"meta.{g}.{i}", V, f"meta:{g}") for i in range(E)] for g in self.GROUPS}
        self.fg1 = {}
        if c.use_feature_gate_layer1:
            for g in self.GROUPS:
                self.fg1[g] = self.units[f"fg1.{g}"] = FeaGate(V, c.lora_count, self.rng, name=f"fg1.{g}")
        self.meta_members = {g: self._meta_members(g) for g in self.GROUPS}
        self.meta_gates = {g: self._gate(f"meta_gate.{g}", V, len(self.meta_members[g]) * E)
                           for g in self.GROUPS}
        self.self1 = {}
        if c.use_self_gate:
            self.self1 = {g: self._gate(f"self1.{g}", V, E, sg_act) for g in self.GROUPS}

        # task layer
        self.l2_shared = [self._expert(f"l2.shared.{i}", D, "shared") for i in range(E)]
        self.l2_category = {g: [self._expert(f"l2.{g}.{i}", D, f"category:{g}") for i in range(E)]
                            for g in ("inter", "watch")}
        self.l2_specific = {t.name: [self._expert(f"l2.task.{t.name}.{i}", D, f"specific:{t.name}")
                                     for i in range(E)] for t in tasks}
        self.fg2 = {}
        if c.use_feature_gate_layer2:
            for key in ["shared", "inter", "watch", *[f"task.{t.name}" for t in tasks]]:
                self.fg2[key] = self.units[f"fg2.{key}"] = FeaGate(D, c.lora_count, self.rng, name=f"fg2.{key}")
        self.task_members = {t.name: self._task_members(t) for t in tasks}
        self.task_gates = {t.name: self._gate(f"task_gate.{t.name}", 2 * D, len(self.task_members[t.name]))
                           for t in tasks}
        self.self2 = {}
        if c.use_self_gate:
            self.self2 = {t.name: self._gate(f"self2.{t.name}", 2 * D, E, sg_act) for t in tasks}
        self._towers()

    def _meta_members(self, g):
        if not self.config.use_hierarchy_mask or g == "shared":
            return list(self.GROUPS)
        return ["shared", g]

    def _task_members(self, task):
        """Expert units in gate-column order for one task."""
        if not self.config.use_hierarchy_mask:
            units = self.l2_shared + self.l2_category["inter"] + self.l2_category["watch"]
            for t in self.tasks:
                units = units + self.l2_specific[t.name]
            return units
        g = self.category_group[task.category]
        return self.l2_shared + self.l2_category[g] + self.l2_specific[task.name]

    def _gated(self, key, gates, x, trace):
        if key not in gates:
            return x
        return apply_feature_gate(x, gates[key](x, trace=trace.feature_gates))

    def forward(self, v, mode="train"):
        trace = ForwardTrace(outputs={})

        # meta layer; gates always read the raw v
        meta_out = {}
        for g in self.GROUPS:
            x = self._gated(g, self.fg1, v, trace)
            meta_out[g] = [e(x, mode, trace.experts) for e in self.meta[g]]
        z = {}
        for g in self.GROUPS:
            members = self.meta_members[g]
            w = self.meta_gates[g](v)
            gname = f"meta_gate.{g}"
            trace.gates[gname] = w.data
            trace.gate_experts[gname] = [e.name for m in members for e in self.meta[m]]
            z[g] = weighted_sum(w, [o for m in members for o in meta_out[m]])
            if g in self.self1:
                sw = self.self1[g](v)
                trace.gates[f"self1.{g}"] = sw.data
                trace.gate_experts[f"self1.{g}"] = [e.name for e in self.meta[g]]
                z[g] = z[g] + weighted_sum(sw, meta_out[g])

        # task layer
        outputs = {}
        x_shared = self._gated("shared", self.fg2, z["shared"], trace)
        for e in self.l2_shared:
            outputs[e.name] = e(x_shared, mode, trace.experts)
        for g in ("inter", "watch"):
            x = self._gated(g, self.fg2, z[g], trace)
            for e in self.l2_category[g]:
                outputs[e.name] = e(x, mode, trace.experts)
        for t in self.tasks:
            zc = z[self.category_group[t.category]]
            x = self._gated(f"task.{t.name}", self.fg2, zc, trace)
            for e in self.l2_specific[t.name]:
                outputs[e.name] = e(x, mode, trace.experts)

        for t in self.tasks:
            gate_in = T.concat([z[self.category_group[t.category]], z["shared"]], axis=-1)
            members = self.task_members[t.name]
            w = self.task_gates[t.name](gate_in)
            gname = f"task_gate.{t.name}"
            trace.gates[gname] = w.data
            trace.gate_experts[gname] = [e.name for e in members]
            h = weighted_sum(w, [outputs[e.name] for e in members])
            if t.name in self.self2:
                own = self.l2_specific[t.name]
                sw = self.self2[t.name](gate_in)
                trace.gates[f"self2.{t.name}"] = sw.data
                trace.gate_experts[f"self2.{t.name}"] = [e.name for e in own]
                h = h + weighted_sum(sw, [outputs[e.name] for e in own])
            trace.outputs[t.name] = self.towers[t.name](h)
        return trace


_BUILDERS = {
    "shared_bottom": SharedBottomModel,
    "mmoe": CGCModel,
    "cgc": CGCModel,
    "home": HoMEModel,
}


def build_model(config, tasks):
    config.validate()
    check_tasks(tasks)
    return _BUILDERS[config.architecture](config, tasks)


def parameter_count(model):
    return model.parameter_count()
