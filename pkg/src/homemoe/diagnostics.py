"""Gate-weight and expert-output statistics, and the three MoE pathology detectors.

* collapse: an expert is mostly dead (zero-activation fraction above
  ``zero_fraction``) or is monopolised by some task gate while its output
  scale is far from the other experts'.
* degradation: a shared expert whose gate mass comes almost entirely from one task.
* underfitting: a task that routes nearly all its weight away from its own
  specific experts.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T

REPORT_SCHEMA = "homemoe.gate_report"
FLAGS_SCHEMA = "homemoe.pathology_flags"
SCHEMA_VERSION = 1


@dataclass
class Thresholds:
    zero_fraction: float = 0.9
    monopoly: float = 0.98
    dispersion: float = 10.0
    degradation: float = 0.9
    # flag when the weight a task puts outside its own specific experts exceeds this;
    # 0.95 is "own experts get < 0.05"
    underfit_shared_share: float = 0.95

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class GateReport:
    tasks: list
    experts: list                # task-level experts, column order of ``task_weights``
    task_weights: np.ndarray     # (T, N) mean gate weight; 0 where a task cannot route
    expert_roles: dict           # expert -> role
    expert_stats: dict           # expert -> {"mean", "std", "zero_fraction"}
    gates: dict = field(default_factory=dict)   # every gate -> {"experts", "mean_weights"}
    n_rows: int = 0

    def weight_share(self):
        """(T, N): each expert's gate mass split across tasks; columns sum to 1."""
        mass = self.task_weights.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(mass > 0, self.task_weights / mass, 0.0)

    def std_ratio(self, experts=None):
        """max/min output std over ``experts`` (default: task-level experts)."""
        stds = np.array([self.expert_stats[e]["std"] for e in (experts or self.experts)])
        lo = stds.min()
        return float("inf") if lo == 0 else float(stds.max() / lo)

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": SCHEMA_VERSION,
            "n_rows": self.n_rows,
            "tasks": list(self.tasks),
            "experts": list(self.experts),
            "expert_roles": dict(self.expert_roles),
            "task_weights": self.task_weights.tolist(),
            "weight_share": self.weight_share().tolist(),
            "expert_stats": self.expert_stats,
            "gates": self.gates,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError("not a gate report")
        return cls(tasks=d["tasks"], experts=d["experts"], task_weights=np.array(d["task_weights"]),
                   expert_roles=d["expert_roles"], expert_stats=d["expert_stats"],
                   gates=d.get("gates", {}), n_rows=d.get("n_rows", 0))


@dataclass
class PathologyFlags:
    collapse: list = field(default_factory=list)       # {"expert", "reason", "value"}
    degradation: list = field(default_factory=list)    # {"expert", "task", "share"}
    underfitting: list = field(default_factory=list)   # {"task", "weight"}

    def any(self):
        return bool(self.collapse or self.degradation or self.underfitting)

    def count(self):
        return len(self.collapse) + len(self.degradation) + len(self.underfitting)

    def to_dict(self, thresholds=None):
        d = {"schema": FLAGS_SCHEMA, "version": SCHEMA_VERSION}
        d.update(asdict(self))
        if thresholds is not None:
            d["thresholds"] = asdict(thresholds)
        return d


FLAGS_JSON_SCHEMA = {
    "type": "object",
    "required": ["schema", "version", "collapse", "degradation", "underfitting"],
    "properties": {
        "schema": {"const": FLAGS_SCHEMA},
        "version": {"const": SCHEMA_VERSION},
        "collapse": {"type": "array", "items": {
            "type": "object", "required": ["expert", "reason", "value"],
            "properties": {"expert": {"type": "string"},
                           "reason": {"enum": ["zero_fraction", "monopolized"]},
                           "value": {"type": "number"}}}},
        "degradation": {"type": "array", "items": {
            "type": "object", "required": ["expert", "task", "share"],
            "properties": {"expert": {"type": "string"}, "task": {"type": "string"},
                           "share": {"type": "number"}}}},
        "underfitting": {"type": "array", "items": {
            "type": "object", "required": ["task", "weight"],
            "properties": {"task": {"type": "string"}, "weight": {"type": "number"}}}},
        "thresholds": {"type": "object"},
    },
}


def collect_gate_report(model, batches, mode="infer"):
    """Average gate weights and pool expert output statistics over ``batches``.

    ``batches`` yields feature arrays (or objects with ``.features``). In
    ``mode="train"`` batch statistics are used and running BN stats are
    restored afterwards.
    """
    saved = {n: (bn.running_mean.copy(), bn.running_var.copy()) for n, bn in model.bn_states().items()}
    gate_sum, gate_cols = {}, {}
    out_sum, out_sq, out_zero, out_n = {}, {}, {}, {}
    n_rows = 0
    try:
        with T.no_tape():
            for b in batches:
                x = getattr(b, "features", b)
                trace = model(x, mode=mode)
                n_rows += x.shape[0]
                for g, w in trace.gates.items():
                    gate_sum[g] = gate_sum.get(g, 0.0) + w.sum(axis=0)
                    gate_cols[g] = trace.gate_experts[g]
                for e, (_, post) in trace.experts.items():
                    out_sum[e] = out_sum.get(e, 0.0) + post.sum()
                    out_sq[e] = out_sq.get(e, 0.0) + (post * post).sum()
                    out_zero[e] = out_zero.get(e, 0) + int(np.count_nonzero(post == 0.0))
                    out_n[e] = out_n.get(e, 0) + post.size
    finally:
        for n, bn in model.bn_states().items():
            bn.running_mean, bn.running_var = saved[n]
    if n_rows == 0:
        raise ValueError("collect_gate_report needs at least one batch")

    stats = {}
    for e in out_n:
        m = out_sum[e] / out_n[e]
        var = max(out_sq[e] / out_n[e] - m * m, 0.0)
        stats[e] = {"mean": float(m), "std": float(np.sqrt(var)),
                    "zero_fraction": out_zero[e] / out_n[e]}

    tasks = [t.name for t in model.tasks]
    experts = []
    for t in tasks:
        for e in gate_cols.get(f"task_gate.{t}", []):
            if e not in experts:
                experts.append(e)
    W = np.zeros((len(tasks), len(experts)))
    for i, t in enumerate(tasks):
        g = f"task_gate.{t}"
        if g in gate_sum:
            for col, e in enumerate(gate_cols[g]):
                W[i, experts.index(e)] = gate_sum[g][col] / n_rows
    gates = {g: {"experts": gate_cols[g], "mean_weights": (gate_sum[g] / n_rows).tolist()} for g in gate_sum}
    return GateReport(tasks=tasks, experts=experts, task_weights=W, expert_roles=dict(model.expert_roles),
                      expert_stats=stats, gates=gates, n_rows=n_rows)


def detect_pathologies(report, thresholds=None):
    th = thresholds or Thresholds()
    flags = PathologyFlags()

    stds = [report.expert_stats[e]["std"] for e in report.experts if e in report.expert_stats]
    median_std = float(np.median(stds)) if stds else 0.0
    max_weight = dict(zip(report.experts, report.task_weights.max(axis=0))) if report.experts else {}
    for e, s in report.expert_stats.items():
        if s["zero_fraction"] > th.zero_fraction:
            flags.collapse.append({"expert": e, "reason": "zero_fraction", "value": float(s["zero_fraction"])})
            continue
        w = max_weight.get(e, 0.0)
        if w > th.monopoly:
            if s["std"] == 0.0 or median_std == 0.0:
                disp = float("inf") if s["std"] != median_std else 1.0
            else:
                disp = max(s["std"] / median_std, median_std / s["std"])
            if disp > th.dispersion:
                flags.collapse.append({"expert": e, "reason": "monopolized", "value": float(w)})

    share = report.weight_share()
    for j, e in enumerate(report.experts):
        role = report.expert_roles.get(e, "")
        if role != "shared" and not role.startswith("category:"):
            continue
        routable = report.task_weights[:, j] > 0
        if routable.sum() < 2:
            continue
        i = int(np.argmax(share[:, j]))
        if share[i, j] > th.degradation:
            flags.degradation.append({"expert": e, "task": report.tasks[i], "share": float(share[i, j])})

    for i, t in enumerate(report.tasks):
        own = [j for j, e in enumerate(report.experts) if report.expert_roles.get(e) == f"specific:{t}"]
        if not own:
            continue
        w = float(report.task_weights[i, own].sum())
        if 1.0 - w > th.underfit_shared_share:
            flags.underfitting.append({"task": t, "weight": w})
    return flags


def write_report(report, path):
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)


def write_flags(flags, path, thresholds=None):
    with open(path, "w") as fh:
        json.dump(flags.to_dict(thresholds), fh, indent=1, sort_keys=True)


def write_heatmap(report, path, matrix="task_weights"):
    """task x expert CSV of ``task_weights`` or ``weight_share``."""
    M = report.task_weights if matrix == "task_weights" else report.weight_share()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", *report.experts])
        for t, row in zip(report.tasks, M):
            w.writerow([t, *map(repr, row.tolist())])
