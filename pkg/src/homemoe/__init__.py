"""Multi-task mixture-of-experts (HoME, MMoE, CGC) on a small numpy autodiff engine."""

from .data import Dataset, DatasetSpec, generate_dataset, read_dataset, write_dataset
from .diagnostics import collect_gate_report, detect_pathologies
from .metrics import auc, gauc, ranking_score
from .models import ModelConfig, TaskSpec, build_model, parameter_count
from .train import TrainConfig, train

__all__ = [
    "Dataset", "DatasetSpec", "ModelConfig", "TaskSpec", "TrainConfig",
    "auc", "build_model", "collect_gate_report", "detect_pathologies", "gauc",
    "generate_dataset", "parameter_count", "ranking_score", "read_dataset", "train",
    "write_dataset",
]
