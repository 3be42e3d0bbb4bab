"""Desk-scale check that heterogeneous synchronous SGD matches single-node SGD."""

from .collective import (
    Transfer,
    ring_allreduce_sum,
    mean_traffic_fraction,
    per_worker_traffic,
    ring_schedule,
    segment_bounds,
    weighted_allreduce,
)
from .model import (
    GradientTensor,
    MlpModel,
    accuracy,
    forward_backward,
    gradient_check,
    kink_crossed,
    init_mlp,
    loss_only,
    param_count,
    zero_mlp,
)
from .training import (
    LrSchedule,
    TrainRun,
    WorkerState,
    evaluate,
    lr_at,
    make_task,
    make_workers,
    train_distributed,
    train_single,
)
from .verify import (
    VerifyConfig,
    equivalence_run,
    parity_run,
    random_equivalence_case,
)

__all__ = [
    "GradientTensor",
    "LrSchedule",
    "MlpModel",
    "TrainRun",
    "Transfer",
    "VerifyConfig",
    "WorkerState",
    "accuracy",
    "equivalence_run",
    "evaluate",
    "forward_backward",
    "gradient_check",
    "init_mlp",
    "kink_crossed",
    "loss_only",
    "lr_at",
    "make_task",
    "make_workers",
    "mean_traffic_fraction",
    "param_count",
    "parity_run",
    "per_worker_traffic",
    "random_equivalence_case",
    "ring_allreduce_sum",
    "ring_schedule",
    "segment_bounds",
    "train_distributed",
    "train_single",
    "weighted_allreduce",
    "zero_mlp",
]
