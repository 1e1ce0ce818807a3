"""Training engine with weight-update skipping (gated, truncated backprop)."""

from .controller import (
    ControllerConfig,
    ControllerState,
    PhaseController,
    Phase,
    PhaseDecision,
    Variant,
    detect_initial_epoch,
    gate_plan_for,
    rolling_std,
)
from .data import BatchPlan, Dataset, batches, load_cifar10, load_idx, synthetic_dataset
from .errors import (
    BuildError,
    ConfigError,
    ContractError,
    DataFormatError,
    ShapeError,
    TrainingDivergedError,
)
from .metrics import (
    EpochRecord,
    HistogramSet,
    UpdateLedger,
    predicted_updates,
    predicted_updates_all_biases,
    reduction_percent,
    snapshot_histogram,
)
from .network import (
    GatePlan,
    LayerGates,
    LayerSpec,
    Network,
    accuracy_percent,
    build_network,
    load_parameters,
    load_snapshot,
    save_snapshot,
    softmax_cross_entropy,
)
from .optim import SgdConfig, SgdState, UpdateCounts, lr_at_epoch, sgd_step
from .presets import PRESETS, model_layers
from .runner import ExperimentConfig, compare, run, sweep_layers

__version__ = "0.1.0"

__all__ = [
    "BatchPlan", "BuildError", "ConfigError", "ContractError", "ControllerConfig",
    "ControllerState", "DataFormatError", "Dataset", "EpochRecord", "ExperimentConfig",
    "GatePlan", "HistogramSet", "LayerGates", "LayerSpec", "Network", "PRESETS", "Phase",
    "PhaseController", "PhaseDecision", "SgdConfig", "SgdState", "ShapeError",
    "TrainingDivergedError", "UpdateCounts", "UpdateLedger", "Variant",
    "accuracy_percent", "batches", "build_network", "compare", "detect_initial_epoch",
    "gate_plan_for", "load_cifar10", "load_idx", "load_parameters", "load_snapshot",
    "lr_at_epoch", "model_layers", "predicted_updates", "predicted_updates_all_biases",
    "reduction_percent", "rolling_std", "run", "save_snapshot", "sgd_step",
    "snapshot_histogram", "softmax_cross_entropy", "sweep_layers", "synthetic_dataset",
]
