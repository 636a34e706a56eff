"""Context-aware self-attentive joint intent classification and slot labeling."""

from .data import (
    Conversation,
    Dataset,
    Turn,
    Vocabularies,
    generate_synthetic,
    load_conversational_jsonl,
    load_flat_icsl,
    make_context_window,
    split_dataset,
    tokenize,
    write_conversational_jsonl,
)
from .model import (
    Hyperparams,
    JointNLUModel,
    SignalFlags,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    MetricsReport,
    evaluate,
    gradient_check,
    run_ablation,
    train,
    train_seeds,
)

__version__ = "0.1.0"

__all__ = [
    "Conversation",
    "Dataset",
    "Turn",
    "Vocabularies",
    "generate_synthetic",
    "load_conversational_jsonl",
    "load_flat_icsl",
    "make_context_window",
    "split_dataset",
    "tokenize",
    "write_conversational_jsonl",
    "Hyperparams",
    "JointNLUModel",
    "SignalFlags",
    "load_checkpoint",
    "save_checkpoint",
    "MetricsReport",
    "evaluate",
    "gradient_check",
    "run_ablation",
    "train",
    "train_seeds",
    "__version__",
]
