from .config import ABLATIONS, POPULATIONS, RunSpec, load_config, load_spec, output_root, spec_from_dict
from .experiments import desk_comparison, generalization
from .runs import (
    ablate,
    emit_plot_data,
    evaluate,
    late_variance,
    run_evaluation,
    run_training,
    spec_from_meta,
    sweep,
    train_seed,
)

__all__ = [
    "ABLATIONS",
    "POPULATIONS",
    "RunSpec",
    "ablate",
    "desk_comparison",
    "emit_plot_data",
    "evaluate",
    "generalization",
    "late_variance",
    "load_config",
    "load_spec",
    "output_root",
    "run_evaluation",
    "run_training",
    "spec_from_dict",
    "spec_from_meta",
    "sweep",
    "train_seed",
]
