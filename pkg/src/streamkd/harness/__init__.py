from .config import RunConfig, apply_overrides, load_config, save_config
from .loop import RunRecord, Trainer, run_experiment
from .plots import emit_plots, sweep_grid_plot
from .sweep import sweep

__all__ = [
    "RunConfig", "RunRecord", "Trainer", "apply_overrides", "emit_plots",
    "load_config", "run_experiment", "save_config", "sweep", "sweep_grid_plot",
]
