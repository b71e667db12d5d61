"""Lightweight GRU vehicle-dynamics model with its signal pipeline and evaluation."""
__version__ = "0.1.0"

from .data import Run, WindowedDataset, concat_runs, filter_run, load_run, make_windows, split_dataset
from .evaluation import noise_sweep, one_step_eval
from .nn import VemoArchitecture, VemoParams, load_checkpoint, save_checkpoint, vemo_forward
from .signal import ScalingTable, apply_zero_phase, design_butterworth_lowpass, welch_psd
from .train import TrainConfig, fit

__all__ = [
    "Run",
    "WindowedDataset",
    "concat_runs",
    "filter_run",
    "load_run",
    "make_windows",
    "split_dataset",
    "noise_sweep",
    "one_step_eval",
    "VemoArchitecture",
    "VemoParams",
    "load_checkpoint",
    "save_checkpoint",
    "vemo_forward",
    "ScalingTable",
    "apply_zero_phase",
    "design_butterworth_lowpass",
    "welch_psd",
    "TrainConfig",
    "fit",
]
