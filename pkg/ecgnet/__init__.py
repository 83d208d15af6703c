"""SE-VGG-LSTM heartbeat classification for single-lead ECG segments."""

__version__ = "0.1.0"

# Import user-facing classes and functions
from .data import (
    Dataset,
    label_scheme,
    load_labeled_records,
    load_record,
    normalize,
    segment,
    synthesize_records,
)
from .models.sevgg_lstm import ModelConfig, build_model, forward, predict
from .models.checkpoint import load_checkpoint, save_checkpoint
from .training import TrainConfig, kfold_split, oversample, run_cross_validation
from .metrics import build_report, confusion_matrix, render_report
