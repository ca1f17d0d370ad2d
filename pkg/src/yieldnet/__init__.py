"""Hybrid CNN-RNN county crop-yield forecasting toolkit.

Submodules: ``autodiff`` (taped reverse-mode engine), ``model`` (CNN-RNN and
DFNN networks), ``training`` (Adam loop), ``baselines`` (LASSO, random
forest, Average), ``data`` (ingestion, preprocessing, synthetic generator),
``attribution`` (guided backprop importance), ``experiments`` (protocols and
metrics), ``cli`` (command-line entry point), ``kernels`` (compiled/numpy
hot kernels).
"""

from .model import CnnRnnConfig, CnnRnnModel, build_cnn_rnn, cnn_rnn_forward
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CnnRnnConfig",
    "CnnRnnModel",
    "TrainConfig",
    "build_cnn_rnn",
    "cnn_rnn_forward",
    "train",
]
