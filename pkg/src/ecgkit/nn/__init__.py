"""From-scratch neural-network engine: layers, optimizer, training, I/O."""

from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool1d,
    ReLU,
    softmax_xent,
    xent_grad,
)
from .network import (
    ARCH_BILSTM,
    ARCH_CNN,
    BilstmConfig,
    CnnConfig,
    Network,
    build_bilstm,
    build_cnn,
    forward_probs,
    predict,
    softmax,
)
from .optim import Adam, TrainConfig, adam_step
from .recurrent import BiLstm
from .serialize import load_model, save_model
from .training import History, evaluate_model, train_bilstm, train_cnn

__all__ = [
    "ARCH_BILSTM",
    "ARCH_CNN",
    "Adam",
    "BatchNorm1d",
    "BiLstm",
    "BilstmConfig",
    "CnnConfig",
    "Conv1d",
    "Dense",
    "Dropout",
    "Flatten",
    "History",
    "Layer",
    "MaxPool1d",
    "Network",
    "ReLU",
    "TrainConfig",
    "adam_step",
    "build_bilstm",
    "build_cnn",
    "evaluate_model",
    "forward_probs",
    "load_model",
    "predict",
    "save_model",
    "softmax",
    "softmax_xent",
    "train_bilstm",
    "train_cnn",
    "xent_grad",
]
