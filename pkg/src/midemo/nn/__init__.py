"""Minimal sequential network engine: layers, MSE, Adam, gradient checking."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .layers import (AdaptiveAvgPool, BatchNorm2d, Conv2d, Dense, Dropout, LayerSpec,
                     MaxPool2d, ReLU)
from .losses import mse, mse_grad
from .network import Network, Tape
from .optim import AdamState, adam_step

__all__ = [
    "AdaptiveAvgPool", "AdamState", "BatchNorm2d", "Checkpoint", "Conv2d", "Dense",
    "Dropout", "GradCheckReport", "LayerSpec", "MaxPool2d", "Network", "ReLU", "Tape",
    "adam_step", "grad_check", "load_checkpoint", "mse", "mse_grad", "save_checkpoint",
]
