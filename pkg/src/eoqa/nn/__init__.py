"""Minimal float64 NN engine: fixed layer menu, SGD, reference-grade gradients."""

from .layers import (Conv3x3, GlobalAvgPool, Linear, MaxPool2, Param,
                     PixelShuffle, ReLU, ResidualBlock, Sequential, Softmax,
                     build_model)
from .losses import bce_loss, l1_loss, l2_loss
from .optim import SGD
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Param", "Conv3x3", "ReLU", "MaxPool2", "GlobalAvgPool", "Linear",
    "Softmax", "PixelShuffle", "ResidualBlock", "Sequential", "build_model",
    "l1_loss", "l2_loss", "bce_loss", "SGD",
    "save_checkpoint", "load_checkpoint",
]
